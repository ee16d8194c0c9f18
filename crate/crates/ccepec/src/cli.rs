//! Command-line driver.
//!
//! Every run writes to `<out>/<run-id>/`. Exit codes: 0 success (including
//! a non-converged equilibrium, which is flagged in `result.json`), 2 bad
//! configuration or input, 3 infeasible model, 4 solver failure.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use ccepec_core::benchmark::{
    build_benchmark, compare_expansion, solve_benchmark, BenchmarkOptions, ExpansionSummary,
};
use ccepec_core::data::{apply_retirement, ActorPolicy, GridModel, Topology};
use ccepec_core::hedging::{run_ph, Actor, PhOptions};
use ccepec_core::market::{build_market_lp, build_offers, RivalView};
use ccepec_core::mpec::{build_mpec, finish_mpec, solve_mpec, ActorPlan, MpecOptions};
use ccepec_core::solver::lpformat::{parse_lp, write_lp, write_solution};
use ccepec_core::solver::{BnbOptions, SolveStats, SolveStatus};
use ccepec_core::validation::{audit_solution, monte_carlo_cc_check, AuditReport, CcReport};
use ccepec_core::Error;

use crate::backend::{Backend, StdClock, Threaded};
use crate::{io, isone, output};

#[derive(Debug, Parser)]
#[command(
    name = "ccepec",
    version,
    about = "Chance-constrained strategic expansion planning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one state's bilevel program against fixed rivals.
    RunMpec(RunArgs),
    /// Solve the equilibrium of all states by progressive hedging.
    RunEpec(RunArgs),
    /// Solve the centralized planning benchmark.
    RunBenchmark(RunArgs),
    /// Monte Carlo and feasibility checks of a stored result.
    Validate(RunArgs),
    /// Write a built program in LP format.
    Export(RunArgs),
    /// Solve an LP-format file with the built-in solver and write a
    /// solution file (usable as an external solver command).
    SolveLp { lp: PathBuf, sol: PathBuf },
}

/// Flags shared by the run commands; each may also come from `--config`.
#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunArgs {
    /// TOML or JSON run configuration; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Grid file or CSV directory, or `isone` for the bundled case.
    #[arg(long)]
    pub grid: Option<String>,
    /// Policy file (defaults to the bundled policies with `--grid isone`).
    #[arg(long)]
    pub policies: Option<PathBuf>,
    /// Retirement scenario name or JSON file.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Acting state.
    #[arg(long)]
    pub state: Option<String>,
    /// Restrict the equilibrium or benchmark to these states (comma list).
    #[arg(long, value_delimiter = ',')]
    pub states: Option<Vec<String>>,
    /// Hour window `START:LEN`, hours counted from 1.
    #[arg(long)]
    pub hours: Option<String>,
    /// Representative days to keep (comma list of ids).
    #[arg(long, value_delimiter = ',')]
    pub days: Option<Vec<String>>,
    /// `builtin` or `external`.
    #[arg(long)]
    pub backend: Option<String>,
    /// External solver command template with `{lp}` and `{sol}`.
    #[arg(long)]
    pub solver_command: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub run_id: Option<String>,
    /// Price-expansion bits K.
    #[arg(long)]
    pub bits: Option<usize>,
    /// Progressive hedging termination tolerance.
    #[arg(long)]
    pub eps: Option<f64>,
    #[arg(long)]
    pub rho_g: Option<f64>,
    #[arg(long)]
    pub rho_lambda: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Concurrent subproblem solves.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(long)]
    pub gap: Option<f64>,
    #[arg(long)]
    pub node_limit: Option<usize>,
    /// Seconds per branch-and-bound solve.
    #[arg(long)]
    pub time_limit: Option<f64>,
    /// Monte Carlo seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Stored result to validate (`result.json` or its directory).
    #[arg(long)]
    pub result: Option<PathBuf>,
    /// Program to export: `mpec`, `benchmark` or `market`.
    #[arg(long)]
    pub program: Option<String>,
    /// Expansion CSV to compare a benchmark against; states missing from it
    /// are left out of the comparison.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

impl RunArgs {
    /// Fill unset flags from the config file, if any.
    fn resolve(self) -> Result<RunArgs> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let text =
            fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let base: RunArgs = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(self.over(base))
    }

    fn over(self, base: RunArgs) -> RunArgs {
        macro_rules! pick {
            ($($f:ident),*) => { RunArgs { config: self.config, $($f: self.$f.or(base.$f)),* } };
        }
        pick!(
            grid,
            policies,
            scenario,
            state,
            states,
            hours,
            days,
            backend,
            solver_command,
            out,
            run_id,
            bits,
            eps,
            rho_g,
            rho_lambda,
            max_iter,
            jobs,
            gap,
            node_limit,
            time_limit,
            seed,
            samples,
            result,
            program,
            compare
        )
    }
}

/// The inputs a result was computed from, stored so `validate` can rebuild
/// the same model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunInputs {
    pub grid: String,
    pub policies: Option<PathBuf>,
    pub scenario: String,
    pub hours: Option<String>,
    pub days: Option<Vec<String>>,
    pub bits: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StoredResult {
    pub command: String,
    pub inputs: RunInputs,
    pub status: Option<SolveStatus>,
    pub converged: Option<bool>,
    pub iterations: Option<usize>,
    pub epsilon: Option<f64>,
    pub objective: Option<f64>,
    pub best_bound: Option<f64>,
    pub stats: Option<SolveStats>,
    pub states: Vec<String>,
    pub plans: Vec<ActorPlan>,
    pub warnings: Vec<String>,
}

/// An error tagged with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: anyhow::Error,
}

fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::Infeasible(_) => 3,
                Error::Solver(_) => 4,
                _ => 2,
            };
        }
    }
    2
}

/// Parse `args` and run; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            f.code
        }
    }
}

pub fn run(command: Command) -> std::result::Result<(), Failure> {
    let r = match command {
        Command::RunMpec(a) => a.resolve().and_then(|a| cmd_run_mpec(&a)),
        Command::RunEpec(a) => a.resolve().and_then(|a| cmd_run_epec(&a)),
        Command::RunBenchmark(a) => a.resolve().and_then(|a| cmd_run_benchmark(&a)),
        Command::Validate(a) => a.resolve().and_then(|a| cmd_validate(&a)),
        Command::Export(a) => a.resolve().and_then(|a| cmd_export(&a)),
        Command::SolveLp { lp, sol } => cmd_solve_lp(&lp, &sol),
    };
    r.map_err(|error| Failure {
        code: exit_code(&error),
        error,
    })
}

struct Loaded {
    grid: GridModel,
    policies: Vec<ActorPolicy>,
    inputs: RunInputs,
}

fn parse_hours(window: &str) -> Result<(usize, usize)> {
    let (a, b) = window
        .split_once(':')
        .ok_or_else(|| Error::Invalid(format!("hour window `{window}` is not START:LEN")))?;
    let start: usize = a
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("bad window start `{a}`")))?;
    let len: usize = b
        .trim()
        .parse()
        .map_err(|_| Error::Invalid(format!("bad window length `{b}`")))?;
    if start == 0 {
        return Err(Error::Invalid("hours count from 1".into()).into());
    }
    Ok((start - 1, len))
}

fn load(inputs: RunInputs) -> Result<Loaded> {
    let bundled = inputs.grid == "isone";
    let grid = if bundled {
        isone::grid()?
    } else {
        io::load_grid(Path::new(&inputs.grid))?
    };
    let policies = match (&inputs.policies, bundled) {
        (Some(p), _) => io::load_policies(p)?,
        (None, true) => isone::policies()?,
        (None, false) => return Err(Error::Invalid("--policies is required".into()).into()),
    };
    let scenario = io::load_scenario(&grid, &inputs.scenario)?;
    let mut grid = apply_retirement(&grid, &scenario)?;
    if inputs.hours.is_some() || inputs.days.is_some() {
        let (start, len) = match &inputs.hours {
            Some(h) => parse_hours(h)?,
            None => (0, grid.horizon),
        };
        let days: Vec<usize> = match &inputs.days {
            Some(ids) => ids
                .iter()
                .map(|id| {
                    grid.rep_days
                        .iter()
                        .position(|d| &d.id == id)
                        .ok_or_else(|| Error::UnknownId {
                            kind: "representative day",
                            id: id.clone(),
                        })
                })
                .collect::<std::result::Result<_, _>>()?,
            None => (0..grid.rep_days.len()).collect(),
        };
        grid = grid.window(start, len, &days)?;
    }
    Ok(Loaded {
        grid,
        policies,
        inputs,
    })
}

fn inputs_of(a: &RunArgs) -> Result<RunInputs> {
    Ok(RunInputs {
        grid: a
            .grid
            .clone()
            .ok_or_else(|| Error::Invalid("--grid is required".into()))?,
        policies: a.policies.clone(),
        scenario: a.scenario.clone().unwrap_or_else(|| "basecase".into()),
        hours: a.hours.clone(),
        days: a.days.clone(),
        bits: a.bits.unwrap_or(10),
    })
}

fn policy_for<'p>(
    policies: &'p [ActorPolicy],
    topo: &Topology<'_>,
    state: &str,
) -> Result<&'p ActorPolicy> {
    topo.state_index(state)?;
    policies.iter().find(|p| p.state == state).ok_or_else(|| {
        Error::UnknownId {
            kind: "policy for state",
            id: state.into(),
        }
        .into()
    })
}

fn selected_policies(
    l: &Loaded,
    topo: &Topology<'_>,
    states: &Option<Vec<String>>,
) -> Result<Vec<ActorPolicy>> {
    let names: Vec<String> = match states {
        Some(s) => s.clone(),
        None => l.grid.states.clone(),
    };
    names
        .iter()
        .map(|s| policy_for(&l.policies, topo, s).cloned())
        .collect()
}

fn bnb_options(a: &RunArgs) -> BnbOptions {
    let d = BnbOptions::default();
    BnbOptions {
        gap: a.gap.unwrap_or(d.gap),
        node_limit: a.node_limit.unwrap_or(d.node_limit),
        time_limit: a.time_limit.or(d.time_limit),
        ..d
    }
}

fn backend(a: &RunArgs) -> Result<Backend> {
    Ok(Backend::from_name(
        a.backend.as_deref().unwrap_or("builtin"),
        a.solver_command.clone(),
    )?)
}

fn run_dir(a: &RunArgs, default_id: String) -> Result<PathBuf> {
    let dir = a
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out"))
        .join(a.run_id.clone().unwrap_or(default_id));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write_audits(dir: &Path, states: &[String], audits: &[AuditReport]) -> Result<()> {
    let map: std::collections::BTreeMap<&str, &AuditReport> =
        states.iter().map(String::as_str).zip(audits).collect();
    output::write_json(&dir.join("audit.json"), &map)
}

fn cmd_run_mpec(a: &RunArgs) -> Result<()> {
    let state = a
        .state
        .clone()
        .ok_or_else(|| Error::Invalid("--state is required".into()))?;
    let l = load(inputs_of(a)?)?;
    let topo = l.grid.topology()?;
    let policy = policy_for(&l.policies, &topo, &state)?;
    let opts = MpecOptions {
        bits: l.inputs.bits,
        ..Default::default()
    };
    let inst = build_mpec(&topo, policy, &opts)?;
    let bnb = bnb_options(a);
    let sol = match backend(a)? {
        Backend::Builtin => solve_mpec(&inst, &topo, policy, &bnb, &StdClock::start())?,
        ext => {
            let r = ext.solve(&inst.program, &bnb)?;
            finish_mpec(&inst, &topo, policy, r)?
        }
    };
    let Some(plan) = sol.plan else {
        return Err(match sol.status {
            SolveStatus::Infeasible => {
                Error::Infeasible(format!("the program for `{state}` has no feasible point"))
            }
            s => Error::Solver(format!("no solution for `{state}` ({s:?})")),
        }
        .into());
    };
    let dir = run_dir(a, format!("mpec-{state}-{}", l.inputs.scenario))?;
    let audit = audit_solution(&topo, policy, &plan, &RivalView::default(), 1e-6)?;
    if !audit.pass {
        log::warn!("audit failed for `{state}`");
    }
    let summary =
        ExpansionSummary::from_capacity(&topo, &l.inputs.scenario, &plan.capacity, &[plan.state]);
    let mut stats = sol.stats.clone();
    let seconds = stats.wall_time;
    stats.wall_time = 0.0;
    output::write_expansion(&dir.join("expansion.csv"), &summary)?;
    output::write_costs(&dir.join("costs.csv"), &topo, std::slice::from_ref(&plan))?;
    output::write_market(&dir, &topo, std::slice::from_ref(&plan))?;
    fs::write(
        dir.join("timing.csv"),
        format!("state,seconds,nodes\n{state},{seconds},{}\n", stats.nodes),
    )?;
    write_audits(
        &dir,
        std::slice::from_ref(&state),
        std::slice::from_ref(&audit),
    )?;
    let stored = StoredResult {
        command: "run-mpec".into(),
        inputs: l.inputs.clone(),
        status: Some(sol.status),
        converged: None,
        iterations: None,
        epsilon: None,
        objective: Some(sol.objective),
        best_bound: Some(sol.best_bound),
        stats: Some(stats),
        states: vec![state.clone()],
        plans: vec![plan],
        warnings: Vec::new(),
    };
    output::write_json(&dir.join("result.json"), &stored)?;
    println!(
        "{state}: {:?}, objective {}, results in {}",
        sol.status,
        sol.objective,
        dir.display()
    );
    Ok(())
}

fn cmd_run_epec(a: &RunArgs) -> Result<()> {
    let l = load(inputs_of(a)?)?;
    let topo = l.grid.topology()?;
    let policies = selected_policies(&l, &topo, &a.states)?;
    if policies.len() < 2 {
        bail!(Error::Invalid(
            "an equilibrium needs at least two states".into()
        ));
    }
    let opts = MpecOptions {
        bits: l.inputs.bits,
        ..Default::default()
    };
    let actors = policies
        .iter()
        .map(|p| {
            Ok(Actor {
                instance: build_mpec(&topo, p, &opts)?,
                policy: p.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let d = PhOptions::default();
    let ph = PhOptions {
        rho_g: a.rho_g.unwrap_or(d.rho_g),
        rho_lambda: a.rho_lambda.unwrap_or(d.rho_lambda),
        tolerance: a.eps.unwrap_or(d.tolerance),
        max_iterations: a.max_iter.unwrap_or(d.max_iterations),
        solver: bnb_options(a),
        ..d
    };
    let exec = Threaded::new(a.jobs.unwrap_or_else(Threaded::default_jobs), backend(a)?);
    let r = run_ph(&topo, &actors, &ph, &exec)?;
    let states: Vec<String> = policies.iter().map(|p| p.state.clone()).collect();
    let names: Vec<&str> = states.iter().map(String::as_str).collect();
    let dir = run_dir(a, format!("epec-{}", l.inputs.scenario))?;
    let mut capacity = vec![0.0; topo.n_units()];
    for p in &r.plans {
        for (c, v) in capacity.iter_mut().zip(&p.capacity) {
            *c += v;
        }
    }
    let own: Vec<usize> = r.plans.iter().map(|p| p.state).collect();
    let summary = ExpansionSummary::from_capacity(&topo, &l.inputs.scenario, &capacity, &own);
    let audits = actors
        .iter()
        .zip(&r.plans)
        .map(|(act, p)| {
            Ok(audit_solution(
                &topo,
                &act.policy,
                p,
                &RivalView::default(),
                1e-6,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    output::write_expansion(&dir.join("expansion.csv"), &summary)?;
    output::write_costs(&dir.join("costs.csv"), &topo, &r.plans)?;
    output::write_market(&dir, &topo, &r.plans)?;
    output::write_convergence(&dir.join("convergence.csv"), &names, &r.history)?;
    output::write_timing(&dir.join("timing.csv"), &names, &r.history)?;
    write_audits(&dir, &states, &audits)?;
    let mut warnings = r.state.warnings.clone();
    if !r.converged {
        warnings.push(format!(
            "not converged: epsilon {} after {} iterations",
            r.epsilon, r.iterations
        ));
    }
    let stored = StoredResult {
        command: "run-epec".into(),
        inputs: l.inputs.clone(),
        status: None,
        converged: Some(r.converged),
        iterations: Some(r.iterations),
        epsilon: Some(r.epsilon),
        objective: None,
        best_bound: None,
        stats: None,
        states,
        plans: r.plans,
        warnings,
    };
    output::write_json(&dir.join("result.json"), &stored)?;
    println!(
        "{} after {} iterations (epsilon {}), results in {}",
        if r.converged {
            "converged"
        } else {
            "NOT converged"
        },
        r.iterations,
        r.epsilon,
        dir.display()
    );
    Ok(())
}

fn cmd_run_benchmark(a: &RunArgs) -> Result<()> {
    let l = load(inputs_of(a)?)?;
    let topo = l.grid.topology()?;
    let policies = selected_policies(&l, &topo, &a.states)?;
    let inst = build_benchmark(&topo, &policies, &BenchmarkOptions::default())?;
    let r = solve_benchmark(&inst, &bnb_options(a))?;
    let dir = run_dir(a, format!("benchmark-{}", l.inputs.scenario))?;
    let own: Vec<usize> = policies
        .iter()
        .map(|p| topo.state_index(&p.state))
        .collect::<std::result::Result<_, _>>()?;
    let summary = ExpansionSummary::from_capacity(&topo, &l.inputs.scenario, &r.capacity, &own);
    output::write_expansion(&dir.join("expansion.csv"), &summary)?;
    if let Some(other) = &a.compare {
        let mine = output::read_expansion(other)?;
        let mut shared = summary.clone();
        shared.by_state.retain(|s, _| mine.by_state.contains_key(s));
        let deltas = compare_expansion(&mine, &shared)?;
        output::write_deltas(&dir.join("comparison.csv"), &deltas)?;
    }
    output::write_json(
        &dir.join("result.json"),
        &serde_json::json!({
            "command": "run-benchmark",
            "inputs": l.inputs,
            "status": r.status,
            "objective": r.objective,
            "capacity": r.capacity,
            "dispatch": r.dispatch,
            "reserve": r.reserve,
            "flows": r.flows,
            "prices": r.prices,
        }),
    )?;
    println!(
        "benchmark {:?}, objective {}, results in {}",
        r.status,
        r.objective,
        dir.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct Validation<'a> {
    state: &'a str,
    chance_constraints: CcReport,
    audit: AuditReport,
}

fn cmd_validate(a: &RunArgs) -> Result<()> {
    let path = a
        .result
        .clone()
        .ok_or_else(|| Error::Invalid("--result is required".into()))?;
    let file = if path.is_dir() {
        path.join("result.json")
    } else {
        path.clone()
    };
    let text = fs::read_to_string(&file).with_context(|| format!("reading {}", file.display()))?;
    let stored: StoredResult =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", file.display()))?;
    let mut inputs = stored.inputs.clone();
    if let Some(g) = &a.grid {
        inputs.grid = g.clone();
    }
    if a.policies.is_some() {
        inputs.policies = a.policies.clone();
    }
    let l = load(inputs)?;
    let topo = l.grid.topology()?;
    let n = a.samples.unwrap_or(100_000);
    let seed = a.seed.unwrap_or(1);
    let mut report = Vec::new();
    for (state, plan) in stored.states.iter().zip(&stored.plans) {
        let policy = policy_for(&l.policies, &topo, state)?;
        report.push(Validation {
            state,
            chance_constraints: monte_carlo_cc_check(&topo, plan, n, seed)?,
            audit: audit_solution(&topo, policy, plan, &RivalView::default(), 1e-6)?,
        });
    }
    let out_dir = match &a.out {
        Some(o) => o.clone(),
        None => file.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    fs::create_dir_all(&out_dir)?;
    let dest = out_dir.join("validation.json");
    output::write_json(&dest, &report)?;
    for v in &report {
        println!(
            "{}: max violation rate {} over {} samples, audit {}",
            v.state,
            v.chance_constraints.max_rate,
            n,
            if v.audit.pass { "passed" } else { "FAILED" }
        );
    }
    println!("written {}", dest.display());
    Ok(())
}

fn cmd_export(a: &RunArgs) -> Result<()> {
    let l = load(inputs_of(a)?)?;
    let topo = l.grid.topology()?;
    let which = a.program.clone().unwrap_or_else(|| "mpec".into());
    let (program, name) = match which.as_str() {
        "mpec" => {
            let state = a
                .state
                .clone()
                .ok_or_else(|| Error::Invalid("--state is required".into()))?;
            let policy = policy_for(&l.policies, &topo, &state)?;
            let opts = MpecOptions {
                bits: l.inputs.bits,
                ..Default::default()
            };
            (
                build_mpec(&topo, policy, &opts)?.program,
                format!("mpec-{state}.lp"),
            )
        }
        "benchmark" => {
            let policies = selected_policies(&l, &topo, &a.states)?;
            (
                build_benchmark(&topo, &policies, &BenchmarkOptions::default())?.program,
                "benchmark.lp".into(),
            )
        }
        "market" => {
            let offers = build_offers(&topo, None, 0, &|_, _| 0.0, &RivalView::default());
            (
                build_market_lp(&topo, &offers, 0)?.program,
                "market.lp".into(),
            )
        }
        other => bail!(Error::Invalid(format!("unknown program `{other}`"))),
    };
    let dir = run_dir(a, format!("export-{}", l.inputs.scenario))?;
    let dest = dir.join(name);
    fs::write(&dest, write_lp(&program)).with_context(|| format!("writing {}", dest.display()))?;
    println!("written {}", dest.display());
    Ok(())
}

fn cmd_solve_lp(lp: &Path, sol: &Path) -> Result<()> {
    let text = fs::read_to_string(lp).with_context(|| format!("reading {}", lp.display()))?;
    let program = parse_lp(&text)?;
    let r = Backend::Builtin.solve(&program, &BnbOptions::default())?;
    if !r.status.has_solution() {
        return Err(match r.status {
            SolveStatus::Infeasible => {
                anyhow!(Error::Infeasible("LP file has no feasible point".into()))
            }
            s => anyhow!(Error::Solver(format!("no solution ({s:?})"))),
        });
    }
    fs::write(sol, write_solution(&program, &r))
        .with_context(|| format!("writing {}", sol.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hour_windows() {
        assert_eq!(parse_hours("1:2").unwrap(), (0, 2));
        assert_eq!(parse_hours("13:4").unwrap(), (12, 4));
        assert!(parse_hours("0:2").is_err());
        assert!(parse_hours("3").is_err());
    }

    #[test]
    fn flags_override_config() {
        let base = RunArgs {
            grid: Some("a.json".into()),
            bits: Some(4),
            eps: Some(0.1),
            ..Default::default()
        };
        let flags = RunArgs {
            bits: Some(6),
            ..Default::default()
        };
        let r = flags.over(base);
        assert_eq!(r.grid.as_deref(), Some("a.json"));
        assert_eq!(r.bits, Some(6));
        assert_eq!(r.eps, Some(0.1));
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&anyhow!(Error::Infeasible("x".into()))), 3);
        assert_eq!(
            exit_code(&anyhow!(Error::Solver("x".into())).context("outer")),
            4
        );
        assert_eq!(exit_code(&anyhow!(Error::Invalid("x".into()))), 2);
        assert_eq!(exit_code(&anyhow!("io")), 2);
    }
}
