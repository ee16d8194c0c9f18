//! Equilibrium among several actors' MPECs by progressive hedging on the
//! shared market variables: dispatch `g` and prices `λ`.
//!
//! Each iteration solves every actor's MPEC with the objective augmented by
//! `−[m·x + (ρ/2)(x − x̄)²]` per hedged entry, averages the hedged values
//! with uniform weights, and moves the multipliers by `ρ(x − x̄)`. The
//! quadratic is replaced by its piecewise-linear interpolant so that the
//! subproblems stay mixed-integer conic.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ActorPolicy, Topology};
use crate::mpec::{price_taker_start, ActorPlan, MpecInstance};
use crate::solver::{branch_and_bound, BnbOptions, ConicProgram, Sense, SolveResult, VarId};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PhOptions {
    /// Penalty on dispatch entries.
    pub rho_g: f64,
    /// Penalty on price entries.
    pub rho_lambda: f64,
    /// Stop once ε falls to this value.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Segments of the piecewise-linear quadratic.
    pub breakpoints: usize,
    /// Scale of the quadratic term; 0 leaves only the multiplier term.
    pub proximal_weight: f64,
    /// Options for each subproblem solve.
    pub solver: BnbOptions,
}

impl Default for PhOptions {
    fn default() -> Self {
        PhOptions {
            rho_g: 0.7,
            rho_lambda: 0.7,
            tolerance: 0.03,
            max_iterations: 200,
            breakpoints: 8,
            proximal_weight: 1.0,
            solver: BnbOptions::default(),
        }
    }
}

/// Coordinator state between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhState {
    pub iteration: usize,
    /// Per actor, one multiplier per hedged entry (dispatch then prices).
    pub multipliers: Vec<Vec<f64>>,
    /// Consensus averages, same layout.
    pub consensus: Vec<f64>,
    /// Number of leading dispatch entries; the rest are prices.
    pub n_dispatch: usize,
    pub rho_g: f64,
    pub rho_lambda: f64,
    pub epsilon: Vec<f64>,
    pub warnings: Vec<String>,
}

impl PhState {
    pub fn rho(&self, k: usize) -> f64 {
        if k < self.n_dispatch {
            self.rho_g
        } else {
            self.rho_lambda
        }
    }
}

/// Zero multipliers for `n_actors` actors sharing `n_dispatch + n_price`
/// hedged entries.
pub fn ph_initialize(n_actors: usize, n_dispatch: usize, n_price: usize, options: &PhOptions) -> Result<PhState> {
    if n_actors < 2 {
        return Err(Error::Invalid(format!(
            "an equilibrium needs at least two actors, got {n_actors}"
        )));
    }
    for (what, r) in [("dispatch", options.rho_g), ("price", options.rho_lambda)] {
        if !(r >= 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("{what} penalty {r} must be finite and non-negative")));
        }
    }
    let mut warnings = Vec::new();
    if options.rho_g == 0.0 || options.rho_lambda == 0.0 {
        warnings.push(String::from(
            "a hedging penalty is zero: no pressure towards consensus on those entries",
        ));
    }
    let n = n_dispatch + n_price;
    Ok(PhState {
        iteration: 0,
        multipliers: vec![vec![0.0; n]; n_actors],
        consensus: vec![0.0; n],
        n_dispatch,
        rho_g: options.rho_g,
        rho_lambda: options.rho_lambda,
        epsilon: Vec::new(),
        warnings,
    })
}

/// Entry-wise mean over actors.
pub fn consensus_average(values: &[Vec<f64>]) -> Result<Vec<f64>> {
    let Some(first) = values.first() else {
        return Err(Error::Invalid("no values to average".into()));
    };
    let n = first.len();
    if values.iter().any(|v| v.len() != n) {
        return Err(Error::Shape("hedged vectors differ in length across actors".into()));
    }
    let k = values.len() as f64;
    Ok((0..n).map(|i| values.iter().map(|v| v[i]).sum::<f64>() / k).collect())
}

/// `m_s ← m_s + ρ(x_s − x̄)`, then advance the iteration counter.
pub fn update_multipliers(state: &mut PhState, values: &[Vec<f64>], average: &[f64]) -> Result<()> {
    if values.len() != state.multipliers.len() {
        return Err(Error::Shape(format!(
            "{} value vectors for {} actors",
            values.len(),
            state.multipliers.len()
        )));
    }
    for (m, x) in state.multipliers.iter_mut().zip(values) {
        if x.len() != m.len() || average.len() != m.len() {
            return Err(Error::Shape("hedged vector length changed".into()));
        }
        for k in 0..m.len() {
            let rho = if k < state.n_dispatch { state.rho_g } else { state.rho_lambda };
            m[k] += rho * (x[k] - average[k]);
        }
    }
    state.consensus = average.to_vec();
    state.iteration += 1;
    Ok(())
}

/// `Σ_s ‖x_s − x̄‖ / max(1, ‖x̄‖)`.
pub fn compute_tolerance(values: &[Vec<f64>], average: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|a| a * a).sum::<f64>());
    let dev: f64 = values
        .iter()
        .map(|x| norm(&mut x.iter().zip(average).map(|(a, b)| a - b)))
        .sum();
    if dev == 0.0 {
        return 0.0;
    }
    dev / norm(&mut average.iter().copied()).max(1.0)
}

/// Auxiliary variables of the penalty added to a program.
#[derive(Debug, Clone, PartialEq)]
pub struct Penalty {
    /// Epigraph variable of `(x − x̄)²` per hedged entry; `None` for fixed
    /// variables.
    pub q: Vec<Option<VarId>>,
    /// `(slope, intercept)` in `d = x − x̄` of each segment, per entry.
    pub segments: Vec<Vec<(f64, f64)>>,
}

impl Penalty {
    /// Epigraph values that go with a point `x` of the original variables.
    pub fn fill(&self, hedged: &[VarId], average: &[f64], x: &mut Vec<f64>, n_vars: usize) {
        x.resize(n_vars, 0.0);
        for (k, q) in self.q.iter().enumerate() {
            if let Some(q) = q {
                let d = x[hedged[k].0] - average[k];
                x[q.0] = self.segments[k]
                    .iter()
                    .map(|&(a, b)| a * d + b)
                    .fold(0.0, f64::max);
            }
        }
    }
}

/// Add `−Σ_k [m_k·x_k + (ρ_k/2)·q_k]` to a maximization objective with
/// `q_k` above the secants of `(x_k − x̄_k)²` on `segments` equal pieces
/// spanning the variable's bounds symmetrically around `x̄_k`.
pub fn add_penalty(
    program: &mut ConicProgram,
    hedged: &[VarId],
    multipliers: &[f64],
    average: &[f64],
    rho: &dyn Fn(usize) -> f64,
    segments: usize,
    proximal_weight: f64,
) -> Result<Penalty> {
    if hedged.len() != multipliers.len() || hedged.len() != average.len() {
        return Err(Error::Shape("penalty vectors differ in length".into()));
    }
    if segments < 2 || segments % 2 != 0 {
        return Err(Error::Invalid(format!("{segments} penalty segments; need an even count ≥ 2")));
    }
    let sign = match program.objective.sense {
        crate::solver::ObjSense::Maximize => 1.0,
        crate::solver::ObjSense::Minimize => -1.0,
    };
    let half = (segments / 2) as f64;
    let mut pen = Penalty {
        q: Vec::with_capacity(hedged.len()),
        segments: Vec::with_capacity(hedged.len()),
    };
    for (k, &v) in hedged.iter().enumerate() {
        program.add_objective(v, -sign * multipliers[k]);
        let weight = 0.5 * rho(k) * proximal_weight;
        let var = &program.variables[v.0];
        let (lo, hi) = (var.lower, var.upper);
        let xbar = average[k];
        let mut reach = (xbar - lo).max(hi - xbar);
        if !reach.is_finite() {
            reach = libm::fabs(xbar).max(1.0);
        }
        if weight == 0.0 || reach <= 0.0 || lo == hi {
            pen.q.push(None);
            pen.segments.push(Vec::new());
            continue;
        }
        let h = reach / half;
        let name = format!("phq[{}]", var.name);
        let q = program.add_var(name.clone(), 0.0, f64::INFINITY);
        let mut segs = Vec::with_capacity(segments);
        for j in 0..segments {
            let d1 = (j as f64 - half) * h;
            let d2 = d1 + h;
            // secant of d² through d1, d2: (d1 + d2)·d − d1·d2
            let (a, b) = (d1 + d2, -d1 * d2);
            // q − a·x ≥ b − a·x̄
            program.add_row(
                format!("{name}#{}", j + 1),
                [(q, 1.0), (v, -a)],
                Sense::Ge,
                b - a * xbar,
            );
            segs.push((a, b));
        }
        program.add_objective(q, -sign * weight);
        pen.q.push(Some(q));
        pen.segments.push(segs);
    }
    Ok(pen)
}

/// One subproblem solve request.
pub struct SolveJob<'a> {
    pub program: &'a ConicProgram,
    pub options: &'a BnbOptions,
}

/// Runs a batch of independent subproblem solves. Results come back in job
/// order.
pub trait Executor {
    fn solve_all(&self, jobs: &[SolveJob<'_>]) -> Vec<Result<SolveResult>>;
}

/// Solves the jobs one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn solve_all(&self, jobs: &[SolveJob<'_>]) -> Vec<Result<SolveResult>> {
        jobs.iter().map(|j| branch_and_bound(j.program, j.options)).collect()
    }
}

/// An actor of the equilibrium: its built MPEC and its policy.
#[derive(Debug, Clone)]
pub struct Actor {
    pub instance: MpecInstance,
    pub policy: ActorPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub epsilon: f64,
    /// Unpenalized MPEC objective per actor.
    pub objectives: Vec<f64>,
    pub solve_seconds: Vec<f64>,
    pub nodes: Vec<usize>,
    /// Largest |Σ_s m_s| over hedged entries after this iteration's update.
    pub multiplier_imbalance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub converged: bool,
    pub iterations: usize,
    pub epsilon: f64,
    pub state: PhState,
    pub plans: Vec<ActorPlan>,
    /// Final solution vectors of each actor's own program.
    pub values: Vec<Vec<f64>>,
    pub history: Vec<IterationRecord>,
}

fn solve_round(
    actors: &[Actor],
    programs: &[ConicProgram],
    starts: Vec<Option<Vec<f64>>>,
    options: &PhOptions,
    executor: &dyn Executor,
    iteration: usize,
) -> Result<Vec<SolveResult>> {
    let opts: Vec<BnbOptions> = starts
        .into_iter()
        .map(|s| BnbOptions {
            initial: s,
            ..options.solver.clone()
        })
        .collect();
    let jobs: Vec<SolveJob<'_>> = programs
        .iter()
        .zip(&opts)
        .map(|(program, options)| SolveJob { program, options })
        .collect();
    let results = executor.solve_all(&jobs);
    let mut out = Vec::with_capacity(results.len());
    for (a, r) in actors.iter().zip(results) {
        let r = r.map_err(|e| Error::Solver(format!("actor `{}`, iteration {iteration}: {e}", a.policy.state)))?;
        if !r.status.has_solution() {
            return Err(Error::Infeasible(format!(
                "actor `{}`, iteration {iteration}: subproblem ended {:?} without a solution",
                a.policy.state, r.status
            )));
        }
        out.push(r);
    }
    Ok(out)
}

fn hedged_values(actor: &Actor, x: &[f64]) -> Vec<f64> {
    actor.instance.hedged().iter().map(|v| x[v.0]).collect()
}

/// Solve the equilibrium by progressive hedging.
pub fn run_ph(
    topo: &Topology<'_>,
    actors: &[Actor],
    options: &PhOptions,
    executor: &dyn Executor,
) -> Result<EquilibriumResult> {
    let n_dispatch = topo.n_units() * topo.horizon() * topo.n_days();
    let n_price = topo.n_nodes() * topo.horizon() * topo.n_days();
    let mut state = ph_initialize(actors.len(), n_dispatch, n_price, options)?;
    for a in actors {
        if a.instance.hedged().len() != n_dispatch + n_price {
            return Err(Error::Shape(format!(
                "actor `{}` does not embed the full market",
                a.policy.state
            )));
        }
    }
    let hedged: Vec<Vec<VarId>> = actors.iter().map(|a| a.instance.hedged()).collect();

    // independent solves seed the consensus
    let mut starts = Vec::with_capacity(actors.len());
    for a in actors {
        starts.push(price_taker_start(&a.instance, topo, &a.policy)?);
    }
    let programs: Vec<ConicProgram> = actors.iter().map(|a| a.instance.program.clone()).collect();
    let results = solve_round(actors, &programs, starts, options, executor, 1)?;
    let mut values: Vec<Vec<f64>> = results.iter().map(|r| r.values.clone()).collect();
    let mut history = Vec::new();
    let record = |state: &PhState, results: &[SolveResult], values: &[Vec<f64>]| IterationRecord {
        iteration: state.iteration,
        epsilon: *state.epsilon.last().unwrap_or(&f64::NAN),
        objectives: actors
            .iter()
            .zip(values)
            .map(|(a, x)| a.instance.program.objective_value(x))
            .collect(),
        solve_seconds: results.iter().map(|r| r.stats.wall_time).collect(),
        nodes: results.iter().map(|r| r.stats.nodes).collect(),
        multiplier_imbalance: (0..state.consensus.len())
            .map(|k| libm::fabs(state.multipliers.iter().map(|m| m[k]).sum::<f64>()))
            .fold(0.0, f64::max),
    };
    let step = |state: &mut PhState, values: &[Vec<f64>]| -> Result<f64> {
        let h: Vec<Vec<f64>> = actors.iter().zip(values).map(|(a, x)| hedged_values(a, x)).collect();
        let avg = consensus_average(&h)?;
        update_multipliers(state, &h, &avg)?;
        let eps = compute_tolerance(&h, &avg);
        state.epsilon.push(eps);
        Ok(eps)
    };
    let mut eps = step(&mut state, &values)?;
    history.push(record(&state, &results, &values));

    while !(eps <= options.tolerance) && state.iteration < options.max_iterations {
        let mut programs = Vec::with_capacity(actors.len());
        let mut starts = Vec::with_capacity(actors.len());
        for (s, a) in actors.iter().enumerate() {
            let mut p = a.instance.program.clone();
            let pen = add_penalty(
                &mut p,
                &hedged[s],
                &state.multipliers[s],
                &state.consensus,
                &|k| state.rho(k),
                options.breakpoints,
                options.proximal_weight,
            )?;
            let mut x = values[s].clone();
            pen.fill(&hedged[s], &state.consensus, &mut x, p.n_vars());
            programs.push(p);
            starts.push(Some(x));
        }
        let iteration = state.iteration + 1;
        let results = solve_round(actors, &programs, starts, options, executor, iteration)?;
        values = actors
            .iter()
            .zip(&results)
            .map(|(a, r)| r.values[..a.instance.program.n_vars()].to_vec())
            .collect();
        eps = step(&mut state, &values)?;
        history.push(record(&state, &results, &values));
    }

    let plans = actors
        .iter()
        .zip(&values)
        .map(|(a, x)| a.instance.plan(topo, &a.policy, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(EquilibriumResult {
        converged: eps <= options.tolerance,
        iterations: state.iteration,
        epsilon: eps,
        state,
        plans,
        values,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::ObjSense;

    #[test]
    fn initialize_shapes_and_errors() {
        let s = ph_initialize(2, 3, 2, &PhOptions::default()).unwrap();
        assert_eq!(s.multipliers, vec![vec![0.0; 5]; 2]);
        assert_eq!(s.iteration, 0);
        assert!(s.warnings.is_empty());
        let zero = PhOptions {
            rho_g: 0.0,
            ..Default::default()
        };
        assert_eq!(ph_initialize(2, 1, 1, &zero).unwrap().warnings.len(), 1);
        assert!(ph_initialize(1, 1, 1, &PhOptions::default()).is_err());
    }

    #[test]
    fn averages() {
        assert_eq!(consensus_average(&[vec![2.0], vec![4.0]]).unwrap(), vec![3.0]);
        assert_eq!(consensus_average(&[vec![1.0, 5.0], vec![1.0, 5.0]]).unwrap(), vec![1.0, 5.0]);
        assert_eq!(consensus_average(&[vec![0.0], vec![0.0], vec![6.0]]).unwrap(), vec![2.0]);
        assert!(consensus_average(&[vec![0.0], vec![0.0, 1.0]]).is_err());
    }

    #[test]
    fn multiplier_update_and_tolerance() {
        let mut s = ph_initialize(2, 1, 0, &PhOptions::default()).unwrap();
        let x = vec![vec![1.0], vec![3.0]];
        let avg = consensus_average(&x).unwrap();
        update_multipliers(&mut s, &x, &avg).unwrap();
        assert!((s.multipliers[0][0] + 0.7).abs() < 1e-12);
        assert!((s.multipliers[1][0] - 0.7).abs() < 1e-12);
        assert_eq!(s.iteration, 1);
        assert_eq!(compute_tolerance(&x, &avg), 1.0);
        let same = vec![vec![2.0], vec![2.0]];
        update_multipliers(&mut s, &same, &[2.0]).unwrap();
        assert!((s.multipliers[0][0] + 0.7).abs() < 1e-12);
        assert_eq!(compute_tolerance(&same, &[2.0]), 0.0);
    }

    #[test]
    fn scalar_penalty_minimizer_is_average_minus_m_over_rho() {
        // max −m·x − (ρ/2)(x − x̄)² over x ∈ [0, 8]; x̄ = 4, ρ = 1, m = 1
        // gives x = 3, a breakpoint of the interpolant.
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, 8.0);
        let pen = add_penalty(&mut p, &[x], &[1.0], &[4.0], &|_| 1.0, 8, 1.0).unwrap();
        let r = branch_and_bound(&p, &BnbOptions::default()).unwrap();
        assert!((r.values[x.0] - 3.0).abs() < 1e-9);
        let q = pen.q[0].unwrap();
        assert!((r.values[q.0] - 1.0).abs() < 1e-9);
        let mut v = vec![3.0];
        pen.fill(&[x], &[4.0], &mut v, p.n_vars());
        assert!((v[q.0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_penalty_pins_to_the_average() {
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, 10.0);
        p.add_objective(x, 5.0);
        add_penalty(&mut p, &[x], &[0.0], &[2.5], &|_| 1e6, 8, 1.0).unwrap();
        let r = branch_and_bound(&p, &BnbOptions::default()).unwrap();
        assert!((r.values[x.0] - 2.5).abs() < 1e-9);
    }

    #[test]
    fn interpolant_matches_the_square_at_breakpoints() {
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", -4.0, 4.0);
        let pen = add_penalty(&mut p, &[x], &[0.0], &[0.0], &|_| 2.0, 8, 1.0).unwrap();
        for d in [-4.0, -2.0, 0.0, 1.0, 3.0] {
            let mut v = vec![d];
            pen.fill(&[x], &[0.0], &mut v, p.n_vars());
            assert!((v[pen.q[0].unwrap().0] - d * d).abs() < 1e-12);
        }
        let mut v = vec![0.5];
        pen.fill(&[x], &[0.0], &mut v, p.n_vars());
        assert!((v[pen.q[0].unwrap().0] - 0.5).abs() < 1e-12);
    }
}
