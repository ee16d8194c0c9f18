//! Solver backends and the threaded subproblem executor.
//!
//! The external backend writes the program in LP format, runs a shell
//! command built from a template and reads back a solution file. The
//! template comes from `CCEPEC_SOLVER_CMD` (or the run config) and must
//! mention `{lp}` and `{sol}`, e.g. `mysolver --read {lp} --write {sol}`.

use std::fs;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use ccepec_core::hedging::{Executor, SolveJob};
use ccepec_core::solver::lpformat::{read_solution, write_lp};
use ccepec_core::solver::{
    branch_and_bound_with_clock, BnbOptions, Clock, ConicProgram, SolveResult,
};
use ccepec_core::{Error, Result};

pub const SOLVER_ENV: &str = "CCEPEC_SOLVER_CMD";

/// Wall clock started at construction.
#[derive(Debug, Clone, Copy)]
pub struct StdClock(Instant);

impl StdClock {
    pub fn start() -> Self {
        StdClock(Instant::now())
    }
}

impl Clock for StdClock {
    fn elapsed_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Backend {
    Builtin,
    External { command: String },
}

impl Backend {
    /// `builtin` or `external`; the external command is taken from
    /// `command` or else the environment.
    pub fn from_name(name: &str, command: Option<String>) -> Result<Self> {
        match name {
            "builtin" => Ok(Backend::Builtin),
            "external" => {
                let command = command
                    .or_else(|| std::env::var(SOLVER_ENV).ok())
                    .filter(|c| !c.trim().is_empty())
                    .ok_or_else(|| {
                        Error::Invalid(format!("external backend needs {SOLVER_ENV}"))
                    })?;
                if !command.contains("{lp}") || !command.contains("{sol}") {
                    return Err(Error::Invalid(
                        "solver command must contain {lp} and {sol}".into(),
                    ));
                }
                Ok(Backend::External { command })
            }
            other => Err(Error::Invalid(format!("unknown backend `{other}`"))),
        }
    }

    pub fn solve(&self, program: &ConicProgram, options: &BnbOptions) -> Result<SolveResult> {
        match self {
            Backend::Builtin => branch_and_bound_with_clock(program, options, &StdClock::start()),
            Backend::External { command } => solve_external(program, command),
        }
    }
}

fn solve_external(program: &ConicProgram, template: &str) -> Result<SolveResult> {
    let clock = StdClock::start();
    let dir = tempfile::tempdir().map_err(|e| Error::Solver(format!("scratch directory: {e}")))?;
    let lp = dir.path().join("model.lp");
    let sol = dir.path().join("model.sol");
    fs::write(&lp, write_lp(program))
        .map_err(|e| Error::Solver(format!("writing {}: {e}", lp.display())))?;
    let cmd = template
        .replace("{lp}", &lp.to_string_lossy())
        .replace("{sol}", &sol.to_string_lossy());
    log::debug!("external solver: {cmd}");
    let out = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| Error::Solver(format!("running `{cmd}`: {e}")))?;
    if !out.status.success() {
        return Err(Error::Solver(format!(
            "`{cmd}` exited with {}: {}",
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    let text = fs::read_to_string(&sol)
        .map_err(|e| Error::Solver(format!("reading {}: {e}", sol.display())))?;
    let mut r = read_solution(&text, program)?;
    r.stats.wall_time = clock.elapsed_secs();
    Ok(r)
}

/// Solves a batch on up to `jobs` threads. Each solve is independent and
/// results come back in job order, so the outcome does not depend on
/// `jobs` unless a time limit is set.
#[derive(Debug, Clone)]
pub struct Threaded {
    pub jobs: usize,
    pub backend: Backend,
}

impl Threaded {
    pub fn new(jobs: usize, backend: Backend) -> Self {
        Threaded {
            jobs: jobs.max(1),
            backend,
        }
    }

    pub fn default_jobs() -> usize {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    }
}

impl Executor for Threaded {
    fn solve_all(&self, jobs: &[SolveJob<'_>]) -> Vec<Result<SolveResult>> {
        let slots: Vec<Mutex<Option<Result<SolveResult>>>> =
            jobs.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        std::thread::scope(|s| {
            for _ in 0..self.jobs.min(jobs.len()) {
                s.spawn(|| loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= jobs.len() {
                        break;
                    }
                    let r = self.backend.solve(jobs[k].program, jobs[k].options);
                    *slots[k].lock().unwrap() = Some(r);
                });
            }
        });
        slots
            .into_iter()
            .map(|m| {
                m.into_inner()
                    .unwrap()
                    .unwrap_or_else(|| Err(Error::Solver("job not run".into())))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccepec_core::hedging::Sequential;
    use ccepec_core::solver::{ObjSense, Sense};

    fn knapsack(w: f64) -> ConicProgram {
        let mut p = ConicProgram::new("knap", ObjSense::Maximize);
        let a = p.add_binary("a");
        let b = p.add_binary("b");
        p.add_row("w", [(a, 3.0), (b, 2.0)], Sense::Le, w);
        p.add_objective(a, 5.0);
        p.add_objective(b, 4.0);
        p
    }

    #[test]
    fn threaded_matches_sequential() {
        let programs: Vec<ConicProgram> = (0..7).map(|k| knapsack(k as f64)).collect();
        let opts = BnbOptions::default();
        let jobs: Vec<SolveJob<'_>> = programs
            .iter()
            .map(|program| SolveJob {
                program,
                options: &opts,
            })
            .collect();
        let a: Vec<f64> = Sequential
            .solve_all(&jobs)
            .into_iter()
            .map(|r| r.unwrap().objective)
            .collect();
        let b: Vec<f64> = Threaded::new(3, Backend::Builtin)
            .solve_all(&jobs)
            .into_iter()
            .map(|r| r.unwrap().objective)
            .collect();
        assert_eq!(a, b);
        assert_eq!(a, vec![0.0, 0.0, 4.0, 5.0, 5.0, 9.0, 9.0]);
    }

    #[test]
    fn backend_names() {
        assert_eq!(
            Backend::from_name("builtin", None).unwrap(),
            Backend::Builtin
        );
        assert!(Backend::from_name("gurobi", None).is_err());
        assert!(Backend::from_name("external", Some("solve {lp}".into())).is_err());
        let b = Backend::from_name("external", Some("solve {lp} {sol}".into())).unwrap();
        assert!(matches!(b, Backend::External { .. }));
    }

    #[test]
    fn external_command_failure_is_a_solver_error() {
        let b = Backend::External {
            command: "exit 3 # {lp} {sol}".into(),
        };
        let err = b.solve(&knapsack(4.0), &BnbOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Solver(_)), "{err}");
    }

    #[test]
    fn external_command_that_copies_a_solution() {
        // a fake solver: ignore the model and emit a fixed answer
        let b = Backend::External {
            command: "printf 'objective 5\\na 1\\nb 0\\n' > {sol}; test -s {lp}".into(),
        };
        let r = b.solve(&knapsack(4.0), &BnbOptions::default()).unwrap();
        assert_eq!(r.values, vec![1.0, 0.0]);
        assert_eq!(r.objective, 5.0);
    }
}
