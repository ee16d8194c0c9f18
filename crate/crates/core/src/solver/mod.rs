//! Solver-agnostic conic program IR and the built-in backend.
//!
//! A [`ConicProgram`] holds bounded continuous/binary variables, sparse linear
//! rows, second-order cone memberships `head ≥ ‖tail‖₂`, SOS1 sets and a
//! linear objective. [`solve_lp`] handles purely linear continuous programs;
//! [`branch_and_bound`] handles everything else.

mod bnb;
mod cuts;
pub mod lpformat;
mod simplex;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use bnb::{branch_and_bound, branch_and_bound_with_clock, BnbOptions, Clock, NoClock};
pub use cuts::{soc_violation_cut, SocCut};
pub use simplex::solve_lp;

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Integrality tolerance for binaries.
pub const INT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: VarKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRow {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl LinearRow {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let a = self.activity(x);
        match self.sense {
            Sense::Le => (a - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - a).max(0.0),
            Sense::Eq => libm::fabs(a - self.rhs),
        }
    }
}

/// `head ≥ ‖tail‖₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SocCone {
    pub name: String,
    pub head: VarId,
    pub tail: Vec<VarId>,
}

impl SocCone {
    pub fn tail_norm(&self, x: &[f64]) -> f64 {
        libm::sqrt(self.tail.iter().map(|v| x[v.0] * x[v.0]).sum())
    }

    pub fn violation(&self, x: &[f64]) -> f64 {
        (self.tail_norm(x) - x[self.head.0]).max(0.0)
    }
}

/// At most one member may be nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sos1Set {
    pub name: String,
    pub members: Vec<VarId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub sense: ObjSense,
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub name: String,
    pub variables: Vec<Variable>,
    pub rows: Vec<LinearRow>,
    pub cones: Vec<SocCone>,
    pub sos1: Vec<Sos1Set>,
    pub objective: Objective,
}

fn merge_terms(terms: impl IntoIterator<Item = (VarId, f64)>) -> Vec<(VarId, f64)> {
    let mut acc: BTreeMap<VarId, f64> = BTreeMap::new();
    for (v, a) in terms {
        *acc.entry(v).or_insert(0.0) += a;
    }
    acc.into_iter().filter(|&(_, a)| a != 0.0).collect()
}

impl ConicProgram {
    pub fn new(name: impl Into<String>, sense: ObjSense) -> Self {
        ConicProgram {
            name: name.into(),
            variables: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
            sos1: Vec::new(),
            objective: Objective {
                sense,
                terms: Vec::new(),
                constant: 0.0,
            },
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
            kind: VarKind::Continuous,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_free(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_binary(&mut self, name: impl Into<String>) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower: 0.0,
            upper: 1.0,
            kind: VarKind::Binary,
        });
        VarId(self.variables.len() - 1)
    }

    /// Add a row; repeated variables are summed and zero terms dropped.
    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: impl IntoIterator<Item = (VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> usize {
        self.rows.push(LinearRow {
            name: name.into(),
            terms: merge_terms(terms),
            sense,
            rhs,
        });
        self.rows.len() - 1
    }

    pub fn add_cone(&mut self, name: impl Into<String>, head: VarId, tail: Vec<VarId>) -> usize {
        self.cones.push(SocCone {
            name: name.into(),
            head,
            tail,
        });
        self.cones.len() - 1
    }

    pub fn add_sos1(&mut self, name: impl Into<String>, members: Vec<VarId>) -> usize {
        self.sos1.push(Sos1Set {
            name: name.into(),
            members,
        });
        self.sos1.len() - 1
    }

    /// Add to the objective coefficient of `v`.
    pub fn add_objective(&mut self, v: VarId, coef: f64) {
        self.objective.terms.push((v, coef));
    }

    pub fn add_objective_constant(&mut self, c: f64) {
        self.objective.constant += c;
    }

    /// Merge duplicate objective terms.
    pub fn normalize(&mut self) {
        let terms = core::mem::take(&mut self.objective.terms);
        self.objective.terms = merge_terms(terms);
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn var_by_name(&self, name: &str) -> Option<VarId> {
        self.variables.iter().position(|v| v.name == name).map(VarId)
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.constant + self.objective.terms.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>()
    }

    pub fn is_linear_continuous(&self) -> bool {
        self.cones.is_empty()
            && self.sos1.is_empty()
            && self.variables.iter().all(|v| v.kind == VarKind::Continuous)
    }

    /// Check the structural invariants of the IR.
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        let check = |v: VarId, ctx: &str| {
            if v.0 < n {
                Ok(())
            } else {
                Err(Error::Invalid(format!("{ctx} references unknown variable {}", v.0)))
            }
        };
        for var in &self.variables {
            if var.lower.is_nan() || var.upper.is_nan() || var.lower > var.upper {
                return Err(Error::Invalid(format!("variable `{}` has empty bounds", var.name)));
            }
            if var.kind == VarKind::Binary && (var.lower < 0.0 || var.upper > 1.0) {
                return Err(Error::Invalid(format!(
                    "binary `{}` bounds exceed [0, 1]",
                    var.name
                )));
            }
        }
        for row in &self.rows {
            for &(v, a) in &row.terms {
                check(v, &row.name)?;
                if !a.is_finite() {
                    return Err(Error::Invalid(format!("row `{}` has a non-finite coefficient", row.name)));
                }
            }
            if !row.rhs.is_finite() {
                return Err(Error::Invalid(format!("row `{}` has a non-finite rhs", row.name)));
            }
        }
        for cone in &self.cones {
            check(cone.head, &cone.name)?;
            for &v in &cone.tail {
                check(v, &cone.name)?;
            }
            if self.variables[cone.head.0].lower < 0.0 {
                return Err(Error::Invalid(format!(
                    "cone `{}` head must have a non-negative lower bound",
                    cone.name
                )));
            }
        }
        for set in &self.sos1 {
            for &v in &set.members {
                check(v, &set.name)?;
            }
        }
        for &(v, _) in &self.objective.terms {
            check(v, "objective")?;
        }
        Ok(())
    }

    /// Largest violation of any bound, row, cone, integrality or SOS1
    /// condition at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, var) in self.variables.iter().enumerate() {
            worst = worst.max(var.lower - x[v]).max(x[v] - var.upper);
            if var.kind == VarKind::Binary {
                worst = worst.max(libm::fabs(x[v] - libm::round(x[v])));
            }
        }
        for row in &self.rows {
            worst = worst.max(row.violation(x));
        }
        for cone in &self.cones {
            worst = worst.max(cone.violation(x));
        }
        for set in &self.sos1 {
            worst = worst.max(sos1_violation(set, x));
        }
        worst
    }
}

/// Magnitude of the second-largest member, i.e. how far `x` is from having at
/// most one nonzero.
pub fn sos1_violation(set: &Sos1Set, x: &[f64]) -> f64 {
    let mut first: f64 = 0.0;
    let mut second: f64 = 0.0;
    for v in &set.members {
        let a = libm::fabs(x[v.0]);
        if a > first {
            second = first;
            first = a;
        } else if a > second {
            second = a;
        }
    }
    second
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// A node, iteration or time limit stopped the search before any feasible
    /// point was found.
    IterationLimit,
    /// A limit stopped the search with an incumbent whose gap is above the
    /// requested tolerance.
    GapLimit,
}

impl SolveStatus {
    pub fn has_solution(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::GapLimit)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub nodes: usize,
    pub cuts: usize,
    pub lp_iterations: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub best_bound: f64,
    /// Row shadow prices `∂objective/∂rhs`, continuous LPs only.
    pub row_duals: Option<Vec<f64>>,
    /// Reduced costs in the program's own objective sense, continuous LPs only.
    pub reduced_costs: Option<Vec<f64>>,
    pub stats: SolveStats,
}

impl SolveResult {
    pub fn failed(status: SolveStatus, n: usize, sense: ObjSense) -> Self {
        let worst = match sense {
            ObjSense::Minimize => f64::INFINITY,
            ObjSense::Maximize => f64::NEG_INFINITY,
        };
        SolveResult {
            status,
            values: alloc::vec![0.0; n],
            objective: worst,
            best_bound: -worst,
            row_duals: None,
            reduced_costs: None,
            stats: SolveStats::default(),
        }
    }

    pub fn value(&self, v: VarId) -> f64 {
        self.values[v.0]
    }

    /// Relative gap between incumbent and bound.
    pub fn gap(&self) -> f64 {
        relative_gap(self.objective, self.best_bound)
    }
}

pub(crate) fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    if !incumbent.is_finite() || !bound.is_finite() {
        return f64::INFINITY;
    }
    libm::fabs(bound - incumbent) / libm::fabs(incumbent).max(1e-10).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validate_catches_bad_references() {
        let mut p = ConicProgram::new("t", ObjSense::Minimize);
        let x = p.add_var("x", 0.0, 1.0);
        p.add_row("r", [(x, 1.0), (VarId(7), 1.0)], Sense::Le, 1.0);
        assert!(p.validate().is_err());

        let mut p = ConicProgram::new("t", ObjSense::Minimize);
        let y = p.add_free("y");
        let x = p.add_var("x", 0.0, 1.0);
        p.add_cone("c", y, alloc::vec![x]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn rows_merge_duplicate_terms() {
        let mut p = ConicProgram::new("t", ObjSense::Minimize);
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", 0.0, 1.0);
        p.add_row("r", [(x, 1.0), (y, 2.0), (x, -1.0)], Sense::Le, 1.0);
        assert_eq!(p.rows[0].terms, alloc::vec![(y, 2.0)]);
    }

    #[test]
    fn sos1_violation_is_second_largest() {
        let set = Sos1Set {
            name: "s".into(),
            members: alloc::vec![VarId(0), VarId(1), VarId(2)],
        };
        assert_eq!(sos1_violation(&set, &[5.0, 0.0, 0.0]), 0.0);
        assert_eq!(sos1_violation(&set, &[5.0, 3.0, 1.0]), 3.0);
        assert_eq!(sos1_violation(&set, &[0.0, 0.0, 0.0]), 0.0);
    }
}
