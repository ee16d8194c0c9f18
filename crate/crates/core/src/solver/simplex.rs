//! Bounded revised simplex with a dense basis inverse.
//!
//! Rows are stored as `a·x − w = 0` with a bounded logical `w` per row, so
//! every constraint type becomes a bound. Columns `0..n` are structural,
//! `n..n+m` logical. A primal simplex (composite phase 1) handles cold starts;
//! a dual simplex re-optimizes after bound changes or added rows, which keep
//! the previous basis dual feasible.

use alloc::vec;
use alloc::vec::Vec;

use super::{ConicProgram, ObjSense, Sense, SolveResult, SolveStats, SolveStatus};
use crate::{Error, Result};

const PIVOT_TOL: f64 = 1e-9;
const PRIMAL_TOL: f64 = 1e-8;
const DUAL_TOL: f64 = 1e-8;
const REFACTOR_EVERY: usize = 120;
const DEGENERATE_SWITCH: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Basic,
    Lower,
    Upper,
    /// Nonbasic free variable (both bounds infinite), held at its value.
    Free,
}

/// Column statuses; enough to rebuild a basis after bounds or rows change.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Basis {
    pub status: Vec<Status>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum LpOutcome {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

/// Simplex working state over a mutable LP.
#[derive(Debug, Clone)]
pub(crate) struct Engine {
    n: usize,
    m: usize,
    /// Sparse structural columns `(row, coef)`.
    cols: Vec<Vec<(usize, f64)>>,
    /// Minimization costs for the `n + m` columns (logicals cost zero).
    cost: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    /// Dense `B⁻¹`, row-major `m × m`.
    binv: Vec<f64>,
    /// Column basic in each row position.
    basis: Vec<usize>,
    status: Vec<Status>,
    x: Vec<f64>,
    since_refactor: usize,
    solve_start: usize,
    pub iterations: usize,
    pub iteration_limit: usize,
}

fn initial_status(l: f64, u: f64) -> (Status, f64) {
    if l.is_finite() {
        (Status::Lower, l)
    } else if u.is_finite() {
        (Status::Upper, u)
    } else {
        (Status::Free, 0.0)
    }
}

impl Engine {
    /// Build from the linear part of `program` (cones, SOS1 and integrality
    /// are ignored), in minimization form.
    pub fn from_program(program: &ConicProgram) -> Self {
        let n = program.variables.len();
        let m = program.rows.len();
        let mut cols = vec![Vec::new(); n];
        for (i, row) in program.rows.iter().enumerate() {
            for &(v, a) in &row.terms {
                cols[v.0].push((i, a));
            }
        }
        let sign = match program.objective.sense {
            ObjSense::Minimize => 1.0,
            ObjSense::Maximize => -1.0,
        };
        let mut cost = vec![0.0; n + m];
        for &(v, a) in &program.objective.terms {
            cost[v.0] += sign * a;
        }
        let mut lower: Vec<f64> = program.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = program.variables.iter().map(|v| v.upper).collect();
        for row in &program.rows {
            let (l, u) = row_bounds(row.sense, row.rhs);
            lower.push(l);
            upper.push(u);
        }
        let mut engine = Engine {
            n,
            m,
            cols,
            cost,
            lower,
            upper,
            binv: Vec::new(),
            basis: Vec::new(),
            status: Vec::new(),
            x: vec![0.0; n + m],
            since_refactor: 0,
            solve_start: 0,
            iterations: 0,
            iteration_limit: 20_000 + 60 * (n + m),
        };
        engine.reset_to_slack_basis();
        engine
    }



    fn reset_to_slack_basis(&mut self) {
        let (n, m) = (self.n, self.m);
        self.status = vec![Status::Lower; n + m];
        for j in 0..n {
            let (s, v) = initial_status(self.lower[j], self.upper[j]);
            self.status[j] = s;
            self.x[j] = v;
        }
        self.basis = (n..n + m).collect();
        for j in n..n + m {
            self.status[j] = Status::Basic;
        }
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        self.since_refactor = 0;
        self.compute_basic_values();
    }


    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    /// Change the bounds of a column; nonbasic columns move to the matching
    /// bound. Call [`Engine::compute_basic_values`] afterwards.
    pub fn set_bounds(&mut self, j: usize, l: f64, u: f64) {
        self.lower[j] = l;
        self.upper[j] = u;
        match self.status[j] {
            Status::Basic => {}
            Status::Lower if l.is_finite() => self.x[j] = l,
            Status::Upper if u.is_finite() => self.x[j] = u,
            _ => {
                let (s, v) = initial_status(l, u);
                self.status[j] = s;
                self.x[j] = v;
            }
        }
    }

    /// Append the row `lo ≤ Σ coef·x ≤ hi`; its logical enters the basis.
    pub fn add_row(&mut self, terms: &[(usize, f64)], lo: f64, hi: f64) {
        let m = self.m;
        let new = m;
        for &(j, a) in terms {
            self.cols[j].push((new, a));
        }
        self.cost.push(0.0);
        self.lower.push(lo);
        self.upper.push(hi);
        self.status.push(Status::Basic);
        self.x.push(0.0);
        // new B⁻¹ = [[B⁻¹, 0], [a_B B⁻¹, −1]]
        let mut a_b = vec![0.0; m];
        for (pos, &j) in self.basis.iter().enumerate() {
            if j < self.n {
                if let Some(&(_, a)) = self.cols[j].iter().rev().find(|(r, _)| *r == new) {
                    a_b[pos] = a;
                }
            }
        }
        let mut binv = vec![0.0; (m + 1) * (m + 1)];
        for i in 0..m {
            binv[i * (m + 1)..i * (m + 1) + m].copy_from_slice(&self.binv[i * m..i * m + m]);
        }
        for k in 0..m {
            let mut s = 0.0;
            for (pos, &a) in a_b.iter().enumerate() {
                if a != 0.0 {
                    s += a * self.binv[pos * m + k];
                }
            }
            binv[m * (m + 1) + k] = s;
        }
        binv[m * (m + 1) + m] = -1.0;
        self.binv = binv;
        self.m = m + 1;
        // logical columns are indexed after all structurals; the new one is n + m
        self.basis.push(self.n + m);
        self.compute_basic_values();
    }

    pub fn values(&self) -> &[f64] {
        &self.x[..self.n]
    }


    pub fn objective(&self) -> f64 {
        self.cost.iter().zip(&self.x).map(|(c, x)| c * x).sum()
    }

    pub fn basis(&self) -> Basis {
        Basis {
            status: self.status.clone(),
        }
    }

    /// Rebuild the factorization for a stored basis. Columns added since the
    /// snapshot keep their logicals basic.
    pub fn restore(&mut self, snapshot: &Basis) {
        let total = self.n + self.m;
        let mut status = snapshot.status.clone();
        // snapshot may predate added rows: logicals of new rows are basic
        status.resize(total, Status::Basic);
        let mut target: Vec<bool> = status.iter().map(|s| *s == Status::Basic).collect();
        // cannot have more basics than rows
        let mut count = target.iter().filter(|b| **b).count();
        if count > self.m {
            for j in 0..self.n {
                if count <= self.m {
                    break;
                }
                if target[j] {
                    target[j] = false;
                    count -= 1;
                }
            }
        }
        self.crash(&target);
        for j in 0..total {
            if self.status[j] == Status::Basic {
                continue;
            }
            let (l, u) = (self.lower[j], self.upper[j]);
            let wanted = status[j];
            let (s, v) = match wanted {
                Status::Upper if u.is_finite() => (Status::Upper, u),
                Status::Lower if l.is_finite() => (Status::Lower, l),
                _ => initial_status(l, u),
            };
            self.status[j] = s;
            self.x[j] = v;
        }
        self.compute_basic_values();
    }

    /// Pivot the target structural columns into an all-logical basis.
    fn crash(&mut self, target: &[bool]) {
        let (n, m) = (self.n, self.m);
        self.basis = (n..n + m).collect();
        self.binv = vec![0.0; m * m];
        for i in 0..m {
            self.binv[i * m + i] = -1.0;
        }
        for j in 0..n + m {
            self.status[j] = if j >= n { Status::Basic } else { Status::Lower };
        }
        let mut alpha = vec![0.0; m];
        for j in 0..n {
            if !target[j] {
                continue;
            }
            self.ftran(j, &mut alpha);
            let mut best = None;
            let mut best_abs = 1e-7;
            for (pos, &b) in self.basis.iter().enumerate() {
                // only displace logicals that are not wanted in the basis
                if b >= n && !target[b] && libm::fabs(alpha[pos]) > best_abs {
                    best_abs = libm::fabs(alpha[pos]);
                    best = Some(pos);
                }
            }
            if let Some(r) = best {
                let leaving = self.basis[r];
                self.pivot_inverse(r, &alpha);
                self.basis[r] = j;
                self.status[j] = Status::Basic;
                self.status[leaving] = Status::Lower;
            }
        }
        for j in 0..n {
            if self.status[j] != Status::Basic {
                self.status[j] = Status::Lower;
            }
        }
        self.since_refactor = 0;
    }

    /// Recompute `B⁻¹` from scratch for the current basis.
    pub fn refactor(&mut self) {
        let mut target = vec![false; self.n + self.m];
        for &j in &self.basis {
            target[j] = true;
        }
        let saved_status = self.status.clone();
        let saved_x = self.x.clone();
        self.crash(&target);
        for j in 0..self.n + self.m {
            if self.status[j] != Status::Basic {
                if saved_status[j] == Status::Basic {
                    // dropped as dependent: park at a bound
                    let (s, v) = initial_status(self.lower[j], self.upper[j]);
                    self.status[j] = s;
                    self.x[j] = v;
                } else {
                    self.status[j] = saved_status[j];
                    self.x[j] = saved_x[j];
                }
            }
        }
        self.compute_basic_values();
    }

    /// `x_B = −B⁻¹ N x_N`.
    pub fn compute_basic_values(&mut self) {
        let (n, m) = (self.n, self.m);
        let mut r = vec![0.0; m];
        for j in 0..n + m {
            if self.status[j] == Status::Basic {
                continue;
            }
            let v = self.x[j];
            if v == 0.0 {
                continue;
            }
            if j < n {
                for &(i, a) in &self.cols[j] {
                    r[i] += a * v;
                }
            } else {
                r[j - n] -= v;
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..pos * m + m];
            let s: f64 = row.iter().zip(&r).map(|(b, v)| b * v).sum();
            self.x[self.basis[pos]] = -s;
        }
    }

    /// `α = B⁻¹ a_j`.
    fn ftran(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for &(i, a) in &self.cols[j] {
                for (pos, o) in out.iter_mut().enumerate() {
                    *o += a * self.binv[pos * m + i];
                }
            }
        } else {
            let i = j - self.n;
            for (pos, o) in out.iter_mut().enumerate() {
                *o = -self.binv[pos * m + i];
            }
        }
    }

    /// `π = c_Bᵀ B⁻¹`.
    fn btran(&self, c_b: &[f64], out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for (pos, &c) in c_b.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let row = &self.binv[pos * m..pos * m + m];
            for (o, b) in out.iter_mut().zip(row) {
                *o += c * b;
            }
        }
    }

    fn column_dot(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols[j].iter().map(|&(i, a)| a * y[i]).sum()
        } else {
            -y[j - self.n]
        }
    }

    fn pivot_inverse(&mut self, r: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for (pos, row) in before.chunks_exact_mut(m).enumerate() {
            let f = alpha[pos];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        for (off, row) in after.chunks_exact_mut(m).enumerate() {
            let f = alpha[r + 1 + off];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(pivot_row.iter()) {
                    *v -= f * p;
                }
            }
        }
        self.since_refactor += 1;
    }

    fn is_fixed(&self, j: usize) -> bool {
        self.upper[j] - self.lower[j] <= 1e-12
    }

    fn infeasibility(&self, j: usize) -> f64 {
        let v = self.x[j];
        (self.lower[j] - v).max(v - self.upper[j]).max(0.0)
    }

    pub fn primal_infeasibility(&self) -> f64 {
        self.basis.iter().map(|&j| self.infeasibility(j)).fold(0.0, f64::max)
    }

    fn reduced_costs(&self, costs: &[f64], pi: &mut [f64], d: &mut [f64]) {
        let c_b: Vec<f64> = self.basis.iter().map(|&j| costs[j]).collect();
        self.btran(&c_b, pi);
        for j in 0..self.n + self.m {
            d[j] = if self.status[j] == Status::Basic {
                0.0
            } else {
                costs[j] - self.column_dot(j, pi)
            };
        }
    }

    fn dual_feasible(&self, d: &[f64]) -> bool {
        (0..self.n + self.m).all(|j| match self.status[j] {
            Status::Basic => true,
            _ if self.is_fixed(j) => true,
            Status::Lower => d[j] >= -DUAL_TOL,
            Status::Upper => d[j] <= DUAL_TOL,
            Status::Free => libm::fabs(d[j]) <= DUAL_TOL,
        })
    }

    /// Re-optimize from the current basis.
    pub fn solve(&mut self) -> LpOutcome {
        self.solve_start = self.iterations;
        if self.since_refactor > 0 {
            self.refactor();
        }
        let mut pi = vec![0.0; self.m];
        let mut d = vec![0.0; self.n + self.m];
        self.reduced_costs(&self.cost.clone(), &mut pi, &mut d);
        let outcome = if self.primal_infeasibility() > PRIMAL_TOL && self.dual_feasible(&d) {
            match self.dual() {
                LpOutcome::Optimal => self.primal(),
                other => other,
            }
        } else {
            self.primal()
        };
        if outcome == LpOutcome::Optimal {
            self.refactor();
            if self.primal_infeasibility() > PRIMAL_TOL {
                // drift after refactorization: clean up
                return self.primal();
            }
        }
        outcome
    }

    fn primal(&mut self) -> LpOutcome {
        let total = self.n + self.m;
        let m = self.m;
        let mut pi = vec![0.0; m];
        let mut d = vec![0.0; total];
        let mut alpha = vec![0.0; m];
        let mut phase_cost = vec![0.0; total];
        let mut degenerate = 0usize;
        loop {
            if self.iterations - self.solve_start >= self.iteration_limit {
                return LpOutcome::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            // composite phase: penalize infeasible basics
            let mut phase1 = false;
            for j in 0..total {
                phase_cost[j] = 0.0;
            }
            for &j in &self.basis {
                let v = self.x[j];
                if v < self.lower[j] - PRIMAL_TOL {
                    phase_cost[j] = -1.0;
                    phase1 = true;
                } else if v > self.upper[j] + PRIMAL_TOL {
                    phase_cost[j] = 1.0;
                    phase1 = true;
                }
            }
            if !phase1 {
                phase_cost.copy_from_slice(&self.cost);
            }
            self.reduced_costs(&phase_cost, &mut pi, &mut d);

            let bland = degenerate > DEGENERATE_SWITCH;
            let mut entering = None;
            let mut best = 0.0;
            for j in 0..total {
                if self.status[j] == Status::Basic || self.is_fixed(j) {
                    continue;
                }
                let dj = d[j];
                let dir = match self.status[j] {
                    Status::Lower if dj < -DUAL_TOL => 1.0,
                    Status::Upper if dj > DUAL_TOL => -1.0,
                    Status::Free if libm::fabs(dj) > DUAL_TOL => {
                        if dj < 0.0 {
                            1.0
                        } else {
                            -1.0
                        }
                    }
                    _ => continue,
                };
                let score = libm::fabs(dj);
                if bland {
                    entering = Some((j, dir));
                    break;
                }
                if score > best {
                    best = score;
                    entering = Some((j, dir));
                }
            }
            let Some((q, dir)) = entering else {
                return if phase1 {
                    LpOutcome::Infeasible
                } else {
                    LpOutcome::Optimal
                };
            };
            self.ftran(q, &mut alpha);

            // ratio test (Harris two-pass); x_B(θ) = x_B − θ·dir·α
            let flip = self.upper[q] - self.lower[q];
            let mut limit = if flip.is_finite() { flip } else { f64::INFINITY };
            let target_of = |eng: &Engine, pos: usize, rate: f64, tol: f64| -> Option<f64> {
                let j = eng.basis[pos];
                let v = eng.x[j];
                let (l, u) = (eng.lower[j], eng.upper[j]);
                if rate < 0.0 {
                    if phase1 && v > u + PRIMAL_TOL {
                        Some((v - u + tol) / -rate)
                    } else if v >= l - PRIMAL_TOL && l.is_finite() {
                        Some(((v - l).max(0.0) + tol) / -rate)
                    } else {
                        None
                    }
                } else if phase1 && v < l - PRIMAL_TOL {
                    Some((l - v + tol) / rate)
                } else if v <= u + PRIMAL_TOL && u.is_finite() {
                    Some(((u - v).max(0.0) + tol) / rate)
                } else {
                    None
                }
            };
            for pos in 0..m {
                let rate = -dir * alpha[pos];
                if libm::fabs(rate) <= PIVOT_TOL {
                    continue;
                }
                if let Some(t) = target_of(self, pos, rate, if bland { 0.0 } else { PRIMAL_TOL }) {
                    limit = limit.min(t);
                }
            }
            if !limit.is_finite() {
                if phase1 {
                    // cannot happen for a consistent phase-1 direction
                    self.refactor();
                    degenerate += 1;
                    continue;
                }
                return LpOutcome::Unbounded;
            }
            let mut leave: Option<(usize, f64)> = None;
            let mut best_alpha = 0.0;
            for pos in 0..m {
                let rate = -dir * alpha[pos];
                if libm::fabs(rate) <= PIVOT_TOL {
                    continue;
                }
                if let Some(t_exact) = target_of(self, pos, rate, 0.0) {
                    if t_exact <= limit && libm::fabs(alpha[pos]) > best_alpha {
                        best_alpha = libm::fabs(alpha[pos]);
                        leave = Some((pos, t_exact));
                    }
                }
            }
            self.iterations += 1;
            let theta = match leave {
                Some((_, t)) if !(flip.is_finite() && flip <= t) => t.max(0.0),
                _ => flip,
            };
            if theta <= 1e-12 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            for pos in 0..m {
                let j = self.basis[pos];
                self.x[j] -= theta * dir * alpha[pos];
            }
            match leave {
                Some((r, t)) if !(flip.is_finite() && flip <= t) => {
                    let j_out = self.basis[r];
                    let rate = -dir * alpha[r];
                    let v = self.x[j_out];
                    let (l, u) = (self.lower[j_out], self.upper[j_out]);
                    // leaving variable lands on the bound it was heading to
                    let (st, val) = if rate < 0.0 {
                        if phase1 && v > u - PRIMAL_TOL && (v - u).abs() < (v - l).abs() {
                            (Status::Upper, u)
                        } else {
                            (Status::Lower, l)
                        }
                    } else if phase1 && v < l + PRIMAL_TOL && (v - l).abs() < (v - u).abs() {
                        (Status::Lower, l)
                    } else {
                        (Status::Upper, u)
                    };
                    let (st, val) = if val.is_finite() {
                        (st, val)
                    } else {
                        initial_status(l, u)
                    };
                    self.x[q] += dir * theta;
                    self.pivot_inverse(r, &alpha);
                    self.basis[r] = q;
                    self.status[q] = Status::Basic;
                    self.status[j_out] = st;
                    self.x[j_out] = val;
                }
                _ => {
                    // bound flip
                    if dir > 0.0 {
                        self.status[q] = Status::Upper;
                        self.x[q] = self.upper[q];
                    } else {
                        self.status[q] = Status::Lower;
                        self.x[q] = self.lower[q];
                    }
                }
            }
        }
    }

    fn dual(&mut self) -> LpOutcome {
        let total = self.n + self.m;
        let m = self.m;
        let mut pi = vec![0.0; m];
        let mut d = vec![0.0; total];
        let mut alpha = vec![0.0; m];
        let mut row_alpha = vec![0.0; total];
        let cost = self.cost.clone();
        loop {
            if self.iterations - self.solve_start >= self.iteration_limit {
                return LpOutcome::IterationLimit;
            }
            if self.since_refactor >= REFACTOR_EVERY {
                self.refactor();
            }
            self.reduced_costs(&cost, &mut pi, &mut d);
            if !self.dual_feasible(&d) {
                // lost dual feasibility numerically; let primal finish
                return LpOutcome::Optimal;
            }
            let mut r = None;
            let mut worst = PRIMAL_TOL;
            for (pos, &j) in self.basis.iter().enumerate() {
                let inf = self.infeasibility(j);
                if inf > worst {
                    worst = inf;
                    r = Some(pos);
                }
            }
            let Some(r) = r else {
                return LpOutcome::Optimal;
            };
            let j_out = self.basis[r];
            let below = self.x[j_out] < self.lower[j_out];
            let target = if below {
                self.lower[j_out]
            } else {
                self.upper[j_out]
            };
            let rho = &self.binv[r * m..r * m + m];
            for j in 0..total {
                row_alpha[j] = if self.status[j] == Status::Basic {
                    0.0
                } else {
                    self.column_dot(j, rho)
                };
            }
            // eligible entering columns and Harris bound
            let eligible = |eng: &Engine, j: usize, a: f64| -> bool {
                if eng.status[j] == Status::Basic || eng.is_fixed(j) || libm::fabs(a) <= PIVOT_TOL {
                    return false;
                }
                match eng.status[j] {
                    Status::Lower => (below && a < 0.0) || (!below && a > 0.0),
                    Status::Upper => (below && a > 0.0) || (!below && a < 0.0),
                    Status::Free => true,
                    Status::Basic => false,
                }
            };
            let mut limit = f64::INFINITY;
            for j in 0..total {
                let a = row_alpha[j];
                if eligible(self, j, a) {
                    limit = limit.min((libm::fabs(d[j]) + DUAL_TOL) / libm::fabs(a));
                }
            }
            if !limit.is_finite() {
                return LpOutcome::Infeasible;
            }
            let mut q = None;
            let mut best = 0.0;
            for j in 0..total {
                let a = row_alpha[j];
                if eligible(self, j, a) && libm::fabs(d[j]) / libm::fabs(a) <= limit {
                    let score = libm::fabs(a);
                    if score > best {
                        best = score;
                        q = Some(j);
                    }
                }
            }
            let Some(q) = q else {
                return LpOutcome::Infeasible;
            };
            self.ftran(q, &mut alpha);
            if libm::fabs(alpha[r]) <= PIVOT_TOL {
                self.refactor();
                continue;
            }
            self.iterations += 1;
            let delta = (self.x[j_out] - target) / alpha[r];
            for pos in 0..m {
                let j = self.basis[pos];
                self.x[j] -= alpha[pos] * delta;
            }
            self.x[q] += delta;
            self.pivot_inverse(r, &alpha);
            self.basis[r] = q;
            self.status[q] = Status::Basic;
            self.status[j_out] = if below { Status::Lower } else { Status::Upper };
            self.x[j_out] = target;
        }
    }

    /// Row multipliers `π` and reduced costs for the minimization costs.
    pub fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let mut pi = vec![0.0; self.m];
        let mut d = vec![0.0; self.n + self.m];
        self.reduced_costs(&self.cost, &mut pi, &mut d);
        (pi, d)
    }
}

pub(crate) fn row_bounds(sense: Sense, rhs: f64) -> (f64, f64) {
    match sense {
        Sense::Le => (f64::NEG_INFINITY, rhs),
        Sense::Ge => (rhs, f64::INFINITY),
        Sense::Eq => (rhs, rhs),
    }
}

/// Solve a linear continuous program. Returns duals and reduced costs in the
/// program's objective sense.
pub fn solve_lp(program: &ConicProgram) -> Result<SolveResult> {
    if !program.is_linear_continuous() {
        return Err(Error::Invalid(
            "solve_lp needs a program without binaries, SOS1 sets or cones".into(),
        ));
    }
    program.validate()?;
    let mut engine = Engine::from_program(program);
    let outcome = engine.solve();
    let n = program.n_vars();
    let status = match outcome {
        LpOutcome::Optimal => SolveStatus::Optimal,
        LpOutcome::Infeasible => SolveStatus::Infeasible,
        LpOutcome::Unbounded => SolveStatus::Unbounded,
        LpOutcome::IterationLimit => SolveStatus::IterationLimit,
    };
    if status != SolveStatus::Optimal {
        let mut r = SolveResult::failed(status, n, program.objective.sense);
        r.stats.lp_iterations = engine.iterations;
        return Ok(r);
    }
    let values = engine.values().to_vec();
    let violation = program.max_violation(&values);
    if violation > 1e-6 * (1.0 + values.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)))) {
        return Err(Error::Solver(alloc::format!(
            "LP solution violates constraints by {violation:e}"
        )));
    }
    let (pi, d) = engine.duals();
    let sign = match program.objective.sense {
        ObjSense::Minimize => 1.0,
        ObjSense::Maximize => -1.0,
    };
    let objective = program.objective_value(&values);
    Ok(SolveResult {
        status,
        objective,
        best_bound: objective,
        row_duals: Some(pi.iter().map(|p| sign * p).collect()),
        reduced_costs: Some(d[..n].iter().map(|v| sign * v).collect()),
        values,
        stats: SolveStats {
            nodes: 0,
            cuts: 0,
            lp_iterations: engine.iterations,
            wall_time: 0.0,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::{ConicProgram, ObjSense, Sense};

    #[test]
    fn max_minus_x_with_lower_row() {
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_free("x");
        p.add_row("r", [(x, 1.0)], Sense::Ge, 3.0);
        p.add_objective(x, -1.0);
        let r = solve_lp(&p).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.value(x) - 3.0).abs() < 1e-9);
        assert!((r.objective + 3.0).abs() < 1e-9);
        // raising the rhs by one lowers the objective by one
        assert!((r.row_duals.unwrap()[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut p = ConicProgram::new("t", ObjSense::Minimize);
        let x = p.add_var("x", 0.0, 1.0);
        p.add_row("r", [(x, 1.0)], Sense::Ge, 2.0);
        assert_eq!(solve_lp(&p).unwrap().status, SolveStatus::Infeasible);

        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, f64::INFINITY);
        let y = p.add_free("y");
        p.add_row("r", [(x, 1.0), (y, -1.0)], Sense::Le, 1.0);
        p.add_objective(x, 1.0);
        assert_eq!(solve_lp(&p).unwrap().status, SolveStatus::Unbounded);
    }

    #[test]
    fn degenerate_multiple_optima_unique_objective() {
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, 10.0);
        let y = p.add_var("y", 0.0, 10.0);
        p.add_row("r1", [(x, 1.0), (y, 1.0)], Sense::Le, 4.0);
        p.add_row("r2", [(x, 2.0), (y, 2.0)], Sense::Le, 8.0);
        p.add_row("r3", [(x, 1.0)], Sense::Le, 4.0);
        p.add_objective(x, 1.0);
        p.add_objective(y, 1.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.objective - 4.0).abs() < 1e-9);
    }

    #[test]
    fn textbook_lp() {
        // max 3x + 5y, x ≤ 4, 2y ≤ 12, 3x + 2y ≤ 18 → (2, 6), 36
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, f64::INFINITY);
        let y = p.add_var("y", 0.0, f64::INFINITY);
        p.add_row("a", [(x, 1.0)], Sense::Le, 4.0);
        p.add_row("b", [(y, 2.0)], Sense::Le, 12.0);
        p.add_row("c", [(x, 3.0), (y, 2.0)], Sense::Le, 18.0);
        p.add_objective(x, 3.0);
        p.add_objective(y, 5.0);
        let r = solve_lp(&p).unwrap();
        assert!((r.objective - 36.0).abs() < 1e-9);
        let duals = r.row_duals.unwrap();
        // textbook shadow prices (0, 1.5, 1)
        assert!(duals[0].abs() < 1e-9);
        assert!((duals[1] - 1.5).abs() < 1e-9);
        assert!((duals[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dual_reoptimization_after_bound_change_and_cut() {
        let mut p = ConicProgram::new("t", ObjSense::Maximize);
        let x = p.add_var("x", 0.0, 10.0);
        let y = p.add_var("y", 0.0, 10.0);
        p.add_row("c", [(x, 1.0), (y, 2.0)], Sense::Le, 14.0);
        p.add_objective(x, 2.0);
        p.add_objective(y, 1.0);
        let mut e = Engine::from_program(&p);
        assert_eq!(e.solve(), LpOutcome::Optimal);
        assert!((e.values()[0] - 10.0).abs() < 1e-9);
        e.set_bounds(0, 0.0, 3.0);
        e.compute_basic_values();
        assert_eq!(e.solve(), LpOutcome::Optimal);
        assert!((e.values()[0] - 3.0).abs() < 1e-9);
        assert!((e.values()[1] - 5.5).abs() < 1e-9);
        e.add_row(&[(1, 1.0)], f64::NEG_INFINITY, 2.0);
        assert_eq!(e.solve(), LpOutcome::Optimal);
        assert!((e.values()[1] - 2.0).abs() < 1e-9);
        let snap = e.basis();
        e.set_bounds(0, 0.0, 10.0);
        e.restore(&snap);
        assert_eq!(e.solve(), LpOutcome::Optimal);
        assert!((e.values()[0] - 10.0).abs() < 1e-9);
    }
}
