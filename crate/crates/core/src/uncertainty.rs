//! Gaussian forecast errors, affine recourse and the second-order cone form
//! of the dispatch chance constraints.
//!
//! A controllable unit follows `g = ḡ − α·Σ_j ε_j` over the renewables `j` of
//! its state, with `ε_j ~ N(cap_j·υ_j, (cap_j·σ_j)²)`. Each bound
//! `P[g ≤ G_max] ≥ 1 − η` becomes `[ȳ; x] ∈ K` with
//! `z·α·ȳ = G_max − ḡ + α·Σ cap_j·υ_j` and `x_j = cap_j·σ_j`, `z = Φ⁻¹(1 − η)`;
//! the lower bound is symmetric.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::Topology;
use crate::solver::{ConicProgram, Sense, VarId};
use crate::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / core::f64::consts::SQRT_2)
}

/// Acklam's rational approximation, relative error about 1e-9.
fn quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail(libm::sqrt(-2.0 * libm::log(p)))
    } else if p > 1.0 - 0.02425 {
        -tail(libm::sqrt(-2.0 * libm::log(1.0 - p)))
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// `Φ⁻¹(p)`: rational approximation refined by bisection on the CDF.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Invalid(format!("quantile probability {p} outside (0, 1)")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    if p > 0.5 {
        return normal_quantile(1.0 - p).map(|z| -z);
    }
    let z0 = quantile_guess(p);
    let mut step = 1e-6 * (1.0 + libm::fabs(z0));
    let (mut lo, mut hi) = (z0 - step, z0 + step);
    while normal_cdf(lo) > p {
        step *= 2.0;
        lo -= step;
    }
    while normal_cdf(hi) < p {
        step *= 2.0;
        hi += step;
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Standard deviation of a controllable unit's dispatch: `α·√Σ(cap·σ)²`.
pub fn forecast_stdev(alpha: f64, entries: &[(f64, f64)]) -> f64 {
    alpha * libm::sqrt(entries.iter().map(|&(cap, sd)| (cap * sd) * (cap * sd)).sum())
}

/// Capacity of a unit in the program: a number or an investment variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Capacity {
    Fixed(f64),
    Var(VarId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSide {
    Upper,
    Lower,
}

/// One chance-constrained dispatch bound.
#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub unit: usize,
    pub t: usize,
    pub day: usize,
    pub side: BoundSide,
    pub alpha: f64,
    /// `ȳ` or `y̲`; `None` when the bound is deterministic.
    pub head: Option<VarId>,
    pub tail: Vec<VarId>,
    /// Index of the defining row (or the deterministic bound row).
    pub row: usize,
    pub cone: Option<usize>,
}

/// Inputs for [`build_soc_constraints`].
pub struct ChanceInputs<'a> {
    pub topo: &'a Topology<'a>,
    pub state: usize,
    /// Violation probability η.
    pub eta: f64,
    /// Scheduled dispatch `ḡ` of an own controllable unit at `(unit, t, day)`.
    pub gbar: &'a dyn Fn(usize, usize, usize) -> VarId,
    pub capacity: &'a dyn Fn(usize) -> Capacity,
}

/// Add the cone reformulation of all dispatch chance constraints of the
/// state's controllable units. Units with `α = 0`, and states without
/// renewables, get deterministic bounds `G_min ≤ ḡ ≤ G_max` instead.
pub fn build_soc_constraints(program: &mut ConicProgram, inputs: &ChanceInputs<'_>) -> Result<Vec<SocBlock>> {
    let topo = inputs.topo;
    if !(inputs.eta > 0.0 && inputs.eta < 0.5) {
        return Err(Error::Invalid(format!(
            "violation probability {} outside (0, 0.5)",
            inputs.eta
        )));
    }
    let z = normal_quantile(1.0 - inputs.eta)?;
    let renewables: Vec<usize> = topo
        .units_of_state(inputs.state)
        .filter(|u| u.is_renewable())
        .map(|u| u.index)
        .collect();
    let controllables: Vec<usize> = topo
        .units_of_state(inputs.state)
        .filter(|u| !u.is_renewable())
        .map(|u| u.index)
        .collect();
    let cap_terms = |unit: usize, coef: f64| -> (Vec<(VarId, f64)>, f64) {
        match (inputs.capacity)(unit) {
            Capacity::Fixed(c) => (Vec::new(), coef * c),
            Capacity::Var(v) => (vec![(v, coef)], 0.0),
        }
    };
    let mut blocks = Vec::new();
    for day in 0..topo.n_days() {
        for t in 0..topo.horizon() {
            // shared tail x_j = cap_j·σ_j and mean shift Σ cap_j·υ_j
            let mut tail = Vec::with_capacity(renewables.len());
            let mut shift_terms: Vec<(VarId, f64)> = Vec::new();
            let mut shift_const = 0.0;
            for &j in &renewables {
                let g = topo.units[j].gen;
                let sd = g.error_sd.at(t, day);
                let mean = g.error_mean.at(t, day);
                let name = format!("x[{},{},{}]", topo.units[j].id(), t + 1, day + 1);
                let x = match (inputs.capacity)(j) {
                    Capacity::Fixed(c) => program.add_var(name, c * sd, c * sd),
                    Capacity::Var(v) => {
                        let x = program.add_var(name, 0.0, f64::INFINITY);
                        program.add_row(
                            format!("xdef[{},{},{}]", topo.units[j].id(), t + 1, day + 1),
                            [(x, 1.0), (v, -sd)],
                            Sense::Eq,
                            0.0,
                        );
                        x
                    }
                };
                tail.push(x);
                let (terms, c) = cap_terms(j, mean);
                shift_terms.extend(terms);
                shift_const += c;
            }
            let stochastic = !renewables.is_empty();
            for &i in &controllables {
                let alpha = topo.participation(i, t, day);
                let unit = &topo.units[i];
                let gbar = (inputs.gbar)(i, t, day);
                let min_factor = unit.candidate.map(|c| c.min_output_factor);
                let label = format!("{},{},{}", unit.id(), t + 1, day + 1);
                for side in [BoundSide::Upper, BoundSide::Lower] {
                    // bound expression B = cap (upper) or G_min / Γ·g^max (lower)
                    let (bound_terms, bound_const) = match (side, min_factor) {
                        (BoundSide::Upper, _) => cap_terms(i, 1.0),
                        (BoundSide::Lower, Some(gamma)) => cap_terms(i, gamma),
                        (BoundSide::Lower, None) => (Vec::new(), unit.gen.min_output),
                    };
                    let sign = match side {
                        BoundSide::Upper => 1.0,
                        BoundSide::Lower => -1.0,
                    };
                    if alpha <= 0.0 || !stochastic {
                        // ḡ ≤ B  or  ḡ ≥ B
                        let mut terms = vec![(gbar, 1.0)];
                        terms.extend(bound_terms.iter().map(|&(v, a)| (v, -a)));
                        let sense = if side == BoundSide::Upper { Sense::Le } else { Sense::Ge };
                        let row = program.add_row(format!("gbound[{label}]"), terms, sense, bound_const);
                        blocks.push(SocBlock {
                            unit: i,
                            t,
                            day,
                            side,
                            alpha,
                            head: None,
                            tail: Vec::new(),
                            row,
                            cone: None,
                        });
                        continue;
                    }
                    // upper: zα·ȳ = B − ḡ + α·M ; lower: zα·y̲ = ḡ − α·M − B
                    let head_name = match side {
                        BoundSide::Upper => format!("ybar[{label}]"),
                        BoundSide::Lower => format!("ylow[{label}]"),
                    };
                    let y = program.add_var(head_name.clone(), 0.0, f64::INFINITY);
                    let mut terms = vec![(y, z * alpha), (gbar, sign)];
                    terms.extend(bound_terms.iter().map(|&(v, a)| (v, -sign * a)));
                    terms.extend(shift_terms.iter().map(|&(v, a)| (v, -sign * alpha * a)));
                    let rhs = sign * (bound_const + alpha * shift_const);
                    let row = program.add_row(format!("def_{head_name}"), terms, Sense::Eq, rhs);
                    let cone = program.add_cone(format!("soc_{head_name}"), y, tail.clone());
                    blocks.push(SocBlock {
                        unit: i,
                        t,
                        day,
                        side,
                        alpha,
                        head: Some(y),
                        tail: tail.clone(),
                        row,
                        cone: Some(cone),
                    });
                }
            }
        }
    }
    Ok(blocks)
}

/// Draw `n` error scenarios for one day, `[sample][t][unit]`; zero for
/// controllable units. Deterministic for a given seed.
pub fn sample_errors(
    topo: &Topology<'_>,
    day: usize,
    capacities: &[f64],
    seed: u64,
    n: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    if n == 0 {
        return Err(Error::Invalid("need at least one sample".into()));
    }
    if capacities.len() != topo.n_units() {
        return Err(Error::Shape(format!(
            "{} capacities for {} units",
            capacities.len(),
            topo.n_units()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = topo.horizon();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut by_t = vec![vec![0.0; topo.n_units()]; horizon];
        for (t, row) in by_t.iter_mut().enumerate() {
            for u in topo.units.iter().filter(|u| u.is_renewable()) {
                let cap = capacities[u.index];
                let draw: f64 = StandardNormal.sample(&mut rng);
                row[u.index] = cap * (u.gen.error_mean.at(t, day) + u.gen.error_sd.at(t, day) * draw);
            }
        }
        out.push(by_t);
    }
    Ok(out)
}
