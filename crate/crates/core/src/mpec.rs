//! Single-actor MPEC: the upper-level planning problem of one state with the
//! market's optimality conditions embedded, linearized into a mixed-integer
//! conic program through SOS1 sets and a binary price expansion.
//!
//! The market price `λ` stays continuous inside the KKT rows. At the actor's
//! own nodes a discretized level `λ̃` is tied to it by `|λ − λ̃| ≤ Δλ/2`, and
//! the revenue term `λ̃·p↓` is linearized exactly on the bits.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ActorPolicy, Topology};
use crate::market::{
    build_kkt_system, build_market_lp, build_offers, rival_offer, KktSystem, MarketPoint, OfferTerm,
    RivalView,
};
use crate::solver::{
    branch_and_bound, branch_and_bound_with_clock, BnbOptions, Clock, ConicProgram, ObjSense,
    Sense, SolveResult, SolveStats, SolveStatus, VarId, VarKind,
};
use crate::uncertainty::{build_soc_constraints, Capacity, ChanceInputs, SocBlock};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MpecOptions {
    /// Bits K of the price expansion.
    pub bits: usize,
    pub lambda_min: f64,
    /// Price step Δλ; `1.25·max C / (2^K − 1)` when `None`.
    pub delta_lambda: Option<f64>,
    /// Candidate capacities of the rivals, fixing their offers.
    pub rivals: RivalView,
    /// When false the price product is left out of the program and reported
    /// by [`bilinear_product_terms`].
    pub linearize: bool,
    /// Cap on candidate capacity where no capital budget bounds it;
    /// ten times the peak system demand when `None`.
    pub max_candidate_capacity: Option<f64>,
}

impl Default for MpecOptions {
    fn default() -> Self {
        MpecOptions {
            bits: 10,
            lambda_min: 0.0,
            delta_lambda: None,
            rivals: RivalView::default(),
            linearize: true,
            max_candidate_capacity: None,
        }
    }
}

/// `λ_min + Δλ·Σ 2^k·bit_k`, bits least significant first.
pub fn expand_price(lambda_min: f64, delta: f64, bits: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut w = 1.0;
    for b in bits {
        sum += w * b;
        w *= 2.0;
    }
    lambda_min + delta * sum
}

/// Bits of the grid level nearest to `value`, clamped to the range.
pub fn nearest_level_bits(lambda_min: f64, delta: f64, bits: usize, value: f64) -> Vec<f64> {
    if bits == 0 || !(delta > 0.0) {
        return vec![0.0; bits];
    }
    let top = ((1u64 << bits.min(52)) - 1) as f64;
    let level = libm::round((value - lambda_min) / delta).clamp(0.0, top) as u64;
    (0..bits).map(|k| ((level >> k) & 1) as f64).collect()
}

/// Binary expansion of one price level `λ̃` at `(node, t, day)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceExpansion {
    pub node: usize,
    pub t: usize,
    pub day: usize,
    pub lambda_min: f64,
    pub delta: f64,
    pub z: Vec<VarId>,
    /// `λ̃`, defined by a row over the bits.
    pub level: VarId,
}

impl PriceExpansion {
    pub fn max_level(&self) -> f64 {
        self.lambda_min + self.delta * (libm::pow(2.0, self.z.len() as f64) - 1.0)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let bits: Vec<f64> = self.z.iter().map(|v| x[v.0]).collect();
        expand_price(self.lambda_min, self.delta, &bits)
    }
}

/// Add `K` bits and the level variable `λ̃ = λ_min + Δλ·Σ 2^k z_k`.
pub fn add_price_expansion(
    program: &mut ConicProgram,
    label: &str,
    (node, t, day): (usize, usize, usize),
    lambda_min: f64,
    delta: f64,
    bits: usize,
) -> PriceExpansion {
    let z: Vec<VarId> = (0..bits)
        .map(|k| program.add_binary(format!("z[{label},{}]", k + 1)))
        .collect();
    let mut e = PriceExpansion {
        node,
        t,
        day,
        lambda_min,
        delta,
        z,
        level: VarId(0),
    };
    e.level = program.add_var(format!("lt[{label}]"), lambda_min, e.max_level());
    let mut terms = vec![(e.level, 1.0)];
    let mut w = delta;
    for &b in &e.z {
        terms.push((b, -w));
        w *= 2.0;
    }
    program.add_row(format!("price[{label}]"), terms, Sense::Eq, lambda_min);
    e
}

/// Exact linearization of `λ̃·p` for `p ∈ [lower, upper]`: one product
/// `s_k = z_k·p` per bit with McCormick rows, which are exact for binary
/// `z`. Returns the `s` variables; see [`product_terms`].
pub fn linearize_bilinear_price(
    program: &mut ConicProgram,
    p: VarId,
    lower: f64,
    upper: f64,
    expansion: &PriceExpansion,
    label: &str,
) -> Result<Vec<VarId>> {
    if !(lower.is_finite() && upper.is_finite()) || lower > upper {
        return Err(Error::Invalid(format!(
            "price product `{label}` needs finite bounds, got [{lower}, {upper}]"
        )));
    }
    let (l, u) = (lower, upper);
    let mut s = Vec::with_capacity(expansion.z.len());
    for (k, &z) in expansion.z.iter().enumerate() {
        let name = format!("{label},{}", k + 1);
        let sk = program.add_var(format!("s[{name}]"), l.min(0.0), u.max(0.0));
        program.add_row(format!("mc_a[{name}]"), [(sk, 1.0), (z, -u)], Sense::Le, 0.0);
        program.add_row(format!("mc_b[{name}]"), [(sk, 1.0), (z, -l)], Sense::Ge, 0.0);
        program.add_row(format!("mc_c[{name}]"), [(sk, 1.0), (p, -1.0), (z, -u)], Sense::Ge, -u);
        program.add_row(format!("mc_d[{name}]"), [(sk, 1.0), (p, -1.0), (z, -l)], Sense::Le, -l);
        s.push(sk);
    }
    Ok(s)
}

/// Terms of `λ̃·p = λ_min·p + Δλ·Σ 2^k s_k`.
pub fn product_terms(expansion: &PriceExpansion, p: VarId, s: &[VarId]) -> Vec<(VarId, f64)> {
    let mut terms = vec![(p, expansion.lambda_min)];
    let mut w = expansion.delta;
    for &sk in s {
        terms.push((sk, w));
        w *= 2.0;
    }
    terms
}

/// Declare `{a, b}` an SOS1 pair; both must be non-negative variables.
pub fn sos1_complementarity(program: &mut ConicProgram, name: &str, a: VarId, b: VarId) -> Result<usize> {
    for v in [a, b] {
        if program.variables[v.0].lower < 0.0 {
            return Err(Error::Invalid(format!(
                "complementarity member `{}` may be negative",
                program.variables[v.0].name
            )));
        }
    }
    Ok(program.add_sos1(name, vec![a, b]))
}

/// `λ·p↓` term of the objective at `(node, t, day)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductTerm {
    pub node: usize,
    pub t: usize,
    pub day: usize,
    pub pdown: VarId,
    /// Index into [`MpecInstance::expansions`]; `None` if not linearized.
    pub expansion: Option<usize>,
    pub s: Vec<VarId>,
    /// Objective coefficient of the product (`−ω_e`).
    pub weight: f64,
}

/// Row indices of the upper-level constraint families.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MpecRows {
    pub balance: Vec<usize>,
    pub ramp: Vec<usize>,
    pub rps: Vec<usize>,
    pub capital_budget: Option<usize>,
    pub policy_budget: Vec<usize>,
    pub price_band: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpecInstance {
    pub state: usize,
    pub program: ConicProgram,
    pub own_units: Vec<usize>,
    pub own_nodes: Vec<usize>,
    /// `ḡ[day][t][unit]`, own units only.
    pub gbar: Vec<Vec<Vec<Option<VarId>>>>,
    /// Capacity variable of each own candidate.
    pub gmax: Vec<Option<VarId>>,
    /// Upper bound of each candidate capacity variable.
    pub gmax_bound: Vec<f64>,
    /// `p↓[day][t][node]`, own nodes only.
    pub pdown: Vec<Vec<Vec<Option<VarId>>>>,
    pub pdown_bounds: Vec<(f64, f64)>,
    /// Empty for the price-taker program.
    pub kkt: Vec<KktSystem>,
    pub expansions: Vec<PriceExpansion>,
    pub products: Vec<ProductTerm>,
    pub soc: Vec<SocBlock>,
    pub rows: MpecRows,
    pub bits: usize,
    pub lambda_min: f64,
    pub delta_lambda: f64,
    /// Bounds of every market price variable.
    pub lambda_range: (f64, f64),
    pub rivals: RivalView,
}

impl MpecInstance {
    /// Consensus variables: market dispatch `g[day][t][unit]` then prices
    /// `λ[day][t][node]`, in that order.
    pub fn hedged(&self) -> Vec<VarId> {
        let mut v = Vec::new();
        for k in &self.kkt {
            for row in &k.g {
                v.extend(row.iter().copied());
            }
        }
        for k in &self.kkt {
            for row in &k.lambda {
                v.extend(row.iter().copied());
            }
        }
        v
    }
}

fn max_cost(topo: &Topology<'_>) -> f64 {
    topo.units
        .iter()
        .map(|u| u.gen.marginal_cost)
        .fold(0.0, f64::max)
}

fn peak_demand(topo: &Topology<'_>) -> f64 {
    topo.demand
        .iter()
        .flatten()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max)
}

/// Budget-implied (or default) upper bound of each candidate's capacity.
fn candidate_bounds(topo: &Topology<'_>, policy: &ActorPolicy, options: &MpecOptions) -> Vec<f64> {
    let fallback = options
        .max_candidate_capacity
        .unwrap_or_else(|| 10.0 * peak_demand(topo).max(1.0));
    topo.units
        .iter()
        .map(|u| match (u.candidate, policy.capital_budget) {
            (None, _) => u.gen.max_output,
            (Some(c), Some(b)) if c.capital_cost > 0.0 => (b / c.capital_cost).min(fallback),
            (Some(_), _) => fallback,
        })
        .collect()
}

/// Fail early when the RPS target needs more renewable energy than the
/// existing fleet plus the affordable candidates can produce on some day.
pub fn rps_precheck(topo: &Topology<'_>, policy: &ActorPolicy, options: &MpecOptions) -> Result<()> {
    if policy.rps_target <= 0.0 {
        return Ok(());
    }
    let state = topo.state_index(&policy.state)?;
    let nodes = topo.nodes_of_state(state);
    let bounds = candidate_bounds(topo, policy, options);
    for day in 0..topo.n_days() {
        let energy = |u: usize| -> f64 {
            (0..topo.horizon())
                .map(|t| topo.units[u].gen.forecast_factor.at(t, day))
                .sum::<f64>()
        };
        let required = policy.rps_target * topo.total_demand(&nodes, day);
        let mut reachable = 0.0;
        let mut best_budgeted: f64 = 0.0;
        for u in topo.units_of_state(state).filter(|u| u.is_renewable()) {
            let e = energy(u.index) * bounds[u.index];
            match u.candidate {
                Some(c) if policy.capital_budget.is_some() && c.capital_cost > 0.0 => {
                    best_budgeted = best_budgeted.max(e)
                }
                _ => reachable += e,
            }
        }
        reachable += best_budgeted;
        if required > reachable * (1.0 + 1e-9) + 1e-9 {
            return Err(Error::Infeasible(format!(
                "state `{}`, day {}: RPS needs {required:.3} MWh of renewable energy, at most {reachable:.3} MWh is reachable within the capital budget",
                policy.state,
                day + 1
            )));
        }
    }
    Ok(())
}

enum Mode<'a> {
    Full,
    /// Upper level only, paying fixed prices `[day][t][node]`.
    PriceTaker(&'a [Vec<Vec<f64>>]),
}

/// Build the linearized MPEC of `policy.state`.
pub fn build_mpec(topo: &Topology<'_>, policy: &ActorPolicy, options: &MpecOptions) -> Result<MpecInstance> {
    policy.validate()?;
    rps_precheck(topo, policy, options)?;
    build(topo, policy, options, Mode::Full)
}

fn build(topo: &Topology<'_>, policy: &ActorPolicy, options: &MpecOptions, mode: Mode<'_>) -> Result<MpecInstance> {
    let state = topo.state_index(&policy.state)?;
    let horizon = topo.horizon();
    let days = topo.n_days();
    let n_units = topo.n_units();
    let n_nodes = topo.n_nodes();
    let grid = topo.grid;

    let bits = options.bits;
    if bits > 30 {
        return Err(Error::Invalid(format!("{bits} price bits is too many")));
    }
    let delta = match options.delta_lambda {
        Some(d) if d >= 0.0 && d.is_finite() => d,
        Some(d) => return Err(Error::Invalid(format!("price step {d} must be non-negative"))),
        None if bits == 0 => 0.0,
        None => {
            let c = max_cost(topo);
            1.25 * if c > 0.0 { c } else { 1.0 } / ((1u64 << bits) - 1) as f64
        }
    };
    let lambda_min = options.lambda_min;
    let lambda_max = lambda_min + delta * ((1u64 << bits) - 1) as f64;
    let lambda_range = (lambda_min - delta / 2.0, lambda_max + delta / 2.0);
    let tariff_daily = policy.capacity_tariff_daily(&grid.finance)?;

    let own_units: Vec<usize> = topo.units_of_state(state).map(|u| u.index).collect();
    let own_nodes = topo.nodes_of_state(state);
    let bounds = candidate_bounds(topo, policy, options);
    let mut program = ConicProgram::new(format!("mpec_{}", policy.state), ObjSense::Maximize);
    let mut rows = MpecRows::default();

    // investment
    let mut gmax = vec![None; n_units];
    for &i in &own_units {
        let u = &topo.units[i];
        if let Some(c) = u.candidate {
            let v = program.add_var(format!("gmax[{}]", u.id()), 0.0, bounds[i]);
            let mut cost = c.capital_cost;
            if u.is_renewable() {
                cost += tariff_daily;
            }
            program.add_objective(v, -cost);
            gmax[i] = Some(v);
        }
    }
    let cap_of = |i: usize| -> Capacity {
        match gmax[i] {
            Some(v) => Capacity::Var(v),
            None => Capacity::Fixed(topo.units[i].gen.max_output),
        }
    };

    // scheduled dispatch
    let mut gbar = vec![vec![vec![None; n_units]; horizon]; days];
    for day in 0..days {
        for t in 0..horizon {
            for &i in &own_units {
                let u = &topo.units[i];
                let name = format!("gbar[{},{},{}]", u.id(), t + 1, day + 1);
                let v = if u.is_renewable() {
                    let rho = u.gen.forecast_factor.at(t, day);
                    match gmax[i] {
                        None => {
                            let val = rho * u.gen.max_output;
                            program.add_var(name, val, val)
                        }
                        Some(g) => {
                            let v = program.add_var(name, 0.0, rho * bounds[i]);
                            program.add_row(
                                format!("gbar_res[{},{},{}]", u.id(), t + 1, day + 1),
                                [(v, 1.0), (g, -rho)],
                                Sense::Eq,
                                0.0,
                            );
                            v
                        }
                    }
                } else {
                    program.add_var(name, 0.0, bounds[i])
                };
                gbar[day][t][i] = Some(v);
            }
        }
    }

    // expected operating cost and energy tariff, ω·(C + P^ET)·E[g]
    let renewables: Vec<usize> = own_units
        .iter()
        .copied()
        .filter(|&i| topo.units[i].is_renewable())
        .collect();
    for day in 0..days {
        let w = grid.rep_days[day].weight;
        for t in 0..horizon {
            // M = Σ cap_j·υ_j
            let mut shift: Vec<(Capacity, f64)> = Vec::new();
            for &j in &renewables {
                shift.push((cap_of(j), topo.units[j].gen.error_mean.at(t, day)));
            }
            for &i in &own_units {
                let u = &topo.units[i];
                let g = gbar[day][t][i].expect("own unit");
                if u.is_renewable() {
                    let c = u.gen.marginal_cost + policy.feed_in_tariff;
                    program.add_objective(g, -w * c);
                    let mean = u.gen.error_mean.at(t, day);
                    match cap_of(i) {
                        Capacity::Fixed(cap) => program.add_objective_constant(-w * c * cap * mean),
                        Capacity::Var(v) => program.add_objective(v, -w * c * mean),
                    }
                } else {
                    let c = u.gen.marginal_cost;
                    program.add_objective(g, -w * c);
                    let alpha = topo.participation(i, t, day);
                    for &(cap, mean) in &shift {
                        match cap {
                            Capacity::Fixed(v) => program.add_objective_constant(w * c * alpha * v * mean),
                            Capacity::Var(v) => program.add_objective(v, w * c * alpha * mean),
                        }
                    }
                }
            }
            let d: f64 = own_nodes.iter().map(|&n| topo.demand[day][t][n]).sum();
            program.add_objective_constant(w * policy.retail_tariff * d);
        }
    }

    // net purchases and zonal balance
    let mut pdown_bounds = vec![(0.0, 0.0); n_nodes];
    for &n in &own_nodes {
        let cap: f64 = topo.units_at(n).map(|u| bounds[u.index]).sum();
        let dmax = (0..days)
            .flat_map(|e| (0..horizon).map(move |t| (e, t)))
            .map(|(e, t)| topo.demand[e][t][n])
            .fold(f64::NEG_INFINITY, f64::max);
        let dmin = (0..days)
            .flat_map(|e| (0..horizon).map(move |t| (e, t)))
            .map(|(e, t)| topo.demand[e][t][n])
            .fold(f64::INFINITY, f64::min);
        let (mut lo, mut hi) = (dmin - cap, dmax);
        if let Some(&p) = policy.interface_limit.get(&grid.nodes[n].id) {
            lo = lo.max(-p);
            hi = hi.min(p);
        }
        if lo > hi {
            return Err(Error::Infeasible(format!(
                "node `{}`: interface limit cannot cover demand",
                grid.nodes[n].id
            )));
        }
        pdown_bounds[n] = (lo, hi);
    }
    let mut pdown = vec![vec![vec![None; n_nodes]; horizon]; days];
    for day in 0..days {
        for t in 0..horizon {
            for &n in &own_nodes {
                let label = format!("{},{},{}", grid.nodes[n].id, t + 1, day + 1);
                let (lo, hi) = pdown_bounds[n];
                let p = program.add_var(format!("pdown[{label}]"), lo, hi);
                let mut terms: Vec<(VarId, f64)> = topo
                    .units_at(n)
                    .map(|u| (gbar[day][t][u.index].expect("own unit"), 1.0))
                    .collect();
                terms.push((p, 1.0));
                rows.balance
                    .push(program.add_row(format!("zbal[{label}]"), terms, Sense::Eq, topo.demand[day][t][n]));
                pdown[day][t][n] = Some(p);
            }
        }
    }

    // ramping, first hour free
    for day in 0..days {
        for t in 1..horizon {
            for &i in &own_units {
                let u = &topo.units[i];
                if u.is_renewable() {
                    continue;
                }
                let now = gbar[day][t][i].expect("own unit");
                let before = gbar[day][t - 1][i].expect("own unit");
                let label = format!("{},{},{}", u.id(), t + 1, day + 1);
                if let Some(up) = u.gen.ramp_up {
                    rows.ramp.push(program.add_row(
                        format!("ramp_up[{label}]"),
                        [(now, 1.0), (before, -1.0)],
                        Sense::Le,
                        up,
                    ));
                }
                if let Some(down) = u.gen.ramp_down {
                    rows.ramp.push(program.add_row(
                        format!("ramp_down[{label}]"),
                        [(now, 1.0), (before, -1.0)],
                        Sense::Ge,
                        -down,
                    ));
                }
            }
        }
    }

    // RPS and budgets
    for day in 0..days {
        let res_terms: Vec<(VarId, f64)> = (0..horizon)
            .flat_map(|t| renewables.iter().map(move |&j| (t, j)))
            .map(|(t, j)| (gbar[day][t][j].expect("own unit"), 1.0))
            .collect();
        if policy.rps_target > 0.0 {
            let need = policy.rps_target * topo.total_demand(&own_nodes, day);
            rows.rps
                .push(program.add_row(format!("rps[{}]", day + 1), res_terms.clone(), Sense::Ge, need));
        }
        if let Some(b) = policy.policy_budget {
            let mut terms: Vec<(VarId, f64)> = res_terms
                .iter()
                .map(|&(v, _)| (v, policy.feed_in_tariff))
                .collect();
            for &j in &renewables {
                if let Some(v) = gmax[j] {
                    terms.push((v, tariff_daily));
                }
            }
            rows.policy_budget
                .push(program.add_row(format!("policy_budget[{}]", day + 1), terms, Sense::Le, b));
        }
    }
    if let Some(b) = policy.capital_budget {
        let terms: Vec<(VarId, f64)> = own_units
            .iter()
            .filter_map(|&i| gmax[i].map(|v| (v, topo.units[i].candidate.expect("candidate").capital_cost)))
            .collect();
        rows.capital_budget = Some(program.add_row("capital_budget", terms, Sense::Le, b));
    }

    // chance constraints
    let gbar_fn = |i: usize, t: usize, day: usize| gbar[day][t][i].expect("own unit");
    let soc = build_soc_constraints(
        &mut program,
        &ChanceInputs {
            topo,
            state,
            eta: policy.security_tolerance,
            gbar: &gbar_fn,
            capacity: &cap_of,
        },
    )?;

    let mut kkt = Vec::new();
    let mut expansions = Vec::new();
    let mut products = Vec::new();
    match mode {
        Mode::PriceTaker(prices) => {
            for day in 0..days {
                let w = grid.rep_days[day].weight;
                for t in 0..horizon {
                    for &n in &own_nodes {
                        program.add_objective(pdown[day][t][n].expect("own node"), -w * prices[day][t][n]);
                    }
                }
            }
        }
        Mode::Full => {
            let mb = lambda_range.0.abs().max(lambda_range.1.abs()) + max_cost(topo);
            for day in 0..days {
                let w = grid.rep_days[day].weight;
                // market prices, with a discretized level at own nodes
                let mut lam = vec![vec![VarId(0); n_nodes]; horizon];
                for (t, row) in lam.iter_mut().enumerate() {
                    for (n, slot) in row.iter_mut().enumerate() {
                        let label = format!("{},{},{}", grid.nodes[n].id, t + 1, day + 1);
                        let l = program.add_var(format!("lambda[{label}]"), lambda_range.0, lambda_range.1);
                        *slot = l;
                        let Some(p) = pdown[day][t][n] else { continue };
                        if !options.linearize {
                            products.push(ProductTerm {
                                node: n,
                                t,
                                day,
                                pdown: p,
                                expansion: None,
                                s: Vec::new(),
                                weight: -w,
                            });
                            continue;
                        }
                        let e = add_price_expansion(&mut program, &label, (n, t, day), lambda_min, delta, bits);
                        rows.price_band.push(program.add_row(
                            format!("band_hi[{label}]"),
                            [(l, 1.0), (e.level, -1.0)],
                            Sense::Le,
                            delta / 2.0,
                        ));
                        rows.price_band.push(program.add_row(
                            format!("band_lo[{label}]"),
                            [(l, 1.0), (e.level, -1.0)],
                            Sense::Ge,
                            -delta / 2.0,
                        ));
                        let (lo, hi) = pdown_bounds[n];
                        let s = linearize_bilinear_price(&mut program, p, lo, hi, &e, &label)?;
                        for (v, c) in product_terms(&e, p, &s) {
                            program.add_objective(v, -w * c);
                        }
                        products.push(ProductTerm {
                            node: n,
                            t,
                            day,
                            pdown: p,
                            expansion: Some(expansions.len()),
                            s,
                            weight: -w,
                        });
                        expansions.push(e);
                    }
                }
                let offers = |i: usize, t: usize| -> OfferTerm {
                    match gbar[day][t][i] {
                        Some(v) => OfferTerm::Var(v),
                        None => {
                            let u = &topo.units[i];
                            OfferTerm::Fixed(rival_offer(
                                u.gen.forecast_factor.at(t, day),
                                options.rivals.capacity(topo, i),
                                u.gen.reserve.at(t, day),
                            ))
                        }
                    }
                };
                let lam_fn = |n: usize, t: usize| lam[t][n];
                kkt.push(build_kkt_system(&mut program, topo, day, &offers, Some(&lam_fn), mb)?);
            }
        }
    }

    program.normalize();
    Ok(MpecInstance {
        state,
        program,
        own_units,
        own_nodes,
        gbar,
        gmax,
        gmax_bound: bounds,
        pdown,
        pdown_bounds,
        kkt,
        expansions,
        products,
        soc,
        rows,
        bits,
        lambda_min,
        delta_lambda: delta,
        lambda_range,
        rivals: options.rivals.clone(),
    })
}

/// Price products of the objective that are not backed by a price
/// expansion; empty for a correctly linearized instance.
pub fn bilinear_product_terms(instance: &MpecInstance) -> Vec<String> {
    let name = |v: VarId| instance.program.variables[v.0].name.clone();
    instance
        .products
        .iter()
        .filter(|p| match p.expansion {
            None => true,
            Some(e) => instance.expansions[e].z.len() != p.s.len(),
        })
        .map(|p| {
            let lam = &instance.kkt[p.day].lambda[p.t][p.node];
            format!("{}*{}", name(*lam), name(p.pdown))
        })
        .collect()
}

/// Per-actor outcome read from a solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorPlan {
    pub state: usize,
    /// Capacity of each own candidate (zero elsewhere), indexed by unit.
    pub capacity: Vec<f64>,
    /// `ḡ[day][t][unit]`, zero for rival units.
    pub gbar: Vec<Vec<Vec<f64>>>,
    /// `p↓[day][t][node]`, zero for rival nodes.
    pub pdown: Vec<Vec<Vec<f64>>>,
    /// Embedded market point per day.
    pub market: Vec<MarketPoint>,
    /// Program objective (uses the discretized price levels).
    pub objective: f64,
    pub costs: CostBreakdown,
}

/// Objective components in $ per day, evaluated at the market prices.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub retail_revenue: f64,
    pub purchase_cost: f64,
    pub operating_cost: f64,
    pub energy_tariff: f64,
    pub capacity_tariff: f64,
    pub investment: f64,
}

impl CostBreakdown {
    pub fn welfare(&self) -> f64 {
        self.retail_revenue
            - self.purchase_cost
            - self.operating_cost
            - self.energy_tariff
            - self.capacity_tariff
            - self.investment
    }
}

impl MpecInstance {
    /// Read the plan out of a full solution vector.
    pub fn plan(&self, topo: &Topology<'_>, policy: &ActorPolicy, x: &[f64]) -> Result<ActorPlan> {
        let n_units = topo.n_units();
        let capacity: Vec<f64> = (0..n_units)
            .map(|i| self.gmax[i].map_or(0.0, |v| x[v.0].max(0.0)))
            .collect();
        let val = |o: &Option<VarId>| o.map_or(0.0, |v| x[v.0]);
        let gbar: Vec<Vec<Vec<f64>>> = self
            .gbar
            .iter()
            .map(|d| d.iter().map(|r| r.iter().map(val).collect()).collect())
            .collect();
        let pdown: Vec<Vec<Vec<f64>>> = self
            .pdown
            .iter()
            .map(|d| d.iter().map(|r| r.iter().map(val).collect()).collect())
            .collect();
        let market: Vec<MarketPoint> = self.kkt.iter().map(|k| k.point(x)).collect();
        let costs = cost_breakdown(topo, policy, self.state, &capacity, &gbar, &pdown, &market)?;
        Ok(ActorPlan {
            state: self.state,
            capacity,
            gbar,
            pdown,
            market,
            objective: self.program.objective_value(x),
            costs,
        })
    }
}

/// Evaluate the actor's objective components for a plan, pricing purchases
/// at the market prices of `market` (or at zero when it is empty).
pub fn cost_breakdown(
    topo: &Topology<'_>,
    policy: &ActorPolicy,
    state: usize,
    capacity: &[f64],
    gbar: &[Vec<Vec<f64>>],
    pdown: &[Vec<Vec<f64>>],
    market: &[MarketPoint],
) -> Result<CostBreakdown> {
    let grid = topo.grid;
    let tariff_daily = policy.capacity_tariff_daily(&grid.finance)?;
    let own: Vec<usize> = topo.units_of_state(state).map(|u| u.index).collect();
    let nodes = topo.nodes_of_state(state);
    let mut c = CostBreakdown::default();
    for &i in &own {
        if let Some(cand) = topo.units[i].candidate {
            c.investment += cand.capital_cost * capacity[i];
            if topo.units[i].is_renewable() {
                c.capacity_tariff += tariff_daily * capacity[i];
            }
        }
    }
    let cap = |i: usize| {
        if topo.units[i].is_candidate() {
            capacity[i]
        } else {
            topo.units[i].gen.max_output
        }
    };
    for day in 0..topo.n_days() {
        let w = grid.rep_days[day].weight;
        for t in 0..topo.horizon() {
            let shift: f64 = own
                .iter()
                .filter(|&&j| topo.units[j].is_renewable())
                .map(|&j| cap(j) * topo.units[j].gen.error_mean.at(t, day))
                .sum();
            for &i in &own {
                let u = &topo.units[i];
                let g = gbar[day][t][i];
                if u.is_renewable() {
                    let e = g + cap(i) * u.gen.error_mean.at(t, day);
                    c.operating_cost += w * u.gen.marginal_cost * e;
                    c.energy_tariff += w * policy.feed_in_tariff * e;
                } else {
                    let e = g - topo.participation(i, t, day) * shift;
                    c.operating_cost += w * u.gen.marginal_cost * e;
                }
            }
            for &n in &nodes {
                c.retail_revenue += w * policy.retail_tariff * topo.demand[day][t][n];
                if let Some(m) = market.get(day) {
                    c.purchase_cost += w * m.lambda[t][n] * pdown[day][t][n];
                }
            }
        }
    }
    Ok(c)
}

/// Result of solving an MPEC.
#[derive(Debug, Clone, PartialEq)]
pub struct MpecSolution {
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: f64,
    pub values: Vec<f64>,
    pub plan: Option<ActorPlan>,
    pub stats: SolveStats,
}

/// Solve an MPEC with branch and bound. A price-taker start is computed
/// when `options.initial` is empty.
pub fn solve_mpec(
    instance: &MpecInstance,
    topo: &Topology<'_>,
    policy: &ActorPolicy,
    options: &BnbOptions,
    clock: &dyn Clock,
) -> Result<MpecSolution> {
    let mut options = options.clone();
    if options.initial.is_none() {
        options.initial = price_taker_start(instance, topo, policy)?;
    }
    let result = branch_and_bound_with_clock(&instance.program, &options, clock)?;
    finish_mpec(instance, topo, policy, result)
}

/// Turn a raw solve of `instance.program` into an [`MpecSolution`].
pub fn finish_mpec(
    instance: &MpecInstance,
    topo: &Topology<'_>,
    policy: &ActorPolicy,
    result: SolveResult,
) -> Result<MpecSolution> {
    let plan = if result.status.has_solution() {
        Some(instance.plan(topo, policy, &result.values)?)
    } else {
        None
    };
    Ok(MpecSolution {
        status: result.status,
        objective: result.objective,
        best_bound: result.best_bound,
        values: result.values,
        plan,
        stats: result.stats,
    })
}

/// A feasible point of the full program: plan the upper level against the
/// prices the market would clear at with all own units offering their
/// full capacity, clear the market for that plan, and round its prices to
/// the nearest levels. `None` if any step has no solution.
pub fn price_taker_start(
    instance: &MpecInstance,
    topo: &Topology<'_>,
    policy: &ActorPolicy,
) -> Result<Option<Vec<f64>>> {
    if instance.kkt.is_empty() {
        return Ok(None);
    }
    let days = topo.n_days();
    let state = instance.state;
    let rivals = &instance.rivals;
    let (lo, hi) = instance.lambda_range;

    let mut prices = Vec::with_capacity(days);
    for day in 0..days {
        let offers = build_offers(
            topo,
            Some(state),
            day,
            &|i, t| {
                let u = &topo.units[i];
                if u.is_candidate() {
                    0.0
                } else if u.is_renewable() {
                    u.gen.forecast_factor.at(t, day) * u.gen.max_output
                } else {
                    u.gen.max_output
                }
            },
            rivals,
        );
        let lam = match build_market_lp(topo, &offers, day).and_then(|lp| lp.solve()) {
            Ok(s) => s.point.map(|p| p.lambda),
            Err(_) => None,
        };
        let lam = lam.unwrap_or_else(|| vec![vec![hi; topo.n_nodes()]; topo.horizon()]);
        prices.push(
            lam.into_iter()
                .map(|r| r.into_iter().map(|v| v.clamp(lo, hi)).collect())
                .collect::<Vec<Vec<f64>>>(),
        );
    }
    let options = MpecOptions {
        bits: instance.bits,
        lambda_min: instance.lambda_min,
        delta_lambda: Some(instance.delta_lambda),
        rivals: rivals.clone(),
        linearize: true,
        max_candidate_capacity: None,
    };
    let mut upper = build(topo, policy, &options, Mode::PriceTaker(&prices))?;
    // same candidate bounds as the full program
    for (i, v) in upper.gmax.iter().enumerate() {
        if let Some(v) = v {
            upper.program.variables[v.0].upper = instance.gmax_bound[i];
        }
    }
    let up = branch_and_bound(&upper.program, &BnbOptions::default())?;
    if !up.status.has_solution() {
        return Ok(None);
    }
    let val = |o: &Option<VarId>| o.map_or(0.0, |v| up.values[v.0]);

    let mut fixed: Vec<(VarId, f64)> = Vec::new();
    for (a, b) in instance.gmax.iter().zip(&upper.gmax) {
        if let Some(a) = a {
            fixed.push((*a, val(b)));
        }
    }
    for day in 0..days {
        for t in 0..topo.horizon() {
            for i in 0..topo.n_units() {
                if let Some(a) = instance.gbar[day][t][i] {
                    fixed.push((a, val(&upper.gbar[day][t][i])));
                }
            }
            for n in 0..topo.n_nodes() {
                if let Some(a) = instance.pdown[day][t][n] {
                    fixed.push((a, val(&upper.pdown[day][t][n])));
                }
            }
        }
    }
    let mut x = vec![0.0; instance.program.n_vars()];
    for &(v, a) in &fixed {
        x[v.0] = a;
    }
    for (day, k) in instance.kkt.iter().enumerate() {
        let offers = build_offers(topo, Some(state), day, &|i, t| val(&upper.gbar[day][t][i]), rivals);
        let lp = build_market_lp(topo, &offers, day)?;
        let Ok(sol) = lp.solve() else { return Ok(None) };
        let Some(point) = sol.point else { return Ok(None) };
        if point.lambda.iter().flatten().any(|&l| l < lo - 1e-9 || l > hi + 1e-9) {
            return Ok(None);
        }
        let caps: Vec<f64> = topo.lines.iter().map(|l| l.capacity).collect();
        k.assign(&point, &offers, &caps, &mut x);
        for row in k.g.iter().chain(&k.f).chain(&k.theta).chain(&k.lambda) {
            for &v in row {
                fixed.push((v, x[v.0]));
            }
        }
    }
    for e in &instance.expansions {
        let lam = x[instance.kkt[e.day].lambda[e.t][e.node].0];
        let bits = nearest_level_bits(e.lambda_min, e.delta, e.z.len(), lam);
        for (&z, b) in e.z.iter().zip(bits) {
            fixed.push((z, b));
        }
    }
    complete_point(&instance.program, &fixed)
}

/// Fill in the remaining variables of `program` with the given values held
/// fixed; `None` if that is infeasible.
pub fn complete_point(program: &ConicProgram, fixed: &[(VarId, f64)]) -> Result<Option<Vec<f64>>> {
    let mut p = program.clone();
    for &(v, a) in fixed {
        let var = &mut p.variables[v.0];
        let a = if var.kind == VarKind::Binary {
            libm::round(a)
        } else {
            a.clamp(var.lower, var.upper)
        };
        var.lower = a;
        var.upper = a;
    }
    let options = BnbOptions {
        node_limit: 200,
        ..BnbOptions::default()
    };
    let r = branch_and_bound(&p, &options)?;
    if !r.status.has_solution() || program.max_violation(&r.values) > 1e-6 {
        return Ok(None);
    }
    Ok(Some(r.values))
}
