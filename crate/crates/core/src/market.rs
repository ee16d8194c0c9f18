//! Wholesale market clearing: a DC power flow LP per representative day, and
//! its KKT conditions embedded as linear rows plus SOS1 complementarity.
//!
//! Sign conventions follow the welfare-maximizing market: `λ` is the
//! marginal cost of serving one more MW (the negated balance shadow price),
//! `ξ` the negated shadow price of the flow definition `f = (θ_from − θ_to)/X`,
//! and `γ̲, γ̄, δ̲, δ̄ ≥ 0` the multipliers of `0 ≤ g ≤ g^o`, `−F ≤ f ≤ F`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::Topology;
use crate::solver::{solve_lp, ConicProgram, ObjSense, Sense, SolveStatus, VarId};
use crate::{Error, Result};

/// Rival view of candidate capacity; rivals offer nothing from candidates
/// unless told otherwise.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RivalView {
    /// Per unit index; empty means zero everywhere.
    pub candidate_capacity: Vec<f64>,
}

impl RivalView {
    pub fn capacity(&self, topo: &Topology<'_>, unit: usize) -> f64 {
        if topo.units[unit].is_candidate() {
            self.candidate_capacity.get(unit).copied().unwrap_or(0.0)
        } else {
            topo.units[unit].gen.max_output
        }
    }
}

/// Rival offer `ρ·cap − R`, clipped at zero.
pub fn rival_offer(forecast_factor: f64, capacity: f64, reserve: f64) -> f64 {
    (forecast_factor * capacity - reserve).max(0.0)
}

/// Offers `g^o[t][unit]` for one day: own units (state `own`) offer their
/// scheduled dispatch `ḡ`, everyone else `ρ·cap − R` clipped at zero.
pub fn build_offers(
    topo: &Topology<'_>,
    own: Option<usize>,
    day: usize,
    gbar: &dyn Fn(usize, usize) -> f64,
    rivals: &RivalView,
) -> Vec<Vec<f64>> {
    (0..topo.horizon())
        .map(|t| {
            topo.units
                .iter()
                .map(|u| {
                    if Some(u.state) == own {
                        gbar(u.index, t)
                    } else {
                        rival_offer(
                            u.gen.forecast_factor.at(t, day),
                            rivals.capacity(topo, u.index),
                            u.gen.reserve.at(t, day),
                        )
                    }
                })
                .collect()
        })
        .collect()
}

/// The market LP of one day, as a [`ConicProgram`] with index maps.
#[derive(Debug, Clone)]
pub struct MarketLp {
    pub day: usize,
    pub program: ConicProgram,
    /// `[t][unit]`
    pub g: Vec<Vec<VarId>>,
    /// `[t][line]`
    pub f: Vec<Vec<VarId>>,
    /// `[t][node]`
    pub theta: Vec<Vec<VarId>>,
    pub balance_rows: Vec<Vec<usize>>,
    pub flow_rows: Vec<Vec<usize>>,
    pub offers: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    pub costs: Vec<f64>,
    pub lines: Vec<(usize, usize, f64, f64)>,
    pub unit_node: Vec<usize>,
    pub reference: Vec<usize>,
}

/// Primal and dual market outcome of one day, all indexed `[t][..]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketPoint {
    pub g: Vec<Vec<f64>>,
    pub f: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub xi: Vec<Vec<f64>>,
    pub gamma_lo: Vec<Vec<f64>>,
    pub gamma_hi: Vec<Vec<f64>>,
    pub delta_lo: Vec<Vec<f64>>,
    pub delta_hi: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketSolution {
    pub status: SolveStatus,
    /// `Σ −C·g`
    pub welfare: f64,
    pub point: Option<MarketPoint>,
}

/// Build the market LP of `day` for offers `[t][unit]`.
pub fn build_market_lp(topo: &Topology<'_>, offers: &[Vec<f64>], day: usize) -> Result<MarketLp> {
    let horizon = topo.horizon();
    if offers.len() != horizon || offers.iter().any(|o| o.len() != topo.n_units()) {
        return Err(Error::Shape(format!(
            "offers must be {horizon} hours x {} units",
            topo.n_units()
        )));
    }
    if let Some(v) = offers.iter().flatten().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Invalid(format!("offer {v} must be finite and non-negative")));
    }
    let mut p = ConicProgram::new(format!("market-day{}", day + 1), ObjSense::Maximize);
    let (mut g, mut f, mut theta) = (Vec::new(), Vec::new(), Vec::new());
    let (mut balance_rows, mut flow_rows) = (Vec::new(), Vec::new());
    for t in 0..horizon {
        let gt: Vec<VarId> = topo
            .units
            .iter()
            .map(|u| p.add_var(format!("g[{},{}]", u.id(), t + 1), 0.0, offers[t][u.index]))
            .collect();
        let ft: Vec<VarId> = topo
            .lines
            .iter()
            .zip(&topo.grid.lines)
            .map(|(l, line)| p.add_var(format!("f[{},{}]", line.id, t + 1), -l.capacity, l.capacity))
            .collect();
        let tht: Vec<VarId> = (0..topo.n_nodes())
            .map(|n| {
                let name = format!("theta[{},{}]", topo.grid.nodes[n].id, t + 1);
                if topo.reference[n] == n {
                    p.add_var(name, 0.0, 0.0)
                } else {
                    p.add_free(name)
                }
            })
            .collect();
        for u in &topo.units {
            p.add_objective(gt[u.index], -u.gen.marginal_cost);
        }
        let mut fr = Vec::new();
        for (k, l) in topo.lines.iter().enumerate() {
            fr.push(p.add_row(
                format!("flow[{},{}]", topo.grid.lines[k].id, t + 1),
                [(ft[k], 1.0), (tht[l.from], -1.0 / l.reactance), (tht[l.to], 1.0 / l.reactance)],
                Sense::Eq,
                0.0,
            ));
        }
        let mut br = Vec::new();
        for n in 0..topo.n_nodes() {
            let mut terms: Vec<(VarId, f64)> = topo.units_at(n).map(|u| (gt[u.index], 1.0)).collect();
            for (k, l) in topo.lines.iter().enumerate() {
                if l.to == n {
                    terms.push((ft[k], 1.0));
                }
                if l.from == n {
                    terms.push((ft[k], -1.0));
                }
            }
            br.push(p.add_row(
                format!("balance[{},{}]", topo.grid.nodes[n].id, t + 1),
                terms,
                Sense::Eq,
                topo.demand[day][t][n],
            ));
        }
        g.push(gt);
        f.push(ft);
        theta.push(tht);
        balance_rows.push(br);
        flow_rows.push(fr);
    }
    p.normalize();
    Ok(MarketLp {
        day,
        program: p,
        g,
        f,
        theta,
        balance_rows,
        flow_rows,
        offers: offers.to_vec(),
        demand: topo.demand[day].clone(),
        costs: topo.units.iter().map(|u| u.gen.marginal_cost).collect(),
        lines: topo.lines.iter().map(|l| (l.from, l.to, l.reactance, l.capacity)).collect(),
        unit_node: topo.units.iter().map(|u| u.node).collect(),
        reference: topo.reference.clone(),
    })
}

/// Nodes with demand but no generator and no line.
fn isolated_demand(lp: &MarketLp) -> Option<usize> {
    let n_nodes = lp.reference.len();
    (0..n_nodes).find(|&n| {
        lp.demand.iter().any(|row| row[n] > 0.0)
            && !lp.unit_node.contains(&n)
            && !lp.lines.iter().any(|l| l.0 == n || l.1 == n)
    })
}

impl MarketLp {
    /// Clear the market; prices and multipliers come from the LP duals.
    pub fn solve(&self) -> Result<MarketSolution> {
        if let Some(n) = isolated_demand(self) {
            return Err(Error::Infeasible(format!(
                "node {} has demand but no generator or line",
                n + 1
            )));
        }
        let r = solve_lp(&self.program)?;
        if r.status != SolveStatus::Optimal {
            return Ok(MarketSolution {
                status: r.status,
                welfare: f64::NEG_INFINITY,
                point: None,
            });
        }
        let shadow = r.row_duals.as_ref().expect("LP duals");
        let rc = r.reduced_costs.as_ref().expect("LP reduced costs");
        let val = |m: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
            m.iter().map(|row| row.iter().map(|v| r.value(*v)).collect()).collect()
        };
        let neg_dual = |rows: &Vec<Vec<usize>>| -> Vec<Vec<f64>> {
            rows.iter().map(|row| row.iter().map(|&i| -shadow[i]).collect()).collect()
        };
        let split = |m: &Vec<Vec<VarId>>| -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let lo = m.iter().map(|row| row.iter().map(|v| (-rc[v.0]).max(0.0)).collect()).collect();
            let hi = m.iter().map(|row| row.iter().map(|v| rc[v.0].max(0.0)).collect()).collect();
            (lo, hi)
        };
        let (gamma_lo, gamma_hi) = split(&self.g);
        let (delta_lo, delta_hi) = split(&self.f);
        Ok(MarketSolution {
            status: r.status,
            welfare: r.objective,
            point: Some(MarketPoint {
                g: val(&self.g),
                f: val(&self.f),
                theta: val(&self.theta),
                lambda: neg_dual(&self.balance_rows),
                xi: neg_dual(&self.flow_rows),
                gamma_lo,
                gamma_hi,
                delta_lo,
                delta_hi,
            }),
        })
    }
}

/// Residuals of every KKT condition family at a candidate point.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct KktReport {
    pub primal: f64,
    pub dual_sign: f64,
    pub stationarity_g: f64,
    pub stationarity_f: f64,
    pub stationarity_theta: f64,
    pub complementarity: f64,
    pub pass: bool,
}

impl KktReport {
    pub fn worst(&self) -> f64 {
        [
            self.primal,
            self.dual_sign,
            self.stationarity_g,
            self.stationarity_f,
            self.stationarity_theta,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluate the KKT conditions of `lp` at `point`. Stationarity in `θ` is not
/// required at reference nodes, whose angle is fixed.
pub fn verify_kkt_point(lp: &MarketLp, point: &MarketPoint, tol: f64) -> Result<KktReport> {
    let horizon = lp.g.len();
    let dims_ok = point.g.len() == horizon
        && point.lambda.len() == horizon
        && point.g.iter().all(|r| r.len() == lp.costs.len())
        && point.f.iter().all(|r| r.len() == lp.lines.len())
        && point.lambda.iter().all(|r| r.len() == lp.reference.len());
    if !dims_ok {
        return Err(Error::Shape("KKT point does not match the market dimensions".into()));
    }
    let mut rep = KktReport::default();
    let up = |v: &mut f64, x: f64| *v = v.max(libm::fabs(x));
    for t in 0..horizon {
        let (g, f, th, lam, xi) = (&point.g[t], &point.f[t], &point.theta[t], &point.lambda[t], &point.xi[t]);
        // primal feasibility
        for (k, &(from, to, x, cap)) in lp.lines.iter().enumerate() {
            up(&mut rep.primal, f[k] - (th[from] - th[to]) / x);
            up(&mut rep.primal, (f[k] - cap).max(0.0));
            up(&mut rep.primal, (-cap - f[k]).max(0.0));
        }
        for n in 0..lp.reference.len() {
            let mut bal = -lp.demand[t][n];
            for (i, &node) in lp.unit_node.iter().enumerate() {
                if node == n {
                    bal += g[i];
                }
            }
            for (k, &(from, to, _, _)) in lp.lines.iter().enumerate() {
                if to == n {
                    bal += f[k];
                }
                if from == n {
                    bal -= f[k];
                }
            }
            up(&mut rep.primal, bal);
            if lp.reference[n] == n {
                up(&mut rep.primal, th[n]);
            }
        }
        for (i, &gi) in g.iter().enumerate() {
            up(&mut rep.primal, (-gi).max(0.0));
            up(&mut rep.primal, (gi - lp.offers[t][i]).max(0.0));
        }
        // dual sign
        for v in point.gamma_lo[t]
            .iter()
            .chain(&point.gamma_hi[t])
            .chain(&point.delta_lo[t])
            .chain(&point.delta_hi[t])
        {
            up(&mut rep.dual_sign, (-v).max(0.0));
        }
        // stationarity
        for (i, &node) in lp.unit_node.iter().enumerate() {
            up(
                &mut rep.stationarity_g,
                -lp.costs[i] + lam[node] + point.gamma_lo[t][i] - point.gamma_hi[t][i],
            );
        }
        for (k, &(from, to, _, _)) in lp.lines.iter().enumerate() {
            up(
                &mut rep.stationarity_f,
                xi[k] + lam[to] - lam[from] + point.delta_lo[t][k] - point.delta_hi[t][k],
            );
        }
        for n in 0..lp.reference.len() {
            if lp.reference[n] == n {
                continue;
            }
            let mut s = 0.0;
            for (k, &(from, to, x, _)) in lp.lines.iter().enumerate() {
                if from == n {
                    s -= xi[k] / x;
                }
                if to == n {
                    s += xi[k] / x;
                }
            }
            up(&mut rep.stationarity_theta, s);
        }
        // complementarity
        for (i, &gi) in g.iter().enumerate() {
            up(&mut rep.complementarity, gi * point.gamma_lo[t][i]);
            up(&mut rep.complementarity, (lp.offers[t][i] - gi) * point.gamma_hi[t][i]);
        }
        for (k, &(_, _, _, cap)) in lp.lines.iter().enumerate() {
            up(&mut rep.complementarity, (f[k] + cap) * point.delta_lo[t][k]);
            up(&mut rep.complementarity, (cap - f[k]) * point.delta_hi[t][k]);
        }
    }
    rep.pass = rep.worst() <= tol;
    Ok(rep)
}

/// Offer bound of a unit inside an embedded KKT system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OfferTerm {
    Fixed(f64),
    /// A program variable with a finite upper bound.
    Var(VarId),
}

/// Variables of one day's KKT system inside a larger program, `[t][..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktSystem {
    pub day: usize,
    pub g: Vec<Vec<VarId>>,
    pub f: Vec<Vec<VarId>>,
    pub theta: Vec<Vec<VarId>>,
    pub lambda: Vec<Vec<VarId>>,
    pub xi: Vec<Vec<VarId>>,
    pub gamma_lo: Vec<Vec<VarId>>,
    pub gamma_hi: Vec<Vec<VarId>>,
    pub delta_lo: Vec<Vec<VarId>>,
    pub delta_hi: Vec<Vec<VarId>>,
    /// `g^o − g`, `f + F`, `F − f`
    pub offer_slack: Vec<Vec<VarId>>,
    pub flow_slack_lo: Vec<Vec<VarId>>,
    pub flow_slack_hi: Vec<Vec<VarId>>,
    /// Complementarity pairs, each declared as an SOS1 set.
    pub pairs: Vec<(VarId, VarId)>,
    pub stationarity_rows: Vec<usize>,
}

/// Embed the market optimality conditions of `day` into `program`: primal
/// rows, stationarity rows and SOS1 complementarity pairs. `lambda` supplies
/// the price variable of `(node, t)`; fresh free prices are created when it
/// is `None`. `multiplier_bound` caps `γ̲, γ̄`; use the largest possible
/// `|λ − C_g|`.
pub fn build_kkt_system(
    program: &mut ConicProgram,
    topo: &Topology<'_>,
    day: usize,
    offers: &dyn Fn(usize, usize) -> OfferTerm,
    lambda: Option<&dyn Fn(usize, usize) -> VarId>,
    multiplier_bound: f64,
) -> Result<KktSystem> {
    let horizon = topo.horizon();
    let tag = |s: &str, t: usize| format!("{s},{},{}", t + 1, day + 1);
    let mut k = KktSystem {
        day,
        g: Vec::new(),
        f: Vec::new(),
        theta: Vec::new(),
        lambda: Vec::new(),
        xi: Vec::new(),
        gamma_lo: Vec::new(),
        gamma_hi: Vec::new(),
        delta_lo: Vec::new(),
        delta_hi: Vec::new(),
        offer_slack: Vec::new(),
        flow_slack_lo: Vec::new(),
        flow_slack_hi: Vec::new(),
        pairs: Vec::new(),
        stationarity_rows: Vec::new(),
    };
    for t in 0..horizon {
        let mut gt = Vec::new();
        let mut ut = Vec::new();
        for u in &topo.units {
            let name = tag(u.id(), t);
            let (ub, term) = match offers(u.index, t) {
                OfferTerm::Fixed(v) => {
                    if !(v >= 0.0) {
                        return Err(Error::Invalid(format!("negative offer for `{}`", u.id())));
                    }
                    (v, None)
                }
                OfferTerm::Var(v) => {
                    let ub = program.variables[v.0].upper;
                    if !ub.is_finite() {
                        return Err(Error::Invalid(format!(
                            "offer variable of `{}` needs a finite upper bound",
                            u.id()
                        )));
                    }
                    (ub, Some(v))
                }
            };
            let g = program.add_var(format!("gm[{name}]"), 0.0, ub);
            let s = program.add_var(format!("go_slack[{name}]"), 0.0, ub);
            match term {
                // s = g^o − g
                None => program.add_row(format!("offer[{name}]"), [(s, 1.0), (g, 1.0)], Sense::Eq, ub),
                Some(v) => program.add_row(
                    format!("offer[{name}]"),
                    [(s, 1.0), (g, 1.0), (v, -1.0)],
                    Sense::Eq,
                    0.0,
                ),
            };
            gt.push(g);
            ut.push(s);
        }
        let mut ft = Vec::new();
        let mut flo = Vec::new();
        let mut fhi = Vec::new();
        for (l, line) in topo.lines.iter().zip(&topo.grid.lines) {
            let name = tag(&line.id, t);
            let cap = l.capacity;
            let f = program.add_var(format!("fm[{name}]"), -cap, cap);
            let a = program.add_var(format!("f_slack_lo[{name}]"), 0.0, 2.0 * cap);
            let b = program.add_var(format!("f_slack_hi[{name}]"), 0.0, 2.0 * cap);
            program.add_row(format!("fslo[{name}]"), [(a, 1.0), (f, -1.0)], Sense::Eq, cap);
            program.add_row(format!("fshi[{name}]"), [(b, 1.0), (f, 1.0)], Sense::Eq, cap);
            ft.push(f);
            flo.push(a);
            fhi.push(b);
        }
        let tht: Vec<VarId> = (0..topo.n_nodes())
            .map(|n| {
                let name = format!("thm[{}]", tag(&topo.grid.nodes[n].id, t));
                if topo.reference[n] == n {
                    program.add_var(name, 0.0, 0.0)
                } else {
                    program.add_free(name)
                }
            })
            .collect();
        // primal rows
        for (li, l) in topo.lines.iter().enumerate() {
            program.add_row(
                format!("flowm[{}]", tag(&topo.grid.lines[li].id, t)),
                [(ft[li], 1.0), (tht[l.from], -1.0 / l.reactance), (tht[l.to], 1.0 / l.reactance)],
                Sense::Eq,
                0.0,
            );
        }
        for n in 0..topo.n_nodes() {
            let mut terms: Vec<(VarId, f64)> = topo.units_at(n).map(|u| (gt[u.index], 1.0)).collect();
            for (li, l) in topo.lines.iter().enumerate() {
                if l.to == n {
                    terms.push((ft[li], 1.0));
                }
                if l.from == n {
                    terms.push((ft[li], -1.0));
                }
            }
            program.add_row(
                format!("balm[{}]", tag(&topo.grid.nodes[n].id, t)),
                terms,
                Sense::Eq,
                topo.demand[day][t][n],
            );
        }
        // duals
        let lam: Vec<VarId> = (0..topo.n_nodes())
            .map(|n| match lambda {
                Some(lf) => lf(n, t),
                None => program.add_free(format!("lambda[{}]", tag(&topo.grid.nodes[n].id, t))),
            })
            .collect();
        let mb = multiplier_bound;
        let glo: Vec<VarId> = topo
            .units
            .iter()
            .map(|u| program.add_var(format!("gamma_lo[{}]", tag(u.id(), t)), 0.0, mb))
            .collect();
        let ghi: Vec<VarId> = topo
            .units
            .iter()
            .map(|u| program.add_var(format!("gamma_hi[{}]", tag(u.id(), t)), 0.0, mb))
            .collect();
        let xi: Vec<VarId> = topo
            .grid
            .lines
            .iter()
            .map(|l| program.add_free(format!("xi[{}]", tag(&l.id, t))))
            .collect();
        let dlo: Vec<VarId> = topo
            .grid
            .lines
            .iter()
            .map(|l| program.add_var(format!("delta_lo[{}]", tag(&l.id, t)), 0.0, f64::INFINITY))
            .collect();
        let dhi: Vec<VarId> = topo
            .grid
            .lines
            .iter()
            .map(|l| program.add_var(format!("delta_hi[{}]", tag(&l.id, t)), 0.0, f64::INFINITY))
            .collect();
        // −C + λ_n + γ̲ − γ̄ = 0
        for u in &topo.units {
            k.stationarity_rows.push(program.add_row(
                format!("stat_g[{}]", tag(u.id(), t)),
                [(lam[u.node], 1.0), (glo[u.index], 1.0), (ghi[u.index], -1.0)],
                Sense::Eq,
                u.gen.marginal_cost,
            ));
        }
        // ξ + λ_to − λ_from + δ̲ − δ̄ = 0
        for (li, l) in topo.lines.iter().enumerate() {
            k.stationarity_rows.push(program.add_row(
                format!("stat_f[{}]", tag(&topo.grid.lines[li].id, t)),
                [(xi[li], 1.0), (lam[l.to], 1.0), (lam[l.from], -1.0), (dlo[li], 1.0), (dhi[li], -1.0)],
                Sense::Eq,
                0.0,
            ));
        }
        // Σ_{to = n} ξ/X − Σ_{from = n} ξ/X = 0 away from reference nodes
        for n in 0..topo.n_nodes() {
            if topo.reference[n] == n {
                continue;
            }
            let mut terms = Vec::new();
            for (li, l) in topo.lines.iter().enumerate() {
                if l.to == n {
                    terms.push((xi[li], 1.0 / l.reactance));
                }
                if l.from == n {
                    terms.push((xi[li], -1.0 / l.reactance));
                }
            }
            if !terms.is_empty() {
                k.stationarity_rows.push(program.add_row(
                    format!("stat_theta[{}]", tag(&topo.grid.nodes[n].id, t)),
                    terms,
                    Sense::Eq,
                    0.0,
                ));
            }
        }
        // complementarity
        for u in &topo.units {
            let name = tag(u.id(), t);
            for (a, b, what) in [(gt[u.index], glo[u.index], "g"), (ut[u.index], ghi[u.index], "go")] {
                program.add_sos1(format!("cs_{what}[{name}]"), vec![a, b]);
                k.pairs.push((a, b));
            }
        }
        for li in 0..topo.lines.len() {
            let name = tag(&topo.grid.lines[li].id, t);
            for (a, b, what) in [(flo[li], dlo[li], "flo"), (fhi[li], dhi[li], "fhi")] {
                program.add_sos1(format!("cs_{what}[{name}]"), vec![a, b]);
                k.pairs.push((a, b));
            }
        }
        k.g.push(gt);
        k.f.push(ft);
        k.theta.push(tht);
        k.lambda.push(lam);
        k.xi.push(xi);
        k.gamma_lo.push(glo);
        k.gamma_hi.push(ghi);
        k.delta_lo.push(dlo);
        k.delta_hi.push(dhi);
        k.offer_slack.push(ut);
        k.flow_slack_lo.push(flo);
        k.flow_slack_hi.push(fhi);
    }
    Ok(k)
}

impl KktSystem {
    /// Read the embedded market point out of a solution vector.
    pub fn point(&self, x: &[f64]) -> MarketPoint {
        let v = |m: &Vec<Vec<VarId>>| -> Vec<Vec<f64>> {
            m.iter().map(|r| r.iter().map(|id| x[id.0]).collect()).collect()
        };
        MarketPoint {
            g: v(&self.g),
            f: v(&self.f),
            theta: v(&self.theta),
            lambda: v(&self.lambda),
            xi: v(&self.xi),
            gamma_lo: v(&self.gamma_lo),
            gamma_hi: v(&self.gamma_hi),
            delta_lo: v(&self.delta_lo),
            delta_hi: v(&self.delta_hi),
        }
    }

    /// Values for the auxiliary and dual variables that reproduce `point`,
    /// written into `x` (used to build warm starts).
    pub fn assign(&self, point: &MarketPoint, offers: &[Vec<f64>], caps: &[f64], x: &mut [f64]) {
        for t in 0..self.g.len() {
            for i in 0..self.g[t].len() {
                x[self.g[t][i].0] = point.g[t][i];
                x[self.offer_slack[t][i].0] = (offers[t][i] - point.g[t][i]).max(0.0);
                x[self.gamma_lo[t][i].0] = point.gamma_lo[t][i];
                x[self.gamma_hi[t][i].0] = point.gamma_hi[t][i];
            }
            for l in 0..self.f[t].len() {
                let f = point.f[t][l];
                x[self.f[t][l].0] = f;
                x[self.flow_slack_lo[t][l].0] = f + caps[l];
                x[self.flow_slack_hi[t][l].0] = caps[l] - f;
                x[self.xi[t][l].0] = point.xi[t][l];
                x[self.delta_lo[t][l].0] = point.delta_lo[t][l];
                x[self.delta_hi[t][l].0] = point.delta_hi[t][l];
            }
            for n in 0..self.theta[t].len() {
                x[self.theta[t][n].0] = point.theta[t][n];
                x[self.lambda[t][n].0] = point.lambda[t][n];
            }
        }
    }
}

/// Names of the complementarity pairs, for reports.
pub fn describe_pairs(program: &ConicProgram, k: &KktSystem) -> Vec<(String, String)> {
    k.pairs
        .iter()
        .map(|(a, b)| (program.variables[a.0].name.clone(), program.variables[b.0].name.clone()))
        .collect()
}
