//! Checks of solutions from outside the optimization models: Monte Carlo
//! estimates of chance-constraint violation rates, the market LP against
//! its KKT system, and constraint-family audits of actor plans.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::data::{ActorPolicy, Topology};
use crate::market::{build_kkt_system, build_market_lp, build_offers, verify_kkt_point, OfferTerm, RivalView};
use crate::mpec::ActorPlan;
use crate::solver::{branch_and_bound, BnbOptions, ConicProgram, ObjSense};
use crate::uncertainty::{normal_quantile, sample_errors};
use crate::{Error, Result};

/// Violation rate of one chance-constrained bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundRate {
    pub unit: usize,
    pub t: usize,
    pub day: usize,
    /// `"upper"` or `"lower"`.
    pub side: &'static str,
    pub rate: f64,
    /// Half-width of the 95% interval (normal approximation).
    pub ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CcReport {
    pub samples: usize,
    pub rates: Vec<BoundRate>,
    pub max_rate: f64,
}

/// Sample forecast errors, apply the participation recourse
/// `g = ḡ − α·Σε` to the plan's controllable units and count bound
/// violations. Day `e` draws from seed `seed + e`.
pub fn monte_carlo_cc_check(topo: &Topology<'_>, plan: &ActorPlan, n: usize, seed: u64) -> Result<CcReport> {
    let caps: Vec<f64> = (0..topo.n_units()).map(|i| topo.capacity(i, &plan.capacity)).collect();
    let state = plan.state;
    let controllables: Vec<usize> = topo
        .units_of_state(state)
        .filter(|u| !u.is_renewable())
        .map(|u| u.index)
        .collect();
    let renewables: Vec<usize> = topo
        .units_of_state(state)
        .filter(|u| u.is_renewable())
        .map(|u| u.index)
        .collect();
    let mut rates = Vec::new();
    for day in 0..topo.n_days() {
        let draws = sample_errors(topo, day, &caps, seed.wrapping_add(day as u64), n)?;
        for t in 0..topo.horizon() {
            for &i in &controllables {
                let u = &topo.units[i];
                let alpha = topo.participation(i, t, day);
                let gbar = plan.gbar[day][t][i];
                let upper = caps[i];
                let lower = match u.candidate {
                    Some(c) => c.min_output_factor * caps[i],
                    None => u.gen.min_output,
                };
                let (mut above, mut below) = (0usize, 0usize);
                for s in &draws {
                    let total: f64 = renewables.iter().map(|&j| s[t][j]).sum();
                    let g = gbar - alpha * total;
                    if g > upper + 1e-9 {
                        above += 1;
                    }
                    if g < lower - 1e-9 {
                        below += 1;
                    }
                }
                for (side, k) in [("upper", above), ("lower", below)] {
                    let p = k as f64 / n as f64;
                    rates.push(BoundRate {
                        unit: i,
                        t,
                        day,
                        side,
                        rate: p,
                        ci: 1.96 * libm::sqrt(p * (1.0 - p) / n as f64),
                    });
                }
            }
        }
    }
    let max_rate = rates.iter().map(|r| r.rate).fold(0.0, f64::max);
    Ok(CcReport {
        samples: n,
        rates,
        max_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub lp_welfare: f64,
    pub kkt_welfare: f64,
    pub max_dispatch_gap: f64,
    pub max_price_gap: f64,
    pub pass: bool,
}

/// Clear the market of `day` as an LP and, separately, find a point of its
/// KKT system by branch and bound; compare welfare, dispatch and prices.
pub fn lp_vs_kkt_equivalence(topo: &Topology<'_>, offers: &[Vec<f64>], day: usize, tol: f64) -> Result<EquivalenceReport> {
    let lp = build_market_lp(topo, offers, day)?;
    let sol = lp.solve()?;
    let Some(a) = sol.point else {
        return Err(Error::Solver(format!("market LP ended {:?}", sol.status)));
    };
    let max_cost = topo.units.iter().map(|u| u.gen.marginal_cost.abs()).fold(0.0, f64::max);
    let mut p = ConicProgram::new("kkt", ObjSense::Maximize);
    let k = build_kkt_system(&mut p, topo, day, &|i, t| OfferTerm::Fixed(offers[t][i]), None, 100.0 * (1.0 + max_cost))?;
    let r = branch_and_bound(&p, &BnbOptions::default())?;
    if !r.status.has_solution() {
        return Err(Error::Solver(format!("KKT system ended {:?}", r.status)));
    }
    let b = k.point(&r.values);
    let welfare = |g: &Vec<Vec<f64>>| -> f64 {
        g.iter()
            .map(|row| row.iter().zip(&topo.units).map(|(g, u)| -u.gen.marginal_cost * g).sum::<f64>())
            .sum()
    };
    let gap = |x: &Vec<Vec<f64>>, y: &Vec<Vec<f64>>| -> f64 {
        x.iter()
            .flatten()
            .zip(y.iter().flatten())
            .map(|(a, b)| libm::fabs(a - b))
            .fold(0.0, f64::max)
    };
    let lp_welfare = welfare(&a.g);
    let kkt_welfare = welfare(&b.g);
    let max_dispatch_gap = gap(&a.g, &b.g);
    let max_price_gap = gap(&a.lambda, &b.lambda);
    let scale = 1.0 + libm::fabs(lp_welfare);
    Ok(EquivalenceReport {
        lp_welfare,
        kkt_welfare,
        max_dispatch_gap,
        max_price_gap,
        pass: libm::fabs(lp_welfare - kkt_welfare) <= tol * scale && max_dispatch_gap <= tol && max_price_gap <= tol,
    })
}

/// Worst residual of one constraint family.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyResidual {
    pub family: &'static str,
    pub residual: f64,
    pub pass: bool,
    /// Where the worst residual occurs.
    pub at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub families: Vec<FamilyResidual>,
    pub pass: bool,
}

impl AuditReport {
    pub fn family(&self, name: &str) -> Option<&FamilyResidual> {
        self.families.iter().find(|f| f.family == name)
    }
}

struct Tracker {
    families: Vec<FamilyResidual>,
    tol: f64,
}

impl Tracker {
    fn family(&mut self, name: &'static str) -> usize {
        if let Some(k) = self.families.iter().position(|f| f.family == name) {
            return k;
        }
        self.families.push(FamilyResidual {
            family: name,
            residual: 0.0,
            pass: true,
            at: String::new(),
        });
        self.families.len() - 1
    }

    fn note(&mut self, name: &'static str, residual: f64, at: impl FnOnce() -> String) {
        let k = self.family(name);
        let f = &mut self.families[k];
        if residual > f.residual || residual.is_nan() {
            f.residual = residual;
            f.at = at();
        }
        f.pass = f.residual <= self.tol;
    }
}

/// Recompute every constraint family of an actor's plan from the grid data:
/// zonal balance, ramping, RPS (shortfall in MWh), budgets, the
/// chance-constraint cones, and the embedded market (balance, flow
/// definition, line limits, offer bounds, stationarity and
/// complementarity). Residuals are absolute.
pub fn audit_solution(
    topo: &Topology<'_>,
    policy: &ActorPolicy,
    plan: &ActorPlan,
    rivals: &RivalView,
    tol: f64,
) -> Result<AuditReport> {
    let grid = topo.grid;
    let state = plan.state;
    let mut tr = Tracker {
        families: Vec::new(),
        tol,
    };
    let own_units: Vec<usize> = topo.units_of_state(state).map(|u| u.index).collect();
    let own_nodes = topo.nodes_of_state(state);
    let caps: Vec<f64> = (0..topo.n_units()).map(|i| topo.capacity(i, &plan.capacity)).collect();
    let horizon = topo.horizon();
    for &f in &["zonal balance", "ramping", "rps", "capital budget", "policy budget", "cones"] {
        tr.family(f);
    }

    for day in 0..topo.n_days() {
        for t in 0..horizon {
            for &n in &own_nodes {
                let s: f64 = topo.units_at(n).map(|u| plan.gbar[day][t][u.index]).sum();
                let r = libm::fabs(s + plan.pdown[day][t][n] - topo.demand[day][t][n]);
                tr.note("zonal balance", r, || format!("{} t{} d{}", grid.nodes[n].id, t + 1, day + 1));
            }
            for &i in &own_units {
                let u = &topo.units[i];
                if u.is_renewable() {
                    let want = u.gen.forecast_factor.at(t, day) * caps[i];
                    tr.note("offer definition", libm::fabs(plan.gbar[day][t][i] - want), || {
                        format!("{} t{} d{}", u.id(), t + 1, day + 1)
                    });
                } else if t > 0 {
                    let step = plan.gbar[day][t][i] - plan.gbar[day][t - 1][i];
                    let mut r: f64 = 0.0;
                    if let Some(up) = u.gen.ramp_up {
                        r = r.max(step - up);
                    }
                    if let Some(down) = u.gen.ramp_down {
                        r = r.max(-step - down);
                    }
                    tr.note("ramping", r.max(0.0), || format!("{} t{} d{}", u.id(), t + 1, day + 1));
                }
            }
        }
        let res: Vec<usize> = own_units.iter().copied().filter(|&i| topo.units[i].is_renewable()).collect();
        let energy: f64 = (0..horizon).map(|t| res.iter().map(|&i| plan.gbar[day][t][i]).sum::<f64>()).sum();
        let need = policy.rps_target * topo.total_demand(&own_nodes, day);
        tr.note("rps", (need - energy).max(0.0), || format!("day {}", day + 1));
        if let Some(b) = policy.policy_budget {
            let daily = policy.capacity_tariff_daily(&grid.finance)?;
            let spend = policy.feed_in_tariff * energy
                + res.iter().filter(|&&i| topo.units[i].is_candidate()).map(|&i| daily * plan.capacity[i]).sum::<f64>();
            tr.note("policy budget", (spend - b).max(0.0), || format!("day {}", day + 1));
        }
    }
    if let Some(b) = policy.capital_budget {
        let spend: f64 = own_units
            .iter()
            .filter_map(|&i| topo.units[i].candidate.map(|c| c.capital_cost * plan.capacity[i]))
            .sum();
        tr.note("capital budget", (spend - b).max(0.0), || String::from("total"));
    }

    // chance constraints: B − ḡ + α·M ≥ zα‖x‖ and ḡ − α·M − B ≥ zα‖x‖
    let z = normal_quantile(1.0 - policy.security_tolerance)?;
    let res: Vec<usize> = own_units.iter().copied().filter(|&i| topo.units[i].is_renewable()).collect();
    for day in 0..topo.n_days() {
        for t in 0..horizon {
            let norm = libm::sqrt(
                res.iter()
                    .map(|&j| {
                        let x = caps[j] * topo.units[j].gen.error_sd.at(t, day);
                        x * x
                    })
                    .sum(),
            );
            let shift: f64 = res.iter().map(|&j| caps[j] * topo.units[j].gen.error_mean.at(t, day)).sum();
            for &i in own_units.iter().filter(|&&i| !topo.units[i].is_renewable()) {
                let u = &topo.units[i];
                let alpha = if res.is_empty() { 0.0 } else { topo.participation(i, t, day) };
                let g = plan.gbar[day][t][i];
                let lower = match u.candidate {
                    Some(c) => c.min_output_factor * caps[i],
                    None => u.gen.min_output,
                };
                let spread = z * alpha * norm;
                let up = (g - alpha * shift + spread) - caps[i];
                let lo = lower - (g - alpha * shift - spread);
                tr.note("cones", up.max(lo).max(0.0), || format!("{} t{} d{}", u.id(), t + 1, day + 1));
            }
        }
    }

    // embedded market
    for (day, point) in plan.market.iter().enumerate() {
        let offers = build_offers(topo, Some(state), day, &|i, t| plan.gbar[day][t][i], rivals);
        let lp = build_market_lp(topo, &offers, day)?;
        let rep = verify_kkt_point(&lp, point, tol)?;
        tr.note("market primal", rep.primal, || format!("day {}", day + 1));
        tr.note("market dual sign", rep.dual_sign, || format!("day {}", day + 1));
        tr.note("stationarity", rep.stationarity_g.max(rep.stationarity_f).max(rep.stationarity_theta), || {
            format!("day {}", day + 1)
        });
        tr.note("complementarity", rep.complementarity, || format!("day {}", day + 1));
        for t in 0..horizon {
            for (li, l) in topo.lines.iter().enumerate() {
                let f = point.f[t][li];
                let def = libm::fabs(f - (point.theta[t][l.from] - point.theta[t][l.to]) / l.reactance);
                tr.note("flow definition", def, || format!("{} t{} d{}", grid.lines[li].id, t + 1, day + 1));
                tr.note("line limits", (libm::fabs(f) - l.capacity).max(0.0), || {
                    format!("{} t{} d{}", grid.lines[li].id, t + 1, day + 1)
                });
            }
            for n in 0..topo.n_nodes() {
                let mut s: f64 = topo.units_at(n).map(|u| point.g[t][u.index]).sum();
                for (li, l) in topo.lines.iter().enumerate() {
                    if l.to == n {
                        s += point.f[t][li];
                    }
                    if l.from == n {
                        s -= point.f[t][li];
                    }
                }
                tr.note("market balance", libm::fabs(s - topo.demand[day][t][n]), || {
                    format!("{} t{} d{}", grid.nodes[n].id, t + 1, day + 1)
                });
            }
            for u in &topo.units {
                let g = point.g[t][u.index];
                let r = (-g).max(g - offers[t][u.index]).max(0.0);
                tr.note("offer bounds", r, || format!("{} t{} d{}", u.id(), t + 1, day + 1));
            }
        }
    }
    let pass = tr.families.iter().all(|f| f.pass);
    Ok(AuditReport {
        families: tr.families,
        pass,
    })
}
