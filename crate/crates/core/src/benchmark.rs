//! Centralized planning benchmark: one planner chooses investment and
//! dispatch for every state at once, with a system reserve requirement in
//! place of the chance constraints.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::data::{ActorPolicy, Topology};
use crate::solver::{
    branch_and_bound, solve_lp, BnbOptions, ConicProgram, ObjSense, Sense, SolveStatus, VarId,
};
use crate::uncertainty::{build_soc_constraints, normal_quantile, Capacity, ChanceInputs};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOptions {
    /// System reserve `R[day][t]`; the default is used when `None`.
    pub reserve: Option<Vec<Vec<f64>>>,
    /// Add the chance-constraint cones of every state as well.
    pub chance_constraints: bool,
    /// Cap on candidate capacity where no capital budget bounds it;
    /// ten times the peak system demand when `None`.
    pub max_candidate_capacity: Option<f64>,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        BenchmarkOptions {
            reserve: None,
            chance_constraints: false,
            max_candidate_capacity: None,
        }
    }
}

/// Default reserve: `z_{1−η}·√Σ(cap·σ)²` over existing renewables, with the
/// smallest η among the policies.
pub fn default_reserve(topo: &Topology<'_>, policies: &[ActorPolicy]) -> Result<Vec<Vec<f64>>> {
    let eta = policies
        .iter()
        .map(|p| p.security_tolerance)
        .fold(0.5, f64::min);
    let z = if eta < 0.5 { normal_quantile(1.0 - eta)? } else { 0.0 };
    Ok((0..topo.n_days())
        .map(|e| {
            (0..topo.horizon())
                .map(|t| {
                    let var: f64 = topo
                        .units
                        .iter()
                        .filter(|u| u.is_renewable() && !u.is_candidate())
                        .map(|u| {
                            let s = u.gen.max_output * u.gen.error_sd.at(t, e);
                            s * s
                        })
                        .sum();
                    z * libm::sqrt(var)
                })
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkInstance {
    pub program: ConicProgram,
    /// Representative-day weights.
    pub weights: Vec<f64>,
    /// `g[day][t][unit]`
    pub g: Vec<Vec<Vec<VarId>>>,
    /// `r[day][t][unit]`, controllable units only.
    pub r: Vec<Vec<Vec<Option<VarId>>>>,
    pub gmax: Vec<Option<VarId>>,
    pub f: Vec<Vec<Vec<VarId>>>,
    pub theta: Vec<Vec<Vec<VarId>>>,
    pub balance_rows: Vec<Vec<Vec<usize>>>,
    pub reserve_rows: Vec<Vec<usize>>,
    /// Per state, one RPS row per day (empty when κ = 0).
    pub rps_rows: BTreeMap<String, Vec<usize>>,
    pub reserve: Vec<Vec<f64>>,
}

/// Build the benchmark program. Every state in the grid needs a policy.
pub fn build_benchmark(topo: &Topology<'_>, policies: &[ActorPolicy], options: &BenchmarkOptions) -> Result<BenchmarkInstance> {
    let grid = topo.grid;
    let days = topo.n_days();
    let horizon = topo.horizon();
    let n_units = topo.n_units();
    let mut by_state: Vec<Option<&ActorPolicy>> = vec![None; grid.states.len()];
    for p in policies {
        p.validate()?;
        by_state[topo.state_index(&p.state)?] = Some(p);
    }
    if let Some(s) = by_state.iter().position(|p| p.is_none()) {
        return Err(Error::Invalid(format!("no policy for state `{}`", grid.states[s])));
    }
    let pol = |s: usize| by_state[s].expect("checked");
    let reserve = match &options.reserve {
        Some(r) => {
            if r.len() != days || r.iter().any(|row| row.len() != horizon) {
                return Err(Error::Shape(format!("reserve must be {days} days x {horizon} hours")));
            }
            if r.iter().flatten().any(|v| !(*v >= 0.0)) {
                return Err(Error::Invalid("reserve requirement must be non-negative".into()));
            }
            r.clone()
        }
        None => default_reserve(topo, policies)?,
    };

    let peak = topo
        .demand
        .iter()
        .flatten()
        .map(|row| row.iter().sum::<f64>())
        .fold(0.0, f64::max);
    let fallback = options.max_candidate_capacity.unwrap_or(10.0 * peak.max(1.0));
    let bound = |i: usize| -> f64 {
        let u = &topo.units[i];
        match (u.candidate, pol(u.state).capital_budget) {
            (None, _) => u.gen.max_output,
            (Some(c), Some(b)) if c.capital_cost > 0.0 => (b / c.capital_cost).min(fallback),
            (Some(_), _) => fallback,
        }
    };
    // controllable headroom check
    let headroom: f64 = topo
        .units
        .iter()
        .filter(|u| !u.is_renewable())
        .map(|u| bound(u.index))
        .sum();
    for (e, row) in reserve.iter().enumerate() {
        for (t, &r) in row.iter().enumerate() {
            if r > headroom + 1e-9 {
                return Err(Error::Infeasible(format!(
                    "reserve {r:.3} MW at hour {}, day {} exceeds the controllable headroom {headroom:.3} MW",
                    t + 1,
                    e + 1
                )));
            }
        }
    }

    let mut program = ConicProgram::new("benchmark", ObjSense::Maximize);
    let mut gmax = vec![None; n_units];
    for u in &topo.units {
        if let Some(c) = u.candidate {
            let v = program.add_var(format!("gmax[{}]", u.id()), 0.0, bound(u.index));
            let mut cost = c.capital_cost;
            if u.is_renewable() {
                cost += pol(u.state).capacity_tariff_daily(&grid.finance)?;
            }
            program.add_objective(v, -cost);
            gmax[u.index] = Some(v);
        }
    }
    let mut g = vec![vec![Vec::with_capacity(n_units); horizon]; days];
    let mut r = vec![vec![vec![None; n_units]; horizon]; days];
    let mut f = vec![vec![Vec::new(); horizon]; days];
    let mut theta = vec![vec![Vec::new(); horizon]; days];
    let mut balance_rows = vec![vec![Vec::new(); horizon]; days];
    let mut reserve_rows = vec![Vec::new(); days];
    for e in 0..days {
        let w = grid.rep_days[e].weight;
        for t in 0..horizon {
            let tag = |s: &str| format!("{s},{},{}", t + 1, e + 1);
            for u in &topo.units {
                let label = tag(u.id());
                let cap = match gmax[u.index] {
                    Some(v) => Capacity::Var(v),
                    None => Capacity::Fixed(u.gen.max_output),
                };
                let rho = u.gen.forecast_factor.at(t, e);
                let v = program.add_var(format!("g[{label}]"), 0.0, f64::INFINITY);
                let mut cost = u.gen.marginal_cost;
                if u.is_renewable() {
                    cost += pol(u.state).feed_in_tariff;
                    // g ≤ ρ·cap
                    match cap {
                        Capacity::Fixed(c) => program.variables[v.0].upper = rho * c,
                        Capacity::Var(m) => {
                            program.add_row(format!("gres[{label}]"), [(v, 1.0), (m, -rho)], Sense::Le, 0.0);
                        }
                    }
                } else {
                    let rv = program.add_var(format!("r[{label}]"), 0.0, f64::INFINITY);
                    r[e][t][u.index] = Some(rv);
                    let gamma = u.candidate.map(|c| c.min_output_factor);
                    match cap {
                        Capacity::Fixed(c) => {
                            program.add_row(format!("gup[{label}]"), [(v, 1.0), (rv, 1.0)], Sense::Le, c);
                            program.variables[v.0].lower = u.gen.min_output;
                        }
                        Capacity::Var(m) => {
                            program.add_row(format!("gup[{label}]"), [(v, 1.0), (rv, 1.0), (m, -1.0)], Sense::Le, 0.0);
                            if let Some(gm) = gamma.filter(|x| *x > 0.0) {
                                program.add_row(format!("gmin[{label}]"), [(v, 1.0), (m, -gm)], Sense::Ge, 0.0);
                            }
                        }
                    }
                }
                program.add_objective(v, -w * cost);
                g[e][t].push(v);
            }
            for (li, l) in topo.lines.iter().enumerate() {
                let id = &grid.lines[li].id;
                f[e][t].push(program.add_var(format!("f[{}]", tag(id)), -l.capacity, l.capacity));
            }
            for n in 0..topo.n_nodes() {
                let name = format!("theta[{}]", tag(&grid.nodes[n].id));
                theta[e][t].push(if topo.reference[n] == n {
                    program.add_var(name, 0.0, 0.0)
                } else {
                    program.add_free(name)
                });
            }
            for (li, l) in topo.lines.iter().enumerate() {
                program.add_row(
                    format!("flow[{}]", tag(&grid.lines[li].id)),
                    [(f[e][t][li], 1.0), (theta[e][t][l.from], -1.0 / l.reactance), (theta[e][t][l.to], 1.0 / l.reactance)],
                    Sense::Eq,
                    0.0,
                );
            }
            for n in 0..topo.n_nodes() {
                let mut terms: Vec<(VarId, f64)> = topo.units_at(n).map(|u| (g[e][t][u.index], 1.0)).collect();
                for (li, l) in topo.lines.iter().enumerate() {
                    if l.to == n {
                        terms.push((f[e][t][li], 1.0));
                    }
                    if l.from == n {
                        terms.push((f[e][t][li], -1.0));
                    }
                }
                let d = topo.demand[e][t][n];
                balance_rows[e][t].push(program.add_row(format!("bal[{}]", tag(&grid.nodes[n].id)), terms, Sense::Eq, d));
                program.add_objective_constant(w * pol(topo.node_state[n]).retail_tariff * d);
            }
            let terms: Vec<(VarId, f64)> = r[e][t].iter().flatten().map(|&v| (v, 1.0)).collect();
            reserve_rows[e].push(program.add_row(format!("reserve[{},{}]", t + 1, e + 1), terms, Sense::Ge, reserve[e][t]));
        }
    }

    let mut rps_rows = BTreeMap::new();
    for (s, name) in grid.states.iter().enumerate() {
        let p = pol(s);
        let nodes = topo.nodes_of_state(s);
        let res: Vec<usize> = topo.units_of_state(s).filter(|u| u.is_renewable()).map(|u| u.index).collect();
        let mut rows = Vec::new();
        for e in 0..days {
            let terms: Vec<(VarId, f64)> = (0..horizon)
                .flat_map(|t| res.iter().map(move |&i| (t, i)))
                .map(|(t, i)| (g[e][t][i], 1.0))
                .collect();
            if p.rps_target > 0.0 {
                let need = p.rps_target * topo.total_demand(&nodes, e);
                rows.push(program.add_row(format!("rps[{name},{}]", e + 1), terms.clone(), Sense::Ge, need));
            }
            if let Some(b) = p.policy_budget {
                let daily = p.capacity_tariff_daily(&grid.finance)?;
                let mut t2: Vec<(VarId, f64)> = terms.iter().map(|&(v, _)| (v, p.feed_in_tariff)).collect();
                t2.extend(res.iter().filter_map(|&i| gmax[i].map(|v| (v, daily))));
                program.add_row(format!("policy_budget[{name},{}]", e + 1), t2, Sense::Le, b);
            }
        }
        if let Some(b) = p.capital_budget {
            let terms: Vec<(VarId, f64)> = topo
                .units_of_state(s)
                .filter_map(|u| gmax[u.index].map(|v| (v, u.candidate.expect("candidate").capital_cost)))
                .collect();
            program.add_row(format!("capital_budget[{name}]"), terms, Sense::Le, b);
        }
        rps_rows.insert(name.clone(), rows);
    }

    if options.chance_constraints {
        for s in 0..grid.states.len() {
            let gb = |i: usize, t: usize, e: usize| g[e][t][i];
            let cap = |i: usize| match gmax[i] {
                Some(v) => Capacity::Var(v),
                None => Capacity::Fixed(topo.units[i].gen.max_output),
            };
            build_soc_constraints(
                &mut program,
                &ChanceInputs {
                    topo,
                    state: s,
                    eta: pol(s).security_tolerance,
                    gbar: &gb,
                    capacity: &cap,
                },
            )?;
        }
    }

    program.normalize();
    Ok(BenchmarkInstance {
        program,
        weights: grid.rep_days.iter().map(|d| d.weight).collect(),
        g,
        r,
        gmax,
        f,
        theta,
        balance_rows,
        reserve_rows,
        rps_rows,
        reserve,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub status: SolveStatus,
    pub objective: f64,
    /// Candidate capacity per unit index (zero for existing units).
    pub capacity: Vec<f64>,
    /// `g[day][t][unit]`
    pub dispatch: Vec<Vec<Vec<f64>>>,
    pub reserve: Vec<Vec<Vec<f64>>>,
    pub flows: Vec<Vec<Vec<f64>>>,
    /// Balance-row prices `[day][t][node]` in $/MWh; empty when the
    /// program has cones.
    pub prices: Vec<Vec<Vec<f64>>>,
    pub values: Vec<f64>,
}

/// Solve the benchmark: simplex when linear, branch and bound otherwise.
pub fn solve_benchmark(instance: &BenchmarkInstance, options: &BnbOptions) -> Result<BenchmarkResult> {
    let r = if instance.program.is_linear_continuous() {
        solve_lp(&instance.program)?
    } else {
        branch_and_bound(&instance.program, options)?
    };
    if !r.status.has_solution() {
        return Err(Error::Infeasible(format!("benchmark ended {:?}", r.status)));
    }
    let x = &r.values;
    let weights = &instance.weights;
    let read = |m: &Vec<Vec<Vec<VarId>>>| -> Vec<Vec<Vec<f64>>> {
        m.iter().map(|d| d.iter().map(|row| row.iter().map(|v| x[v.0]).collect()).collect()).collect()
    };
    let prices = match &r.row_duals {
        Some(d) => instance
            .balance_rows
            .iter()
            .zip(weights)
            .map(|(day, w)| {
                let w = if *w > 0.0 { *w } else { 1.0 };
                day.iter().map(|row| row.iter().map(|&i| -d[i] / w).collect()).collect()
            })
            .collect(),
        None => Vec::new(),
    };
    Ok(BenchmarkResult {
        status: r.status,
        objective: r.objective,
        capacity: instance.gmax.iter().map(|v| v.map_or(0.0, |v| x[v.0].max(0.0))).collect(),
        dispatch: read(&instance.g),
        reserve: instance
            .r
            .iter()
            .map(|d| d.iter().map(|row| row.iter().map(|v| v.map_or(0.0, |v| x[v.0])).collect()).collect())
            .collect(),
        flows: read(&instance.f),
        prices,
        values: r.values.clone(),
    })
}

/// Installed candidate capacity per state, GW, tagged with its scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionSummary {
    pub grid: String,
    pub scenario: String,
    /// state → (controllable GW, renewable GW)
    pub by_state: BTreeMap<String, (f64, f64)>,
}

impl ExpansionSummary {
    /// Sum candidate capacities (MW, per unit index) by state and kind.
    /// `states` limits the summary to those states; all when empty.
    pub fn from_capacity(topo: &Topology<'_>, scenario: &str, capacity: &[f64], states: &[usize]) -> Self {
        let mut by_state = BTreeMap::new();
        for (s, name) in topo.grid.states.iter().enumerate() {
            if !states.is_empty() && !states.contains(&s) {
                continue;
            }
            let mut c = (0.0, 0.0);
            for u in topo.units_of_state(s).filter(|u| u.is_candidate()) {
                let gw = capacity[u.index] / 1000.0;
                if u.is_renewable() {
                    c.1 += gw;
                } else {
                    c.0 += gw;
                }
            }
            by_state.insert(name.clone(), c);
        }
        ExpansionSummary {
            grid: topo.grid.name.clone(),
            scenario: scenario.into(),
            by_state,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateDelta {
    pub state: String,
    pub controllable_gw: f64,
    pub renewable_gw: f64,
}

/// `result − benchmark` per state.
pub fn compare_expansion(result: &ExpansionSummary, benchmark: &ExpansionSummary) -> Result<Vec<StateDelta>> {
    if result.grid != benchmark.grid || result.scenario != benchmark.scenario {
        return Err(Error::Invalid(format!(
            "comparing {}/{} against {}/{}",
            result.grid, result.scenario, benchmark.grid, benchmark.scenario
        )));
    }
    let mut out = Vec::new();
    for (s, a) in &result.by_state {
        let Some(b) = benchmark.by_state.get(s) else {
            return Err(Error::Invalid(format!("state `{s}` missing from the benchmark")));
        };
        out.push(StateDelta {
            state: s.clone(),
            controllable_gw: a.0 - b.0,
            renewable_gw: a.1 - b.1,
        });
    }
    if let Some(s) = benchmark.by_state.keys().find(|s| !result.by_state.contains_key(*s)) {
        return Err(Error::Invalid(format!("state `{s}` missing from the result")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::tests::{two_node, unit};
    use crate::data::{CandidateGenerator, GridModel, Series, UnitKind};

    fn policies(g: &GridModel) -> Vec<ActorPolicy> {
        g.states.iter().map(|s| ActorPolicy::new(s)).collect()
    }

    fn zero_reserve(g: &GridModel) -> BenchmarkOptions {
        BenchmarkOptions {
            reserve: Some(vec![vec![0.0; g.horizon]; g.rep_days.len()]),
            ..Default::default()
        }
    }

    #[test]
    fn no_investment_when_existing_capacity_suffices() {
        let mut g = two_node();
        let mut gas = unit("c", "n1", UnitKind::Controllable, 0.0, 5.0);
        gas.max_output = 0.0;
        g.candidate_gens = vec![CandidateGenerator {
            unit: gas,
            capital_cost: 100.0,
            min_output_factor: 0.0,
        }];
        let topo = g.topology().unwrap();
        let b = build_benchmark(&topo, &policies(&g), &zero_reserve(&g)).unwrap();
        let r = solve_benchmark(&b, &BnbOptions::default()).unwrap();
        assert!(r.capacity.iter().all(|c| c.abs() < 1e-9));
        assert!((r.objective + 1000.0).abs() < 1e-6);
        assert!((r.dispatch[0][0][0] - 50.0).abs() < 1e-6);
        assert!((r.prices[0][0][1] - 20.0).abs() < 1e-6);
    }

    #[test]
    fn rps_sets_renewable_capacity_per_state() {
        let mut g = two_node();
        g.horizon = 2;
        g.existing_gens.push(unit("g2", "n2", UnitKind::Controllable, 80.0, 20.0));
        g.demand = [("n1".into(), vec![vec![30.0, 30.0]]), ("n2".into(), vec![vec![50.0, 50.0]])]
            .into_iter()
            .collect();
        let mut cands = Vec::new();
        for (id, node) in [("w1", "n1"), ("w2", "n2")] {
            let mut w = unit(id, node, UnitKind::Renewable, 0.0, 0.0);
            w.forecast_factor = Series::Constant(0.4);
            cands.push(CandidateGenerator {
                unit: w,
                capital_cost: 100.0,
                min_output_factor: 0.0,
            });
        }
        g.candidate_gens = cands;
        let topo = g.topology().unwrap();
        let mut pol = policies(&g);
        pol[0].rps_target = 0.2;
        pol[1].rps_target = 0.5;
        let b = build_benchmark(&topo, &pol, &zero_reserve(&g)).unwrap();
        let r = solve_benchmark(&b, &BnbOptions::default()).unwrap();
        let w1 = topo.unit_index("w1").unwrap();
        let w2 = topo.unit_index("w2").unwrap();
        // κ·ΣD / (ρ·T)
        assert!((r.capacity[w1] - 0.2 * 60.0 / 0.8).abs() < 1e-6);
        assert!((r.capacity[w2] - 0.5 * 100.0 / 0.8).abs() < 1e-6);
    }

    #[test]
    fn reserve_beyond_headroom_is_infeasible() {
        let g = two_node();
        let topo = g.topology().unwrap();
        let opts = BenchmarkOptions {
            reserve: Some(vec![vec![81.0]]),
            ..Default::default()
        };
        assert!(matches!(build_benchmark(&topo, &policies(&g), &opts), Err(Error::Infeasible(_))));
        let opts = BenchmarkOptions {
            reserve: Some(vec![vec![30.0]]),
            ..Default::default()
        };
        let b = build_benchmark(&topo, &policies(&g), &opts).unwrap();
        let r = solve_benchmark(&b, &BnbOptions::default()).unwrap();
        let total: f64 = r.reserve[0][0].iter().sum();
        assert!(total >= 30.0 - 1e-9);
        // 50 MW of demand leaves exactly 30 MW of headroom
        let opts = BenchmarkOptions {
            reserve: Some(vec![vec![31.0]]),
            ..Default::default()
        };
        let b = build_benchmark(&topo, &policies(&g), &opts).unwrap();
        assert!(solve_benchmark(&b, &BnbOptions::default()).is_err());
    }

    #[test]
    fn default_reserve_uses_the_quantile() {
        let mut g = two_node();
        let mut w = unit("w", "n1", UnitKind::Renewable, 100.0, 0.0);
        w.error_sd = Series::Constant(0.1);
        g.existing_gens.push(w);
        let topo = g.topology().unwrap();
        let r = default_reserve(&topo, &policies(&g)).unwrap();
        assert!((r[0][0] - 1.880_793_608_151_25 * 10.0).abs() < 1e-8);
    }

    #[test]
    fn chance_constraint_option_adds_cones() {
        let mut g = two_node();
        let mut w = unit("w", "n1", UnitKind::Renewable, 10.0, 0.0);
        w.error_sd = Series::Constant(0.1);
        g.existing_gens.push(w);
        let topo = g.topology().unwrap();
        let mut opts = zero_reserve(&g);
        opts.chance_constraints = true;
        let b = build_benchmark(&topo, &policies(&g), &opts).unwrap();
        assert!(!b.program.cones.is_empty());
        let r = solve_benchmark(&b, &BnbOptions::default()).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        // room for the recourse: g1 ≤ 80 − z·1
        assert!(r.dispatch[0][0][0] <= 80.0 - 1.88);
    }

    #[test]
    fn deltas() {
        let mk = |c: f64, scen: &str| ExpansionSummary {
            grid: "g".into(),
            scenario: scen.into(),
            by_state: [("X".into(), (c, 0.2))].into_iter().collect(),
        };
        let d = compare_expansion(&mk(0.4, "base"), &mk(1.0, "base")).unwrap();
        assert!((d[0].controllable_gw + 0.6).abs() < 1e-12);
        assert_eq!(d[0].renewable_gw, 0.0);
        assert!(compare_expansion(&mk(0.4, "base"), &mk(0.4, "base")).unwrap()[0].controllable_gw == 0.0);
        assert!(compare_expansion(&mk(0.4, "base"), &mk(1.0, "coal")).is_err());
        let mut other = mk(1.0, "base");
        other.by_state.insert("Y".into(), (0.0, 0.0));
        assert!(compare_expansion(&mk(0.4, "base"), &other).is_err());
    }
}
