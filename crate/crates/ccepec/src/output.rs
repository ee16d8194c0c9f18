//! Result files. CSV bodies depend only on the inputs and the seed;
//! wall-clock data goes to `timing.csv` alone.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use ccepec_core::benchmark::{ExpansionSummary, StateDelta};
use ccepec_core::data::Topology;
use ccepec_core::hedging::IterationRecord;
use ccepec_core::mpec::ActorPlan;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRow {
    pub grid: String,
    pub scenario: String,
    pub state: String,
    pub controllable_gw: f64,
    pub renewable_gw: f64,
}

#[derive(Debug, Serialize)]
struct CostRow<'a> {
    state: &'a str,
    retail_revenue: f64,
    purchase_cost: f64,
    operating_cost: f64,
    energy_tariff: f64,
    capacity_tariff: f64,
    investment: f64,
    welfare: f64,
}

#[derive(Debug, Serialize)]
struct DispatchRow<'a> {
    state: &'a str,
    day: &'a str,
    t: usize,
    unit: &'a str,
    offer: f64,
    cleared: f64,
}

#[derive(Debug, Serialize)]
struct PriceRow<'a> {
    state: &'a str,
    day: &'a str,
    t: usize,
    node: &'a str,
    price: f64,
    pdown: f64,
}

#[derive(Debug, Serialize)]
struct TimingRow<'a> {
    iteration: usize,
    state: &'a str,
    seconds: f64,
    nodes: usize,
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn expansion_rows(summary: &ExpansionSummary) -> Vec<ExpansionRow> {
    summary
        .by_state
        .iter()
        .map(|(s, (c, r))| ExpansionRow {
            grid: summary.grid.clone(),
            scenario: summary.scenario.clone(),
            state: s.clone(),
            controllable_gw: *c,
            renewable_gw: *r,
        })
        .collect()
}

pub fn write_expansion(path: &Path, summary: &ExpansionSummary) -> Result<()> {
    write_rows(path, expansion_rows(summary))
}

/// Read an expansion CSV back into a summary. All rows must share one grid
/// and scenario.
pub fn read_expansion(path: &Path) -> Result<ExpansionSummary> {
    let mut r =
        csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = ExpansionSummary {
        grid: String::new(),
        scenario: String::new(),
        by_state: Default::default(),
    };
    for (k, row) in r.deserialize::<ExpansionRow>().enumerate() {
        let row = row.with_context(|| format!("{} row {}", path.display(), k + 2))?;
        if k == 0 {
            out.grid = row.grid.clone();
            out.scenario = row.scenario.clone();
        } else if row.grid != out.grid || row.scenario != out.scenario {
            anyhow::bail!("{}: rows from several grids or scenarios", path.display());
        }
        out.by_state
            .insert(row.state, (row.controllable_gw, row.renewable_gw));
    }
    Ok(out)
}

pub fn write_deltas(path: &Path, deltas: &[StateDelta]) -> Result<()> {
    write_rows(path, deltas)
}

pub fn write_costs(path: &Path, topo: &Topology<'_>, plans: &[ActorPlan]) -> Result<()> {
    write_rows(
        path,
        plans.iter().map(|p| CostRow {
            state: &topo.grid.states[p.state],
            retail_revenue: p.costs.retail_revenue,
            purchase_cost: p.costs.purchase_cost,
            operating_cost: p.costs.operating_cost,
            energy_tariff: p.costs.energy_tariff,
            capacity_tariff: p.costs.capacity_tariff,
            investment: p.costs.investment,
            welfare: p.costs.welfare(),
        }),
    )
}

/// Own-unit offers with the cleared market dispatch, and own-node prices
/// with net purchases.
pub fn write_market(dir: &Path, topo: &Topology<'_>, plans: &[ActorPlan]) -> Result<()> {
    let grid = topo.grid;
    let mut dispatch = Vec::new();
    let mut prices = Vec::new();
    for p in plans {
        let state = grid.states[p.state].as_str();
        let nodes = topo.nodes_of_state(p.state);
        for (e, point) in p.market.iter().enumerate() {
            let day = grid.rep_days[e].id.as_str();
            for t in 0..topo.horizon() {
                for u in topo.units_of_state(p.state) {
                    dispatch.push(DispatchRow {
                        state,
                        day,
                        t: t + 1,
                        unit: u.id(),
                        offer: p.gbar[e][t][u.index],
                        cleared: point.g[t][u.index],
                    });
                }
                for &n in &nodes {
                    prices.push(PriceRow {
                        state,
                        day,
                        t: t + 1,
                        node: &grid.nodes[n].id,
                        price: point.lambda[t][n],
                        pdown: p.pdown[e][t][n],
                    });
                }
            }
        }
    }
    write_rows(&dir.join("dispatch.csv"), dispatch)?;
    write_rows(&dir.join("prices.csv"), prices)
}

/// One row per iteration: ε and every actor's unpenalized objective.
pub fn write_convergence(path: &Path, states: &[&str], history: &[IterationRecord]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut header = vec!["iteration".to_string(), "epsilon".to_string()];
    header.extend(states.iter().map(|s| format!("objective_{s}")));
    w.write_record(&header)?;
    for h in history {
        let mut rec = vec![h.iteration.to_string(), h.epsilon.to_string()];
        rec.extend(h.objectives.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(path: &Path, states: &[&str], history: &[IterationRecord]) -> Result<()> {
    let mut rows = Vec::new();
    for h in history {
        for (k, s) in states.iter().enumerate() {
            rows.push(TimingRow {
                iteration: h.iteration,
                state: s,
                seconds: h.solve_seconds[k],
                nodes: h.nodes[k],
            });
        }
    }
    write_rows(path, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    #[test]
    fn expansion_round_trip() {
        let s = ExpansionSummary {
            grid: "g".into(),
            scenario: "basecase".into(),
            by_state: BTreeMap::from([("A".into(), (0.5, 1.25)), ("B".into(), (0.0, 0.1))]),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.csv");
        write_expansion(&p, &s).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("grid,scenario,state,controllable_gw,renewable_gw\n"));
        assert_eq!(read_expansion(&p).unwrap(), s);
    }

    #[test]
    fn convergence_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let h = IterationRecord {
            iteration: 1,
            epsilon: 0.5,
            objectives: vec![1.0, 2.0],
            solve_seconds: vec![0.1, 0.2],
            nodes: vec![3, 4],
            multiplier_imbalance: 0.0,
        };
        write_convergence(&p, &["A", "B"], &[h.clone()]).unwrap();
        assert_eq!(
            fs::read_to_string(&p).unwrap(),
            "iteration,epsilon,objective_A,objective_B\n1,0.5,1,2\n"
        );
        let q = dir.path().join("t.csv");
        write_timing(&q, &["A", "B"], &[h]).unwrap();
        assert_eq!(
            fs::read_to_string(&q).unwrap(),
            "iteration,state,seconds,nodes\n1,A,0.1,3\n1,B,0.2,4\n"
        );
    }
}
