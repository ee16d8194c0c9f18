//! Grid, policy and scenario files.
//!
//! A grid is either one JSON document (the serde form of [`GridModel`]) or a
//! directory of CSV files:
//!
//! | file | columns |
//! |---|---|
//! | `nodes.csv` | `id,state` |
//! | `states.csv` (optional) | `id` |
//! | `lines.csv` | `id,from,to,reactance,capacity` |
//! | `generators.csv` | `id,node,kind,fuel,min_output,max_output,ramp_up,ramp_down,marginal_cost,forecast_factor,error_mean,error_sd,reserve,participation` |
//! | `candidates.csv` | generator columns plus `capital_cost,min_output_factor` |
//! | `demand.csv` | `node,day,t,mw` |
//! | `repdays.csv` | `id,weight` |
//! | `forecast.csv` (optional) | `unit,day,t,factor` |
//! | `finance.csv` (optional) | `recovery_years,discount_rate` |
//!
//! Hours `t` count from 1 and `day` is a representative-day id. Per-unit
//! columns hold constants; `forecast.csv` rows replace a unit's constant
//! forecast factor by an hourly profile. Empty `ramp_*` and `participation`
//! cells mean "not given".
//!
//! Policies are one JSON or TOML document with a table of
//! [`ActorPolicy`] fields per state key.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use ccepec_core::data::{
    ActorPolicy, CandidateGenerator, Finance, Generator, GridModel, Line, Node, RepDay,
    RetirementScenario, Series, UnitKind,
};
use serde::{Deserialize, Serialize};

/// Load and validate a grid from a `.json` file or a CSV directory.
pub fn load_grid(path: &Path) -> Result<GridModel> {
    let grid = if path.is_dir() {
        load_grid_csv(path)?
    } else {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    };
    grid.validate()
        .with_context(|| format!("validating {}", path.display()))?;
    Ok(grid)
}

pub fn save_grid_json(grid: &GridModel, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(grid)?;
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize, Deserialize)]
struct NodeRow {
    id: String,
    state: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct StateRow {
    id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct GenRow {
    id: String,
    node: String,
    kind: UnitKind,
    #[serde(default)]
    fuel: String,
    #[serde(default)]
    min_output: f64,
    max_output: f64,
    ramp_up: Option<f64>,
    ramp_down: Option<f64>,
    #[serde(default)]
    marginal_cost: f64,
    forecast_factor: Option<f64>,
    #[serde(default)]
    error_mean: f64,
    #[serde(default)]
    error_sd: f64,
    #[serde(default)]
    reserve: f64,
    participation: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CandRow {
    id: String,
    node: String,
    kind: UnitKind,
    #[serde(default)]
    fuel: String,
    #[serde(default)]
    min_output: f64,
    #[serde(default)]
    max_output: f64,
    ramp_up: Option<f64>,
    ramp_down: Option<f64>,
    #[serde(default)]
    marginal_cost: f64,
    forecast_factor: Option<f64>,
    #[serde(default)]
    error_mean: f64,
    #[serde(default)]
    error_sd: f64,
    #[serde(default)]
    reserve: f64,
    participation: Option<f64>,
    capital_cost: f64,
    #[serde(default)]
    min_output_factor: f64,
}

impl CandRow {
    fn split(self) -> (GenRow, f64, f64) {
        let g = GenRow {
            id: self.id,
            node: self.node,
            kind: self.kind,
            fuel: self.fuel,
            min_output: self.min_output,
            max_output: self.max_output,
            ramp_up: self.ramp_up,
            ramp_down: self.ramp_down,
            marginal_cost: self.marginal_cost,
            forecast_factor: self.forecast_factor,
            error_mean: self.error_mean,
            error_sd: self.error_sd,
            reserve: self.reserve,
            participation: self.participation,
        };
        (g, self.capital_cost, self.min_output_factor)
    }

    fn join(g: GenRow, capital_cost: f64, min_output_factor: f64) -> Self {
        CandRow {
            id: g.id,
            node: g.node,
            kind: g.kind,
            fuel: g.fuel,
            min_output: g.min_output,
            max_output: g.max_output,
            ramp_up: g.ramp_up,
            ramp_down: g.ramp_down,
            marginal_cost: g.marginal_cost,
            forecast_factor: g.forecast_factor,
            error_mean: g.error_mean,
            error_sd: g.error_sd,
            reserve: g.reserve,
            participation: g.participation,
            capital_cost,
            min_output_factor,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DemandRow {
    node: String,
    day: String,
    t: usize,
    mw: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct ForecastRow {
    unit: String,
    day: String,
    t: usize,
    factor: f64,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (k, row) in r.deserialize().enumerate() {
        out.push(row.with_context(|| format!("{} row {}", path.display(), k + 2))?);
    }
    Ok(out)
}

fn read_optional<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        read_rows(path)
    } else {
        Ok(Vec::new())
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn constant(s: &Series, what: &str, id: &str) -> Result<f64> {
    match s {
        Series::Constant(v) => Ok(*v),
        Series::Profile(_) => {
            bail!("`{id}`: {what} varies by hour; the CSV layout only holds constants")
        }
    }
}

fn gen_from_row(r: GenRow) -> Generator {
    Generator {
        id: r.id,
        node: r.node,
        kind: r.kind,
        fuel: r.fuel,
        min_output: r.min_output,
        max_output: r.max_output,
        ramp_up: r.ramp_up,
        ramp_down: r.ramp_down,
        marginal_cost: r.marginal_cost,
        forecast_factor: Series::Constant(r.forecast_factor.unwrap_or(1.0)),
        error_sd: Series::Constant(r.error_sd),
        error_mean: Series::Constant(r.error_mean),
        reserve: Series::Constant(r.reserve),
        participation: r.participation.map(Series::Constant),
    }
}

fn gen_to_row(g: &Generator) -> Result<GenRow> {
    Ok(GenRow {
        id: g.id.clone(),
        node: g.node.clone(),
        kind: g.kind,
        fuel: g.fuel.clone(),
        min_output: g.min_output,
        max_output: g.max_output,
        ramp_up: g.ramp_up,
        ramp_down: g.ramp_down,
        marginal_cost: g.marginal_cost,
        forecast_factor: match &g.forecast_factor {
            Series::Constant(v) => Some(*v),
            Series::Profile(_) => None,
        },
        error_mean: constant(&g.error_mean, "error mean", &g.id)?,
        error_sd: constant(&g.error_sd, "error stdev", &g.id)?,
        reserve: constant(&g.reserve, "reserve", &g.id)?,
        participation: match &g.participation {
            Some(p) => Some(constant(p, "participation", &g.id)?),
            None => None,
        },
    })
}

/// Read a CSV-directory grid. The result is not validated.
pub fn load_grid_csv(dir: &Path) -> Result<GridModel> {
    let nodes: Vec<NodeRow> = read_rows(&dir.join("nodes.csv"))?;
    let mut states: Vec<String> = read_optional::<StateRow>(&dir.join("states.csv"))?
        .into_iter()
        .map(|s| s.id)
        .collect();
    if states.is_empty() {
        for n in &nodes {
            if !states.contains(&n.state) {
                states.push(n.state.clone());
            }
        }
    }
    let lines: Vec<Line> = read_rows(&dir.join("lines.csv"))?;
    let gens: Vec<GenRow> = read_rows(&dir.join("generators.csv"))?;
    let cands: Vec<CandRow> = read_optional(&dir.join("candidates.csv"))?;
    let rep_days: Vec<RepDay> = read_rows(&dir.join("repdays.csv"))?;
    let demand_rows: Vec<DemandRow> = read_rows(&dir.join("demand.csv"))?;
    let forecast_rows: Vec<ForecastRow> = read_optional(&dir.join("forecast.csv"))?;
    let finance = read_optional::<Finance>(&dir.join("finance.csv"))?
        .into_iter()
        .next()
        .unwrap_or_default();

    let day_index: BTreeMap<&str, usize> = rep_days
        .iter()
        .enumerate()
        .map(|(i, d)| (d.id.as_str(), i))
        .collect();
    let lookup_day = |id: &str, file: &str| -> Result<usize> {
        day_index
            .get(id)
            .copied()
            .ok_or_else(|| anyhow!("{file}: unknown representative day `{id}`"))
    };
    let horizon = demand_rows
        .iter()
        .map(|r| r.t)
        .chain(forecast_rows.iter().map(|r| r.t))
        .max()
        .unwrap_or(0);
    if horizon == 0 {
        bail!("demand.csv: no hours given");
    }
    if demand_rows.iter().any(|r| r.t == 0) || forecast_rows.iter().any(|r| r.t == 0) {
        bail!("hours count from 1");
    }
    let days = rep_days.len();
    let mut demand: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for r in &demand_rows {
        let d = lookup_day(&r.day, "demand.csv")?;
        demand
            .entry(r.node.clone())
            .or_insert_with(|| vec![vec![0.0; horizon]; days])[d][r.t - 1] = r.mw;
    }
    let mut profiles: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    for r in &forecast_rows {
        let d = lookup_day(&r.day, "forecast.csv")?;
        profiles
            .entry(r.unit.clone())
            .or_insert_with(|| vec![vec![0.0; horizon]; days])[d][r.t - 1] = r.factor;
    }
    let mut apply_profile = |g: &mut Generator| {
        if let Some(p) = profiles.remove(&g.id) {
            g.forecast_factor = Series::Profile(p);
        }
    };
    let mut existing_gens: Vec<Generator> = gens.into_iter().map(gen_from_row).collect();
    existing_gens.iter_mut().for_each(&mut apply_profile);
    let mut candidate_gens: Vec<CandidateGenerator> = cands
        .into_iter()
        .map(|c| {
            let (unit, capital_cost, min_output_factor) = c.split();
            CandidateGenerator {
                unit: gen_from_row(unit),
                capital_cost,
                min_output_factor,
            }
        })
        .collect();
    candidate_gens
        .iter_mut()
        .for_each(|c| apply_profile(&mut c.unit));
    if let Some(id) = profiles.keys().next() {
        bail!("forecast.csv: unknown unit `{id}`");
    }
    Ok(GridModel {
        name: dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        states,
        nodes: nodes
            .into_iter()
            .map(|n| Node {
                id: n.id,
                state: n.state,
            })
            .collect(),
        lines,
        existing_gens,
        candidate_gens,
        rep_days,
        horizon,
        demand,
        finance,
    })
}

/// Write a grid as a CSV directory (created if missing). Errors when a
/// per-unit parameter other than the forecast factor varies by hour.
pub fn save_grid_csv(grid: &GridModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let nodes: Vec<NodeRow> = grid
        .nodes
        .iter()
        .map(|n| NodeRow {
            id: n.id.clone(),
            state: n.state.clone(),
        })
        .collect();
    write_rows(&dir.join("nodes.csv"), &nodes)?;
    let states: Vec<StateRow> = grid
        .states
        .iter()
        .map(|s| StateRow { id: s.clone() })
        .collect();
    write_rows(&dir.join("states.csv"), &states)?;
    write_rows(&dir.join("lines.csv"), &grid.lines)?;
    let gens = grid
        .existing_gens
        .iter()
        .map(gen_to_row)
        .collect::<Result<Vec<_>>>()?;
    write_rows(&dir.join("generators.csv"), &gens)?;
    let cands = grid
        .candidate_gens
        .iter()
        .map(|c| {
            Ok(CandRow::join(
                gen_to_row(&c.unit)?,
                c.capital_cost,
                c.min_output_factor,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    write_rows(&dir.join("candidates.csv"), &cands)?;
    write_rows(&dir.join("repdays.csv"), &grid.rep_days)?;
    let mut demand = Vec::new();
    for (node, days) in &grid.demand {
        for (d, row) in days.iter().enumerate() {
            for (t, mw) in row.iter().enumerate() {
                demand.push(DemandRow {
                    node: node.clone(),
                    day: grid.rep_days[d].id.clone(),
                    t: t + 1,
                    mw: *mw,
                });
            }
        }
    }
    write_rows(&dir.join("demand.csv"), &demand)?;
    let mut forecast = Vec::new();
    for g in grid
        .existing_gens
        .iter()
        .chain(grid.candidate_gens.iter().map(|c| &c.unit))
    {
        if let Series::Profile(p) = &g.forecast_factor {
            for (d, row) in p.iter().enumerate() {
                for (t, v) in row.iter().enumerate() {
                    forecast.push(ForecastRow {
                        unit: g.id.clone(),
                        day: grid.rep_days[d].id.clone(),
                        t: t + 1,
                        factor: *v,
                    });
                }
            }
        }
    }
    write_rows(&dir.join("forecast.csv"), &forecast)?;
    write_rows(&dir.join("finance.csv"), &[grid.finance])?;
    Ok(())
}

/// Parse a policy document keyed by state. `.toml` files are read as TOML,
/// everything else as JSON. Policies come back in key order.
pub fn parse_policies(text: &str, toml_format: bool) -> Result<Vec<ActorPolicy>> {
    let table: BTreeMap<String, serde_json::Value> = if toml_format {
        let v: toml::Table = toml::from_str(text).context("parsing policy TOML")?;
        v.into_iter()
            .map(|(k, v)| Ok((k, serde_json::to_value(v)?)))
            .collect::<Result<_>>()?
    } else {
        serde_json::from_str(text).context("parsing policy JSON")?
    };
    let mut out = Vec::new();
    for (state, mut fields) in table {
        let obj = fields
            .as_object_mut()
            .ok_or_else(|| anyhow!("policy for `{state}` is not a table"))?;
        obj.insert("state".into(), serde_json::Value::String(state.clone()));
        let p: ActorPolicy =
            serde_json::from_value(fields).with_context(|| format!("policy for `{state}`"))?;
        p.validate()?;
        out.push(p);
    }
    Ok(out)
}

pub fn load_policies(path: &Path) -> Result<Vec<ActorPolicy>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let toml_format = path.extension().is_some_and(|e| e == "toml");
    parse_policies(&text, toml_format).with_context(|| format!("in {}", path.display()))
}

/// Resolve a scenario argument: a named scenario (`basecase`, `coal`,
/// `coal-nuclear`) or a JSON file holding a [`RetirementScenario`].
pub fn load_scenario(grid: &GridModel, arg: &str) -> Result<RetirementScenario> {
    let path = Path::new(arg);
    if path.extension().is_some_and(|e| e == "json") {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()));
    }
    Ok(RetirementScenario::named(grid, arg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> GridModel {
        serde_json::from_str(
            r#"{
              "name": "tiny",
              "states": ["A", "B"],
              "nodes": [{"id": "n1", "state": "A"}, {"id": "n2", "state": "B"}],
              "lines": [{"id": "l1", "from": "n1", "to": "n2", "reactance": 1.0, "capacity": 100.0}],
              "existing_gens": [
                {"id": "g1", "node": "n1", "kind": "controllable", "max_output": 80.0, "marginal_cost": 20.0, "ramp_up": 10.0},
                {"id": "w1", "node": "n2", "kind": "renewable", "max_output": 50.0, "error_sd": 0.1,
                 "forecast_factor": [[0.3, 0.5]]}
              ],
              "candidate_gens": [
                {"id": "c1", "node": "n1", "kind": "renewable", "capital_cost": 40.0, "forecast_factor": 0.4}
              ],
              "rep_days": [{"id": "d1", "weight": 1.0}],
              "horizon": 2,
              "demand": {"n2": [[50.0, 60.0]]}
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let g = tiny();
        g.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_grid_csv(&g, dir.path()).unwrap();
        let mut back = load_grid(dir.path()).unwrap();
        back.name = g.name.clone();
        assert_eq!(back, g);
        let nodes = fs::read_to_string(dir.path().join("nodes.csv")).unwrap();
        assert_eq!(nodes, "id,state\nn1,A\nn2,B\n");
    }

    #[test]
    fn json_round_trip() {
        let g = tiny();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        save_grid_json(&g, &p).unwrap();
        assert_eq!(load_grid(&p).unwrap(), g);
    }

    #[test]
    fn bad_probabilities_are_rejected() {
        let mut g = tiny();
        g.rep_days = vec![
            RepDay {
                id: "a".into(),
                weight: 0.5,
            },
            RepDay {
                id: "b".into(),
                weight: 0.6,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.json");
        save_grid_json(&g, &p).unwrap();
        let err = format!("{:#}", load_grid(&p).unwrap_err());
        assert!(err.contains("sum to"), "{err}");
    }

    #[test]
    fn dangling_node_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_grid_csv(&tiny(), dir.path()).unwrap();
        fs::write(
            dir.path().join("lines.csv"),
            "id,from,to,reactance,capacity\nl1,n1,n9,1,100\n",
        )
        .unwrap();
        let err = format!("{:#}", load_grid(dir.path()).unwrap_err());
        assert!(err.contains("n9"), "{err}");
    }

    #[test]
    fn missing_column_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        save_grid_csv(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join("repdays.csv"), "id\nd1\n").unwrap();
        let err = format!("{:#}", load_grid(dir.path()).unwrap_err());
        assert!(err.contains("repdays.csv"), "{err}");
    }

    #[test]
    fn policies_from_toml_and_json_agree() {
        let toml_text =
            "[A]\nrps_target = 0.2\nretail_tariff = 60.0\n\n[B]\ncapital_budget = 100.0\n";
        let json_text =
            r#"{"A": {"rps_target": 0.2, "retail_tariff": 60.0}, "B": {"capital_budget": 100.0}}"#;
        let a = parse_policies(toml_text, true).unwrap();
        let b = parse_policies(json_text, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].state, "A");
        assert_eq!(a[0].security_tolerance, 0.03);
        assert_eq!(a[1].capital_budget, Some(100.0));
    }

    #[test]
    fn invalid_policy_is_rejected() {
        assert!(parse_policies("[A]\nrps_target = 1.5\n", true).is_err());
        assert!(parse_policies("[A]\nsecurity_tolerance = 0.6\n", true).is_err());
    }

    #[test]
    fn scenarios() {
        let g = tiny();
        assert!(load_scenario(&g, "basecase").unwrap().retired.is_empty());
        assert!(load_scenario(&g, "nonsense").is_err());
    }
}
