//! Grid, actor and scenario model.
//!
//! A [`GridModel`] is plain data; [`GridModel::topology`] validates it and
//! resolves every cross-reference into dense indices that the model builders
//! use. Units are indexed existing-first, then candidates.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Tolerance on the representative-day probability sum.
pub const PROBABILITY_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Renewable,
    Controllable,
}

/// A per-unit parameter that is either constant or given per day and hour
/// (`values[day][t]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Series {
    Constant(f64),
    Profile(Vec<Vec<f64>>),
}

impl Series {
    pub fn at(&self, t: usize, day: usize) -> f64 {
        match self {
            Series::Constant(v) => *v,
            Series::Profile(p) => p[day][t],
        }
    }

    fn check_shape(&self, days: usize, horizon: usize, what: &str) -> Result<()> {
        if let Series::Profile(p) = self {
            if p.len() != days || p.iter().any(|row| row.len() != horizon) {
                return Err(Error::Shape(format!(
                    "{what}: expected {days} days x {horizon} hours"
                )));
            }
        }
        Ok(())
    }

    fn values(&self) -> impl Iterator<Item = f64> + '_ {
        let (one, many): (Option<f64>, &[Vec<f64>]) = match self {
            Series::Constant(v) => (Some(*v), &[]),
            Series::Profile(p) => (None, p.as_slice()),
        };
        one.into_iter().chain(many.iter().flatten().copied())
    }

    fn window(&self, start: usize, len: usize, days: &[usize]) -> Series {
        match self {
            Series::Constant(v) => Series::Constant(*v),
            Series::Profile(p) => Series::Profile(
                days.iter()
                    .map(|&d| p[d][start..start + len].to_vec())
                    .collect(),
            ),
        }
    }
}

impl Default for Series {
    fn default() -> Self {
        Series::Constant(0.0)
    }
}

fn one() -> Series {
    Series::Constant(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub state: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: String,
    pub from: String,
    pub to: String,
    /// Reactance in ohms; flow = (θ_from − θ_to) / reactance.
    pub reactance: f64,
    /// Symmetric flow limit in MW.
    pub capacity: f64,
}

/// An existing generating unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub node: String,
    pub kind: UnitKind,
    /// Free-form technology tag (wind, solar, coal, ...).
    #[serde(default)]
    pub fuel: String,
    #[serde(default)]
    pub min_output: f64,
    #[serde(default)]
    pub max_output: f64,
    /// Upward ramp limit in MW/h.
    #[serde(default)]
    pub ramp_up: Option<f64>,
    /// Downward ramp limit in MW/h, as a positive number.
    #[serde(default)]
    pub ramp_down: Option<f64>,
    /// Incremental cost in $/MWh.
    #[serde(default)]
    pub marginal_cost: f64,
    /// Forecast factor ρ in [0, 1].
    #[serde(default = "one")]
    pub forecast_factor: Series,
    /// Normalized forecast-error standard deviation σ.
    #[serde(default)]
    pub error_sd: Series,
    /// Normalized forecast-error mean υ.
    #[serde(default)]
    pub error_mean: Series,
    /// Reserve withheld from the offer when the unit belongs to a rival, MW.
    #[serde(default)]
    pub reserve: Series,
    /// Participation factor α; `None` means an equal share among the
    /// controllable units of the state.
    #[serde(default)]
    pub participation: Option<Series>,
}

/// A candidate unit: an investment option with capacity chosen by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateGenerator {
    #[serde(flatten)]
    pub unit: Generator,
    /// Capital cost pro-rated per day, $/MW.
    pub capital_cost: f64,
    /// Minimum-output factor Γ in [0, 1].
    #[serde(default)]
    pub min_output_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepDay {
    pub id: String,
    pub weight: f64,
}

/// Capital recovery parameters used to pro-rate one-off costs per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Finance {
    pub recovery_years: u32,
    pub discount_rate: f64,
}

impl Default for Finance {
    fn default() -> Self {
        Finance {
            recovery_years: 10,
            discount_rate: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    #[serde(default)]
    pub name: String,
    pub states: Vec<String>,
    pub nodes: Vec<Node>,
    pub lines: Vec<Line>,
    pub existing_gens: Vec<Generator>,
    #[serde(default)]
    pub candidate_gens: Vec<CandidateGenerator>,
    pub rep_days: Vec<RepDay>,
    /// Hours per representative day.
    pub horizon: usize,
    /// Demand in MW keyed by node id, `[day][t]`. Missing nodes have none.
    pub demand: BTreeMap<String, Vec<Vec<f64>>>,
    #[serde(default)]
    pub finance: Finance,
}

/// Actor-level policy and tariff data, keyed by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorPolicy {
    pub state: String,
    /// RPS fraction κ.
    #[serde(default)]
    pub rps_target: f64,
    /// Capital budget B^C ($ per day); `None` = no budget row.
    #[serde(default)]
    pub capital_budget: Option<f64>,
    /// Renewable-policy budget B^P ($ per day); `None` = no budget row.
    #[serde(default)]
    pub policy_budget: Option<f64>,
    /// Energy feed-in tariff, $/MWh.
    #[serde(default)]
    pub feed_in_tariff: f64,
    /// Capacity tariff, $/kW (one-off, pro-rated like capital).
    #[serde(default)]
    pub capacity_tariff: f64,
    /// Retail tariff π^D, $/MWh.
    #[serde(default)]
    pub retail_tariff: f64,
    /// Interface limit P↓max per node, MVA. Missing nodes get a bound
    /// implied by local demand and capacity.
    #[serde(default)]
    pub interface_limit: BTreeMap<String, f64>,
    /// Security tolerance η of the chance constraints.
    #[serde(default = "default_eta")]
    pub security_tolerance: f64,
}

fn default_eta() -> f64 {
    0.03
}

impl ActorPolicy {
    pub fn new(state: &str) -> Self {
        ActorPolicy {
            state: state.to_string(),
            rps_target: 0.0,
            capital_budget: None,
            policy_budget: None,
            feed_in_tariff: 0.0,
            capacity_tariff: 0.0,
            retail_tariff: 0.0,
            interface_limit: BTreeMap::new(),
            security_tolerance: default_eta(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rps_target) {
            return Err(Error::Invalid(format!(
                "{}: RPS target {} outside [0, 1]",
                self.state, self.rps_target
            )));
        }
        let money = [
            self.capital_budget.unwrap_or(0.0),
            self.policy_budget.unwrap_or(0.0),
            self.feed_in_tariff,
            self.capacity_tariff,
            self.retail_tariff,
        ];
        if money.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Invalid(format!(
                "{}: monetary fields must be finite and non-negative",
                self.state
            )));
        }
        if self.interface_limit.values().any(|v| !(*v >= 0.0)) {
            return Err(Error::Invalid(format!(
                "{}: interface limits must be non-negative",
                self.state
            )));
        }
        let eta = self.security_tolerance;
        if !(eta > 0.0 && eta < 0.5) {
            return Err(Error::Invalid(format!(
                "{}: security tolerance {eta} outside (0, 0.5)",
                self.state
            )));
        }
        Ok(())
    }

    /// Capacity tariff converted to $/MW·day.
    pub fn capacity_tariff_daily(&self, finance: &Finance) -> Result<f64> {
        prorate_capital_cost(
            self.capacity_tariff * 1000.0,
            finance.recovery_years,
            finance.discount_rate,
        )
    }
}

/// Daily capital-recovery annuity of an overnight cost:
/// `cost · r / (1 − (1 + r)^−years) / 365`, or `cost / years / 365` at r = 0.
pub fn prorate_capital_cost(cost: f64, years: u32, rate: f64) -> Result<f64> {
    if years < 1 {
        return Err(Error::Invalid("recovery period must be at least one year".into()));
    }
    if !(rate >= 0.0) {
        return Err(Error::Invalid(format!("discount rate {rate} is negative")));
    }
    let annual = if rate == 0.0 {
        cost / f64::from(years)
    } else {
        cost * rate / (1.0 - libm::pow(1.0 + rate, -f64::from(years)))
    };
    Ok(annual / 365.0)
}

/// Generators removed from the grid before a model is built.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RetirementScenario {
    pub name: String,
    #[serde(default)]
    pub retired: Vec<String>,
}

impl RetirementScenario {
    pub fn basecase() -> Self {
        RetirementScenario {
            name: "basecase".into(),
            retired: Vec::new(),
        }
    }

    /// Retire every existing generator whose fuel tag is in `fuels`.
    pub fn by_fuel(grid: &GridModel, name: &str, fuels: &[&str]) -> Self {
        let retired = grid
            .existing_gens
            .iter()
            .filter(|g| fuels.iter().any(|f| g.fuel.eq_ignore_ascii_case(f)))
            .map(|g| g.id.clone())
            .collect();
        RetirementScenario {
            name: name.into(),
            retired,
        }
    }

    /// The named scenarios used in the case study: `basecase`, `coal`,
    /// `coal-nuclear`.
    pub fn named(grid: &GridModel, name: &str) -> Result<Self> {
        match name {
            "basecase" | "base" => Ok(Self::basecase()),
            "coal" => Ok(Self::by_fuel(grid, "coal", &["coal"])),
            "coal-nuclear" => Ok(Self::by_fuel(grid, "coal-nuclear", &["coal", "nuclear"])),
            other => Err(Error::UnknownId {
                kind: "retirement scenario",
                id: other.into(),
            }),
        }
    }
}

/// Remove the scenario's generators. Errors on ids not present in the grid.
pub fn apply_retirement(grid: &GridModel, scenario: &RetirementScenario) -> Result<GridModel> {
    let known: BTreeSet<&str> = grid
        .existing_gens
        .iter()
        .map(|g| g.id.as_str())
        .chain(grid.candidate_gens.iter().map(|c| c.unit.id.as_str()))
        .collect();
    if let Some(bad) = scenario.retired.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::UnknownId {
            kind: "generator",
            id: bad.clone(),
        });
    }
    let gone: BTreeSet<&str> = scenario.retired.iter().map(String::as_str).collect();
    let mut out = grid.clone();
    out.existing_gens.retain(|g| !gone.contains(g.id.as_str()));
    out.candidate_gens.retain(|c| !gone.contains(c.unit.id.as_str()));
    Ok(out)
}

/// A resolved unit: indices plus a reference to its data.
#[derive(Debug, Clone, Copy)]
pub struct UnitRef<'a> {
    pub index: usize,
    pub node: usize,
    pub state: usize,
    pub gen: &'a Generator,
    pub candidate: Option<&'a CandidateGenerator>,
}

impl UnitRef<'_> {
    pub fn is_candidate(&self) -> bool {
        self.candidate.is_some()
    }

    pub fn is_renewable(&self) -> bool {
        self.gen.kind == UnitKind::Renewable
    }

    pub fn id(&self) -> &str {
        &self.gen.id
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineRef {
    pub from: usize,
    pub to: usize,
    pub reactance: f64,
    pub capacity: f64,
}

/// Validated, index-resolved view of a [`GridModel`].
#[derive(Debug, Clone)]
pub struct Topology<'a> {
    pub grid: &'a GridModel,
    pub units: Vec<UnitRef<'a>>,
    pub lines: Vec<LineRef>,
    /// State index of every node.
    pub node_state: Vec<usize>,
    /// Reference node (lowest index) of every node's connected component.
    pub reference: Vec<usize>,
    /// Demand `[day][t][node]`.
    pub demand: Vec<Vec<Vec<f64>>>,
    /// Participation factor α `[day][t][unit]`; zero for renewables.
    participation: Vec<Vec<Vec<f64>>>,
}

impl<'a> Topology<'a> {
    pub fn n_nodes(&self) -> usize {
        self.node_state.len()
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    pub fn n_days(&self) -> usize {
        self.grid.rep_days.len()
    }

    pub fn horizon(&self) -> usize {
        self.grid.horizon
    }

    pub fn state_index(&self, state: &str) -> Result<usize> {
        self.grid
            .states
            .iter()
            .position(|s| s == state)
            .ok_or_else(|| Error::UnknownId {
                kind: "state",
                id: state.into(),
            })
    }

    pub fn node_index(&self, node: &str) -> Result<usize> {
        self.grid
            .nodes
            .iter()
            .position(|n| n.id == node)
            .ok_or_else(|| Error::UnknownId {
                kind: "node",
                id: node.into(),
            })
    }

    pub fn unit_index(&self, id: &str) -> Result<usize> {
        self.units
            .iter()
            .position(|u| u.id() == id)
            .ok_or_else(|| Error::UnknownId {
                kind: "generator",
                id: id.into(),
            })
    }

    pub fn nodes_of_state(&self, state: usize) -> Vec<usize> {
        (0..self.n_nodes())
            .filter(|&n| self.node_state[n] == state)
            .collect()
    }

    pub fn units_of_state(&self, state: usize) -> impl Iterator<Item = &UnitRef<'a>> + '_ {
        self.units.iter().filter(move |u| u.state == state)
    }

    pub fn units_at(&self, node: usize) -> impl Iterator<Item = &UnitRef<'a>> + '_ {
        self.units.iter().filter(move |u| u.node == node)
    }

    pub fn participation(&self, unit: usize, t: usize, day: usize) -> f64 {
        self.participation[day][t][unit]
    }

    /// Upper capacity of a unit: nameplate for existing units, the given
    /// candidate capacity otherwise.
    pub fn capacity(&self, unit: usize, candidate_capacity: &[f64]) -> f64 {
        let u = &self.units[unit];
        if u.is_candidate() {
            candidate_capacity[unit]
        } else {
            u.gen.max_output
        }
    }

    pub fn total_demand(&self, nodes: &[usize], day: usize) -> f64 {
        self.demand[day]
            .iter()
            .map(|row| nodes.iter().map(|&n| row[n]).sum::<f64>())
            .sum()
    }
}

fn check_nonneg(v: f64, what: &dyn core::fmt::Display) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{what} must be finite and non-negative, got {v}")))
    }
}

impl GridModel {
    /// All unit ids in index order (existing first, then candidates).
    pub fn unit_ids(&self) -> Vec<&str> {
        self.existing_gens
            .iter()
            .map(|g| g.id.as_str())
            .chain(self.candidate_gens.iter().map(|c| c.unit.id.as_str()))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.topology().map(|_| ())
    }

    /// Validate and resolve the grid.
    pub fn topology(&self) -> Result<Topology<'_>> {
        let days = self.rep_days.len();
        let horizon = self.horizon;
        if days == 0 || horizon == 0 {
            return Err(Error::Invalid("grid needs at least one day and one hour".into()));
        }
        let total: f64 = self.rep_days.iter().map(|d| d.weight).sum();
        if self.rep_days.iter().any(|d| !(d.weight >= 0.0))
            || libm::fabs(total - 1.0) > PROBABILITY_SUM_TOL
        {
            return Err(Error::ProbabilitySum(total));
        }

        let mut seen = BTreeSet::new();
        for s in &self.states {
            if !seen.insert(s.as_str()) {
                return Err(Error::Invalid(format!("duplicate state `{s}`")));
            }
        }
        let state_of = |s: &str| {
            self.states
                .iter()
                .position(|x| x == s)
                .ok_or_else(|| Error::UnknownId {
                    kind: "state",
                    id: s.into(),
                })
        };
        let mut node_ids: BTreeMap<&str, usize> = BTreeMap::new();
        let mut node_state = Vec::with_capacity(self.nodes.len());
        for (i, n) in self.nodes.iter().enumerate() {
            if node_ids.insert(n.id.as_str(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate node `{}`", n.id)));
            }
            node_state.push(state_of(&n.state)?);
        }
        let node_of = |id: &str| {
            node_ids.get(id).copied().ok_or_else(|| Error::UnknownId {
                kind: "node",
                id: id.into(),
            })
        };

        let mut lines = Vec::with_capacity(self.lines.len());
        let mut line_ids = BTreeSet::new();
        for l in &self.lines {
            if !line_ids.insert(l.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate line `{}`", l.id)));
            }
            let from = node_of(&l.from)?;
            let to = node_of(&l.to)?;
            if from == to {
                return Err(Error::Invalid(format!("line `{}` is a self-loop", l.id)));
            }
            if !(l.reactance > 0.0 && l.reactance.is_finite()) {
                return Err(Error::Invalid(format!(
                    "line `{}` reactance must be positive",
                    l.id
                )));
            }
            check_nonneg(l.capacity, &format_args!("line `{}` capacity", l.id))?;
            lines.push(LineRef {
                from,
                to,
                reactance: l.reactance,
                capacity: l.capacity,
            });
        }

        let mut units = Vec::new();
        let mut unit_ids = BTreeSet::new();
        let all = self
            .existing_gens
            .iter()
            .map(|g| (g, None))
            .chain(self.candidate_gens.iter().map(|c| (&c.unit, Some(c))));
        for (index, (gen, candidate)) in all.enumerate() {
            if !unit_ids.insert(gen.id.as_str()) {
                return Err(Error::Invalid(format!("duplicate generator `{}`", gen.id)));
            }
            let node = node_of(&gen.node)?;
            self.check_unit(gen, candidate)?;
            units.push(UnitRef {
                index,
                node,
                state: node_state[node],
                gen,
                candidate,
            });
        }

        let mut demand = vec![vec![vec![0.0; self.nodes.len()]; horizon]; days];
        for (id, series) in &self.demand {
            let n = node_of(id)?;
            if series.len() != days || series.iter().any(|r| r.len() != horizon) {
                return Err(Error::Shape(format!(
                    "demand at `{id}`: expected {days} days x {horizon} hours"
                )));
            }
            for (e, row) in series.iter().enumerate() {
                for (t, &d) in row.iter().enumerate() {
                    check_nonneg(d, &format_args!("demand at `{id}`"))?;
                    demand[e][t][n] = d;
                }
            }
        }

        let participation = participation_factors(&units, self.states.len(), days, horizon)?;
        let reference = reference_nodes(self.nodes.len(), &lines);

        Ok(Topology {
            grid: self,
            units,
            lines,
            node_state,
            reference,
            demand,
            participation,
        })
    }

    fn check_unit(&self, g: &Generator, candidate: Option<&CandidateGenerator>) -> Result<()> {
        let days = self.rep_days.len();
        let horizon = self.horizon;
        let id = &g.id;
        check_nonneg(g.min_output, &format_args!("`{id}` min output"))?;
        check_nonneg(g.max_output, &format_args!("`{id}` max output"))?;
        check_nonneg(g.marginal_cost, &format_args!("`{id}` marginal cost"))?;
        if g.min_output > g.max_output && candidate.is_none() {
            return Err(Error::Invalid(format!("`{id}`: min output exceeds max output")));
        }
        for r in [g.ramp_up, g.ramp_down].into_iter().flatten() {
            check_nonneg(r, &format_args!("`{id}` ramp limit"))?;
        }
        for (series, what) in [
            (&g.forecast_factor, "forecast factor"),
            (&g.error_sd, "error sd"),
            (&g.error_mean, "error mean"),
            (&g.reserve, "reserve"),
        ] {
            series.check_shape(days, horizon, &format!("`{id}` {what}"))?;
        }
        if g.forecast_factor.values().any(|v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Invalid(format!("`{id}`: forecast factor outside [0, 1]")));
        }
        if g.error_sd.values().any(|v| !(v >= 0.0)) {
            return Err(Error::Invalid(format!("`{id}`: negative error sd")));
        }
        if g.reserve.values().any(|v| !(v >= 0.0)) {
            return Err(Error::Invalid(format!("`{id}`: negative reserve")));
        }
        if let Some(p) = &g.participation {
            p.check_shape(days, horizon, &format!("`{id}` participation"))?;
            if p.values().any(|v| !(0.0..=1.0).contains(&v)) {
                return Err(Error::Invalid(format!("`{id}`: participation outside [0, 1]")));
            }
        }
        match g.kind {
            UnitKind::Renewable => {
                if g.participation.as_ref().is_some_and(|p| p.values().any(|v| v != 0.0)) {
                    return Err(Error::Invalid(format!(
                        "`{id}`: renewable units cannot carry participation"
                    )));
                }
            }
            UnitKind::Controllable => {
                if g.error_sd.values().chain(g.error_mean.values()).any(|v| v != 0.0) {
                    return Err(Error::Invalid(format!(
                        "`{id}`: controllable units have no forecast error"
                    )));
                }
            }
        }
        if let Some(c) = candidate {
            check_nonneg(c.capital_cost, &format_args!("`{id}` capital cost"))?;
            if !(0.0..=1.0).contains(&c.min_output_factor) {
                return Err(Error::Invalid(format!("`{id}`: minimum-output factor outside [0, 1]")));
            }
        }
        Ok(())
    }

    /// Keep hours `start..start + len` of the listed days; day weights are
    /// renormalized to sum to one.
    pub fn window(&self, start: usize, len: usize, days: &[usize]) -> Result<GridModel> {
        if len == 0 || start + len > self.horizon {
            return Err(Error::Invalid(format!(
                "hour window {start}+{len} outside horizon {}",
                self.horizon
            )));
        }
        if days.is_empty() || days.iter().any(|&d| d >= self.rep_days.len()) {
            return Err(Error::Invalid("day selection out of range".into()));
        }
        let weight: f64 = days.iter().map(|&d| self.rep_days[d].weight).sum();
        if !(weight > 0.0) {
            return Err(Error::Invalid("selected days carry no weight".into()));
        }
        let gen = |g: &Generator| Generator {
            forecast_factor: g.forecast_factor.window(start, len, days),
            error_sd: g.error_sd.window(start, len, days),
            error_mean: g.error_mean.window(start, len, days),
            reserve: g.reserve.window(start, len, days),
            participation: g.participation.as_ref().map(|p| p.window(start, len, days)),
            ..g.clone()
        };
        Ok(GridModel {
            name: self.name.clone(),
            states: self.states.clone(),
            nodes: self.nodes.clone(),
            lines: self.lines.clone(),
            existing_gens: self.existing_gens.iter().map(gen).collect(),
            candidate_gens: self
                .candidate_gens
                .iter()
                .map(|c| CandidateGenerator {
                    unit: gen(&c.unit),
                    ..c.clone()
                })
                .collect(),
            rep_days: days
                .iter()
                .map(|&d| RepDay {
                    id: self.rep_days[d].id.clone(),
                    weight: self.rep_days[d].weight / weight,
                })
                .collect(),
            horizon: len,
            demand: self
                .demand
                .iter()
                .map(|(k, v)| {
                    (
                        k.clone(),
                        days.iter().map(|&d| v[d][start..start + len].to_vec()).collect(),
                    )
                })
                .collect(),
            finance: self.finance,
        })
    }
}

fn participation_factors(
    units: &[UnitRef<'_>],
    n_states: usize,
    days: usize,
    horizon: usize,
) -> Result<Vec<Vec<Vec<f64>>>> {
    // equal shares over existing controllables; candidates share only in
    // states without any existing controllable unit
    let mut existing = vec![0usize; n_states];
    let mut all = vec![0usize; n_states];
    for u in units.iter().filter(|u| !u.is_renewable()) {
        all[u.state] += 1;
        if !u.is_candidate() {
            existing[u.state] += 1;
        }
    }
    let mut alpha = vec![vec![vec![0.0; units.len()]; horizon]; days];
    for (e, by_t) in alpha.iter_mut().enumerate() {
        for (t, row) in by_t.iter_mut().enumerate() {
            for u in units.iter().filter(|u| !u.is_renewable()) {
                row[u.index] = match &u.gen.participation {
                    Some(p) => p.at(t, e),
                    None if existing[u.state] > 0 => {
                        if u.is_candidate() {
                            0.0
                        } else {
                            1.0 / existing[u.state] as f64
                        }
                    }
                    None => 1.0 / all[u.state] as f64,
                };
            }
        }
    }
    Ok(alpha)
}

/// Lowest-indexed node of each node's connected component.
fn reference_nodes(n: usize, lines: &[LineRef]) -> Vec<usize> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for l in lines {
        let a = find(&mut parent, l.from);
        let b = find(&mut parent, l.to);
        if a != b {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            parent[hi] = lo;
        }
    }
    (0..n).map(|i| find(&mut parent, i)).collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn unit(id: &str, node: &str, kind: UnitKind, cap: f64, cost: f64) -> Generator {
        Generator {
            id: id.into(),
            node: node.into(),
            kind,
            fuel: match kind {
                UnitKind::Renewable => "wind".into(),
                UnitKind::Controllable => "gas".into(),
            },
            min_output: 0.0,
            max_output: cap,
            ramp_up: None,
            ramp_down: None,
            marginal_cost: cost,
            forecast_factor: Series::Constant(1.0),
            error_sd: Series::Constant(0.0),
            error_mean: Series::Constant(0.0),
            reserve: Series::Constant(0.0),
            participation: None,
        }
    }

    pub(crate) fn two_node() -> GridModel {
        GridModel {
            name: "two-node".into(),
            states: vec!["A".into(), "B".into()],
            nodes: vec![
                Node { id: "n1".into(), state: "A".into() },
                Node { id: "n2".into(), state: "B".into() },
            ],
            lines: vec![Line {
                id: "l1".into(),
                from: "n1".into(),
                to: "n2".into(),
                reactance: 1.0,
                capacity: 100.0,
            }],
            existing_gens: vec![unit("g1", "n1", UnitKind::Controllable, 80.0, 20.0)],
            candidate_gens: vec![],
            rep_days: vec![RepDay { id: "d".into(), weight: 1.0 }],
            horizon: 1,
            demand: [("n2".to_string(), vec![vec![50.0]])].into_iter().collect(),
            finance: Finance::default(),
        }
    }

    #[test]
    fn annuity_matches_oracle() {
        // 895000 * 0.05 / (1 - 1.05^-10) / 365, evaluated with mpmath.
        let v = prorate_capital_cost(895_000.0, 10, 0.05).unwrap();
        assert!((v - 317.552_313_956_393_56).abs() / 317.55 < 1e-9);
        assert_eq!(prorate_capital_cost(3650.0, 10, 0.0).unwrap(), 1.0);
        assert_eq!(prorate_capital_cost(0.0, 10, 0.05).unwrap(), 0.0);
        assert!(prorate_capital_cost(1.0, 0, 0.05).is_err());
        assert!(prorate_capital_cost(1.0, 5, -0.1).is_err());
    }

    #[test]
    fn probability_sum_is_checked() {
        let mut g = two_node();
        g.rep_days = vec![
            RepDay { id: "a".into(), weight: 0.5 },
            RepDay { id: "b".into(), weight: 0.6 },
        ];
        g.demand.clear();
        assert!(matches!(g.validate(), Err(Error::ProbabilitySum(s)) if (s - 1.1).abs() < 1e-12));
    }

    #[test]
    fn dangling_references_are_rejected() {
        let mut g = two_node();
        g.lines[0].to = "n9".into();
        assert!(matches!(g.validate(), Err(Error::UnknownId { kind: "node", .. })));
        let mut g = two_node();
        g.nodes[1].state = "Z".into();
        assert!(matches!(g.validate(), Err(Error::UnknownId { kind: "state", .. })));
        let mut g = two_node();
        g.lines[0].reactance = 0.0;
        assert!(g.validate().is_err());
    }

    #[test]
    fn renewable_participation_rejected() {
        let mut g = two_node();
        let mut w = unit("w", "n1", UnitKind::Renewable, 10.0, 0.0);
        w.participation = Some(Series::Constant(0.5));
        g.existing_gens.push(w);
        assert!(g.validate().is_err());
    }

    #[test]
    fn retirement_removes_and_is_idempotent() {
        let mut g = two_node();
        let mut coal = unit("c1", "n2", UnitKind::Controllable, 40.0, 25.0);
        coal.fuel = "coal".into();
        g.existing_gens.push(coal);
        let base = apply_retirement(&g, &RetirementScenario::basecase()).unwrap();
        assert_eq!(base, g);
        let sc = RetirementScenario::named(&g, "coal").unwrap();
        let once = apply_retirement(&g, &sc).unwrap();
        assert_eq!(once.existing_gens.len(), 1);
        assert_eq!(apply_retirement(&once, &RetirementScenario::basecase()).unwrap(), once);
        let bad = RetirementScenario { name: "x".into(), retired: vec!["ZZZ".into()] };
        assert!(matches!(apply_retirement(&g, &bad), Err(Error::UnknownId { .. })));
    }

    #[test]
    fn default_participation_is_equal_share() {
        let mut g = two_node();
        g.existing_gens.push(unit("g2", "n1", UnitKind::Controllable, 10.0, 1.0));
        g.existing_gens.push(unit("w", "n1", UnitKind::Renewable, 10.0, 0.0));
        let topo = g.topology().unwrap();
        assert_eq!(topo.participation(0, 0, 0), 0.5);
        assert_eq!(topo.participation(1, 0, 0), 0.5);
        assert_eq!(topo.participation(2, 0, 0), 0.0);
    }

    #[test]
    fn reference_node_per_component() {
        let mut g = two_node();
        g.nodes.push(Node { id: "n3".into(), state: "B".into() });
        let topo = g.topology().unwrap();
        assert_eq!(topo.reference, vec![0, 0, 2]);
    }

    #[test]
    fn window_renormalizes_days() {
        let mut g = two_node();
        g.horizon = 3;
        g.rep_days = vec![
            RepDay { id: "a".into(), weight: 0.25 },
            RepDay { id: "b".into(), weight: 0.75 },
        ];
        g.demand.insert("n2".into(), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let w = g.window(1, 2, &[1]).unwrap();
        assert_eq!(w.rep_days[0].weight, 1.0);
        assert_eq!(w.demand["n2"], vec![vec![5.0, 6.0]]);
        w.validate().unwrap();
    }
}
