//! The bundled 8-zone ISO New England case: six states, twelve 1200 MW
//! corridors, existing capacity by state and fuel, and gas/wind/solar
//! candidates in every zone. Massachusetts spans WCMA, NEMA and SEMA.
//!
//! Regenerate `grid.json` with `data/isone/make_grid.py`.

use anyhow::Result;
use ccepec_core::data::{ActorPolicy, GridModel};

pub const GRID_JSON: &str = include_str!("../data/isone/grid.json");
pub const POLICIES_TOML: &str = include_str!("../data/isone/policies.toml");

pub fn grid() -> Result<GridModel> {
    let g: GridModel = serde_json::from_str(GRID_JSON)?;
    g.validate()?;
    Ok(g)
}

pub fn policies() -> Result<Vec<ActorPolicy>> {
    crate::io::parse_policies(POLICIES_TOML, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccepec_core::data::{apply_retirement, RetirementScenario};

    fn installed(g: &GridModel, state: &str, fuel: &str) -> f64 {
        let nodes: Vec<&str> = g
            .nodes
            .iter()
            .filter(|n| n.state == state)
            .map(|n| n.id.as_str())
            .collect();
        g.existing_gens
            .iter()
            .filter(|u| u.fuel == fuel && nodes.contains(&u.node.as_str()))
            .map(|u| u.max_output)
            .sum()
    }

    #[test]
    fn first_line_matches_the_table() {
        let g = grid().unwrap();
        let l = &g.lines[0];
        assert_eq!(
            (l.from.as_str(), l.to.as_str(), l.reactance, l.capacity),
            ("ME", "NH", 54.05, 1200.0)
        );
        assert_eq!(g.lines.len(), 12);
        assert_eq!(g.nodes.len(), 8);
    }

    #[test]
    fn capacities_match_the_table() {
        let g = grid().unwrap();
        assert_eq!(installed(&g, "ME", "wind"), 221.2);
        assert!((installed(&g, "MA", "solar") - 1871.26).abs() < 1e-3);
        assert!((installed(&g, "CT", "nuclear") - 2116.0).abs() < 1e-9);
    }

    #[test]
    fn average_peak_demand() {
        let g = grid().unwrap();
        let peak = (0..g.horizon)
            .map(|t| {
                g.rep_days
                    .iter()
                    .enumerate()
                    .map(|(e, d)| d.weight * g.demand.values().map(|v| v[e][t]).sum::<f64>())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        assert!((peak - 10_243.0).abs() < 1e-6);
    }

    #[test]
    fn coal_retirement() {
        let g = grid().unwrap();
        let s = RetirementScenario::named(&g, "coal").unwrap();
        let r = apply_retirement(&g, &s).unwrap();
        assert_eq!(installed(&g, "RI", "coal"), 1099.5);
        assert_eq!(installed(&r, "RI", "coal"), 0.0);
        assert_eq!(installed(&r, "RI", "gas"), installed(&g, "RI", "gas"));
    }

    #[test]
    fn policies_cover_every_state() {
        let g = grid().unwrap();
        let p = policies().unwrap();
        let mut states: Vec<&str> = p.iter().map(|p| p.state.as_str()).collect();
        states.sort();
        let mut want: Vec<&str> = g.states.iter().map(String::as_str).collect();
        want.sort();
        assert_eq!(states, want);
    }
}
