"""Write grid.json for the bundled 8-zone ISO New England case.

Capacities by state and fuel and the line data are the published case-study
tables. Hourly shapes, zonal demand shares and existing-unit costs are
synthetic. Massachusetts capacity is split evenly over WCMA, NEMA and SEMA.
"""

import json
import math
import pathlib

STATES = ["ME", "NH", "VT", "MA", "CT", "RI"]
ZONES = {"ME": ["ME"], "NH": ["NH"], "VT": ["VT"], "MA": ["WCMA", "NEMA", "SEMA"], "CT": ["CT"], "RI": ["RI"]}
NODES = ["ME", "NH", "VT", "WCMA", "NEMA", "SEMA", "CT", "RI"]

CAPACITY = {
    "wind": [221.2, 140.5, 39.0, 681.7, 132.5, 85],
    "solar": [41.4, 83.84, 306.3, 1871.26, 464.34, 116.66],
    "nuclear": [0, 1244, 620.2, 684.7, 2116, 0],
    "coal": [311.8, 95.4, 0, 144.4, 744.4, 1099.5],
    "oil": [1146.9, 400.2, 0, 1111.7, 2212.8, 435],
    "gas": [3862.7, 508, 0, 2249.6, 621.4, 3491.6],
}
COST = {"wind": 1.1, "solar": 0.4, "nuclear": 7.0, "coal": 24.0, "oil": 60.0, "gas": 22.0}
SIGMA = {"wind": 0.1, "solar": 0.2}

LINES = [
    ("ME", "NH", 54.05), ("VT", "NH", 47), ("VT", "WCMA", 70.5), ("WCMA", "NH", 40.42),
    ("NEMA", "WCMA", 37.6), ("NEMA", "NH", 29.61), ("NEMA", "SEMA", 14.1), ("WCMA", "CT", 14.1),
    ("WCMA", "RI", 30.55), ("NEMA", "RI", 18.8), ("CT", "RI", 30.08), ("SEMA", "RI", 9.4),
]

CANDIDATES = {"gas": (895_000, 20.0), "wind": (1_630_000, 1.1), "solar": (2_434_000, 0.4)}

DAYS = [("winter", 1.00), ("spring", 0.88), ("summer", 1.12), ("fall", 1.00)]
PEAK = 10243.0
SHARE = {"ME": 0.08, "NH": 0.09, "VT": 0.04, "WCMA": 0.13, "NEMA": 0.24, "SEMA": 0.11, "CT": 0.25, "RI": 0.06}
LOAD = [0.64, 0.61, 0.59, 0.58, 0.59, 0.63, 0.70, 0.78, 0.84, 0.87, 0.89, 0.90,
        0.90, 0.90, 0.90, 0.91, 0.94, 1.00, 0.99, 0.96, 0.91, 0.84, 0.76, 0.69]
WIND_MEAN = [0.42, 0.36, 0.24, 0.33]
SOLAR_PEAK = [0.45, 0.68, 0.78, 0.55]


def annuity(cost, years=10, rate=0.05):
    return cost * rate / (1 - (1 + rate) ** -years) / 365


def wind_profile():
    return [[round(m + 0.08 * math.cos(2 * math.pi * (t - 3) / 24), 4) for t in range(24)] for m in WIND_MEAN]


def solar_profile():
    out = []
    for p in SOLAR_PEAK:
        row = []
        for t in range(24):
            x = (t - 12.5) / 5.5
            row.append(round(p * max(0.0, 1 - x * x), 4))
        out.append(row)
    return out


def unit(uid, node, fuel, cap):
    renewable = fuel in SIGMA
    u = {
        "id": uid,
        "node": node,
        "kind": "renewable" if renewable else "controllable",
        "fuel": fuel,
        "max_output": round(cap, 4),
        "marginal_cost": COST[fuel],
    }
    if renewable:
        u["forecast_factor"] = wind_profile() if fuel == "wind" else solar_profile()
        u["error_sd"] = SIGMA[fuel]
    return u


def main():
    gens = []
    for si, s in enumerate(STATES):
        zones = ZONES[s]
        for fuel, caps in CAPACITY.items():
            if caps[si] == 0:
                continue
            for z in zones:
                gens.append(unit(f"{z}-{fuel}", z, fuel, caps[si] / len(zones)))
    cands = []
    for z in NODES:
        for fuel, (capex, cost) in CANDIDATES.items():
            u = unit(f"{z}-{fuel}-new", z, fuel, 0.0)
            u["marginal_cost"] = cost
            u["capital_cost"] = round(annuity(capex), 6)
            cands.append(u)
    state_of = {z: s for s, zs in ZONES.items() for z in zs}
    grid = {
        "name": "isone-8zone",
        "states": STATES,
        "nodes": [{"id": n, "state": state_of[n]} for n in NODES],
        "lines": [
            {"id": str(i + 1), "from": a, "to": b, "reactance": x, "capacity": 1200.0}
            for i, (a, b, x) in enumerate(LINES)
        ],
        "existing_gens": gens,
        "candidate_gens": cands,
        "rep_days": [{"id": d, "weight": 0.25} for d, _ in DAYS],
        "horizon": 24,
        "demand": {
            n: [[round(PEAK * SHARE[n] * scale * h, 3) for h in LOAD] for _, scale in DAYS] for n in NODES
        },
        "finance": {"recovery_years": 10, "discount_rate": 0.05},
    }
    out = pathlib.Path(__file__).with_name("grid.json")
    out.write_text(json.dumps(grid, indent=1) + "\n")


if __name__ == "__main__":
    main()
