use ccepec_core::solver::lpformat::{parse_lp, write_lp};
use ccepec_core::solver::{branch_and_bound, BnbOptions, ConicProgram, ObjSense, Sense, SolveStatus};
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Knapsack {
    values: Vec<f64>,
    weights: Vec<Vec<f64>>,
    caps: Vec<f64>,
    constant: f64,
    maximize: bool,
}

fn knapsack() -> impl Strategy<Value = Knapsack> {
    (2usize..=6, 1usize..=3).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-10.0f64..20.0, n),
            prop::collection::vec(prop::collection::vec(0.0f64..10.0, n), m),
            prop::collection::vec(1.0f64..20.0, m),
            -1e4f64..1e4,
            any::<bool>(),
        )
            .prop_map(|(values, weights, caps, constant, maximize)| Knapsack {
                values,
                weights,
                caps,
                constant,
                maximize,
            })
    })
}

fn build(k: &Knapsack) -> ConicProgram {
    let sense = if k.maximize {
        ObjSense::Maximize
    } else {
        ObjSense::Minimize
    };
    let mut p = ConicProgram::new("knapsack", sense);
    let x: Vec<_> = (0..k.values.len()).map(|j| p.add_binary(format!("x{j}"))).collect();
    for (i, (w, cap)) in k.weights.iter().zip(&k.caps).enumerate() {
        p.add_row(format!("c{i}"), x.iter().zip(w).map(|(&v, &a)| (v, a)), Sense::Le, *cap);
    }
    for (&v, &c) in x.iter().zip(&k.values) {
        p.add_objective(v, c);
    }
    p.objective.constant = k.constant;
    p
}

fn enumerate(k: &Knapsack) -> f64 {
    let n = k.values.len();
    let mut best = if k.maximize { f64::NEG_INFINITY } else { f64::INFINITY };
    for mask in 0u32..(1 << n) {
        let on = |j: usize| mask >> j & 1 == 1;
        let fits = k
            .weights
            .iter()
            .zip(&k.caps)
            .all(|(w, cap)| (0..n).filter(|&j| on(j)).map(|j| w[j]).sum::<f64>() <= cap + 1e-9);
        if fits {
            let v = k.constant + (0..n).filter(|&j| on(j)).map(|j| k.values[j]).sum::<f64>();
            best = if k.maximize { best.max(v) } else { best.min(v) };
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn branch_and_bound_matches_enumeration(k in knapsack()) {
        let p = build(&k);
        let r = branch_and_bound(&p, &BnbOptions { gap: 0.0, ..Default::default() }).unwrap();
        prop_assert_eq!(r.status, SolveStatus::Optimal);
        let best = enumerate(&k);
        prop_assert!((r.objective - best).abs() <= 1e-6 * (1.0 + best.abs()), "{} vs {}", r.objective, best);
        prop_assert!(p.max_violation(&r.values) <= 1e-7);
    }

    #[test]
    fn lp_text_round_trip_keeps_the_optimum(k in knapsack()) {
        let p = build(&k);
        let q = parse_lp(&write_lp(&p)).unwrap();
        let opts = BnbOptions { gap: 0.0, ..Default::default() };
        let a = branch_and_bound(&p, &opts).unwrap();
        let b = branch_and_bound(&q, &opts).unwrap();
        prop_assert!((a.objective - b.objective).abs() <= 1e-6 * (1.0 + a.objective.abs()));
    }
}
