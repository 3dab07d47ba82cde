mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlddp::costgen::{check_soundness, compile, eval_running_cost, eval_running_cost_value, target_weight};
use stlddp::stl::{exact_robustness, parse_spec, Predicate, PredicateKind, PredicateTable, Signal};
use stlddp::SmoothParams;

fn anchor(p: &Predicate) -> [f64; 2] {
    match &p.kind {
        PredicateKind::Ball { center, .. } => [center[0], center[1]],
        PredicateKind::Box { bounds } => {
            let mid = |b: &Option<(f64, f64)>| b.map_or(0.0, |(lo, hi)| 0.5 * (lo + hi));
            [mid(&bounds[0]), mid(&bounds[1])]
        }
        PredicateKind::Affine { .. } => [0.0, 0.0],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn satisfied_certificate_implies_positive_robustness(seed in any::<u64>(), k in prop::sample::select(vec![1.0, 10.0, 50.0])) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regions = common::random_regions(&mut rng, 3);
        let anchors: Vec<[f64; 2]> = regions.iter().map(anchor).collect();
        let names: Vec<String> = regions.iter().map(|r| r.name.clone()).collect();
        let table: PredicateTable = regions.into_iter().collect();
        let horizon = rng.gen_range(1..=6);
        let conjuncts = common::random_conjuncts(&mut rng, 3, horizon, None);
        let text = conjuncts.iter().map(|c| c.text(&names)).collect::<Vec<_>>().join(" & ");
        let spec = parse_spec(&text, horizon, &table).unwrap();
        let costs = compile(&spec).unwrap();
        // Samples sit at region anchors or far away, so certification is common.
        let samples: Vec<Vec<f64>> = (0..=horizon)
            .map(|_| match rng.gen_range(0..4) {
                3 => vec![rng.gen_range(6.0..8.0), rng.gen_range(6.0..8.0)],
                i => anchors[i].to_vec(),
            })
            .collect();
        let signal = Signal::new(samples, 0.1).unwrap();
        let cert = check_soundness(&costs, &signal, &SmoothParams::new(k, k).unwrap()).unwrap();
        let rho = exact_robustness(&spec, &signal, 0).unwrap();
        prop_assert_eq!(cert.exact_robustness, rho);
        if cert.is_satisfied() {
            prop_assert!(rho > 0.0, "certified `{}` with robustness {}", text, rho);
            prop_assert!(cert.running_costs.iter().flatten().all(|l| *l < 0.0));
        }
    }

    #[test]
    fn merge_is_permutation_invariant(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let regions = common::random_regions(&mut rng, 3);
        let names: Vec<String> = regions.iter().map(|r| r.name.clone()).collect();
        let table: PredicateTable = regions.into_iter().collect();
        let horizon = 8;
        let mut parts: Vec<String> = (0..3).map(|_| common::random_path(&mut rng, 3, horizon, None).text(&names)).collect();
        let forward = compile(&parse_spec(&parts.join(" & "), horizon, &table).unwrap()).unwrap();
        parts.reverse();
        let backward = compile(&parse_spec(&parts.join(" & "), horizon, &table).unwrap()).unwrap();
        let params = SmoothParams::default();
        for t in 0..=horizon {
            let y = [rng.gen_range(-1.0..4.0), rng.gen_range(-1.0..4.0)];
            let a = eval_running_cost(&forward, t, &y, &params).unwrap();
            let b = eval_running_cost(&backward, t, &y, &params).unwrap();
            prop_assert!((a.value - b.value).abs() <= 1e-12 * a.value.abs().max(1.0));
            prop_assert!((&a.grad - &b.grad).amax() <= 1e-10 * a.grad.amax().max(1.0));
            prop_assert!((&a.hess - &b.hess).amax() <= 1e-9 * a.hess.amax().max(1.0));
            prop_assert_eq!(eval_running_cost_value(&forward, t, &y, &params).unwrap(), a.value);
        }
    }

    #[test]
    fn terms_sit_at_switching_times(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds = common::scalar_predicates(&mut rng, 2);
        let names: Vec<String> = preds.iter().map(|p| p.name.clone()).collect();
        let table = common::Spec { preds, conjuncts: vec![] }.table();
        let horizon = 20;
        let path = common::random_path(&mut rng, 2, horizon, None);
        let costs = compile(&parse_spec(&path.text(&names), horizon, &table).unwrap()).unwrap();
        let (expected, weight): (Vec<usize>, f64) = match &path {
            common::Path::Always(_, a, b) => ((*a..=*b).collect(), 1.0),
            common::Path::Eventually(_, a, b) => (vec![*b], target_weight(*a, *b)),
            common::Path::Until(_, _, a, b) => ((*a..=*b).collect(), target_weight(*a, *b)),
        };
        prop_assert_eq!(costs.timesteps_of(0), expected);
        let last = costs.terms_at(path.bound());
        prop_assert_eq!(last.len(), 1);
        prop_assert_eq!(last[0].weight, weight);
    }
}
