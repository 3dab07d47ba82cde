mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlddp::stl::{exact_robustness, parse_formula, parse_spec, Formula, Interval, Predicate, Signal, StateFormula, Verdict};

fn formula_strategy() -> impl Strategy<Value = Formula> {
    let leaf = prop::sample::select(vec!["a", "b", "goal", "obs_1", "F", "U"]).prop_map(Formula::atom);
    let interval = (0usize..20, 0usize..20).prop_map(|(a, b)| Interval::new(a.min(b), a.max(b)).unwrap());
    leaf.prop_recursive(4, 24, 3, move |inner| {
        prop_oneof![
            inner.clone().prop_map(|f| Formula::Not(Box::new(f))),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            (inner.clone(), interval.clone()).prop_map(|(f, i)| Formula::Always(Box::new(f), i)),
            (inner.clone(), interval.clone()).prop_map(|(f, i)| Formula::Eventually(Box::new(f), i)),
            (inner.clone(), inner, interval.clone()).prop_map(|(l, r, i)| Formula::Until(Box::new(l), Box::new(r), i)),
        ]
    })
}

fn random_signal(rng: &mut ChaCha8Rng, len: usize) -> Vec<Vec<f64>> {
    (0..len).map(|_| vec![rng.gen_range(-2.0..2.0)]).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn print_then_parse_is_identity(f in formula_strategy()) {
        let text = f.to_string();
        let back = parse_formula(&text).unwrap();
        prop_assert_eq!(back, f, "text: {}", text);
    }

    #[test]
    fn negated_predicate_negates_robustness(coef in -3.0f64..3.0, offset in -1.0f64..1.0, values in prop::collection::vec(-5.0f64..5.0, 1..12), pick in any::<prop::sample::Index>()) {
        let p = Arc::new(Predicate::affine("p", vec![coef], offset).unwrap());
        let sig = Signal::scalar(&values).unwrap();
        let t = pick.index(values.len());
        let pos = exact_robustness(&StateFormula::pred(p.clone()), &sig, t).unwrap();
        let neg = exact_robustness(&StateFormula::neg(p), &sig, t).unwrap();
        prop_assert_eq!(neg, -pos);
        prop_assert_eq!(pos, coef * values[t] - offset);
    }

    #[test]
    fn always_and_eventually_are_window_extrema(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let preds = common::scalar_predicates(&mut rng, 3);
        let names: Vec<String> = preds.iter().map(|p| p.name.clone()).collect();
        let table = common::Spec { preds: preds.clone(), conjuncts: vec![] }.table();
        let psi = common::random_state(&mut rng, 3, 2);
        let (a, b) = common::random_interval(&mut rng, 15);
        let len = b + 2 + rng.gen_range(0..5);
        let sig = random_signal(&mut rng, len);
        let signal = Signal::new(sig.clone(), 0.1).unwrap();
        let per_step: Vec<f64> = (a..=b).map(|k| psi.eval(&preds, &sig[k])).collect();
        let g = parse_spec(&format!("G[{a},{b}] {}", psi.text(&names)), len - 1, &table).unwrap();
        let f = parse_spec(&format!("F[{a},{b}] {}", psi.text(&names)), len - 1, &table).unwrap();
        prop_assert_eq!(exact_robustness(&g, &signal, 0).unwrap(), per_step.iter().copied().fold(f64::INFINITY, f64::min));
        prop_assert_eq!(exact_robustness(&f, &signal, 0).unwrap(), per_step.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    #[test]
    fn specification_matches_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_spec(&mut rng, 3, 12, Some(2));
        let len = spec.bound() + 2 + rng.gen_range(0..4);
        let sig = random_signal(&mut rng, len);
        let parsed = parse_spec(&spec.text(), len - 1, &spec.table()).unwrap();
        let rho = exact_robustness(&parsed, &Signal::new(sig.clone(), 1.0).unwrap(), 0).unwrap();
        prop_assert_eq!(rho, spec.eval(&sig));
        prop_assert_eq!(Verdict::from_robustness(rho) == Verdict::Satisfied, rho > 0.0);
    }
}
