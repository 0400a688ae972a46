mod common;

use common::arb_instance;
use linspg::condition::{analyze, constants, find_ordering_witness};
use linspg::instances::registry;
use linspg::{Instance64, Matrix64};
use proptest::collection::vec;
use proptest::prelude::*;

/// Independent witness check: sorting actions by `<x_a, w>` must give the
/// reward-descending order, with every consecutive gap strictly positive.
fn orders_like_rewards(inst: &Instance64, w: &[f64]) -> bool {
    let k = inst.num_actions();
    let scores: Vec<f64> = (0..k).map(|a| common::dot(inst.features().row(a), w)).collect();
    let mut by_reward: Vec<usize> = (0..k).collect();
    by_reward.sort_by(|&a, &b| inst.rewards()[b].total_cmp(&inst.rewards()[a]));
    by_reward.windows(2).all(|p| scores[p[0]] > scores[p[1]])
}

fn scaled(inst: &Instance64, c: f64) -> Instance64 {
    inst.with_scaled_features(c).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn returned_witnesses_order_the_rewards(inst in arb_instance(None)) {
        if let Some((w, margin)) = find_ordering_witness(&inst).unwrap() {
            prop_assert!(margin > 0.0);
            prop_assert!(orders_like_rewards(&inst, &w), "w = {w:?}");
        }
    }

    #[test]
    fn verdicts_are_invariant_under_feature_scaling(inst in arb_instance(None)) {
        let base = analyze(&inst).unwrap();
        for c in [2.0, 0.5] {
            let r = analyze(&scaled(&inst, c)).unwrap();
            prop_assert_eq!(r.assumption1, base.assumption1);
            prop_assert_eq!(r.assumption2, base.assumption2);
            prop_assert_eq!(r.assumption3, base.assumption3);
            prop_assert_eq!(r.assumption4, base.assumption4);
        }
    }

    #[test]
    fn step_size_bounds_are_positive_and_finite(inst in arb_instance(None)) {
        let c = constants(&inst).unwrap();
        prop_assert!(c.eta_exact_bound > 0.0 && c.eta_exact_bound.is_finite());
        prop_assert!(c.eta_stochastic_bound > 0.0 && c.eta_stochastic_bound.is_finite());
    }

    #[test]
    fn tabular_features_satisfy_every_assumption(
        rewards in (2usize..=6).prop_flat_map(|k| vec(-5.0..5.0f64, k))
            .prop_filter("distinct rewards", |r| {
                r.iter().enumerate().all(|(i, a)| r[i + 1..].iter().all(|b| (a - b).abs() > 1e-3))
            })
    ) {
        let k = rewards.len();
        let r_max = rewards.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let inst = Instance64::new(Matrix64::identity(k), rewards, r_max, None).unwrap();
        let r = analyze(&inst).unwrap();
        prop_assert!(r.assumption1 && r.assumption2 && r.assumption4);
        if k == 3 {
            prop_assert_eq!(r.assumption3, Some(true));
        }
        prop_assert!(r.eps_approx.abs() < 1e-9);
        prop_assert!(orders_like_rewards(&inst, r.ordering_witness.as_ref().unwrap()));
    }
}

#[test]
fn registry_matches_reference_values() {
    let by_id = |id: &str| registry().into_iter().find(|e| e.id == id).unwrap();
    let r1 = analyze(&by_id("example-1").instance).unwrap();
    assert!((r1.eps_approx - 202.6_f64.sqrt()).abs() < 1e-9);
    assert!((r1.eps_approx - 14.2338).abs() < 1e-4);
    assert!(orders_like_rewards(&by_id("example-1").instance, &[-1.0, -1.0]));
    assert!(r1.assumption2);

    let r2 = analyze(&by_id("example-2").instance).unwrap();
    assert!((r2.eps_approx - 205.0_f64.sqrt()).abs() < 1e-9);
    assert!((r2.eps_approx - 14.3178).abs() < 1e-4);
    assert!(!r2.assumption2 && r2.ordering_witness.is_none());

    let r3 = analyze(&by_id("example-3").instance).unwrap();
    assert!((r3.k3_condition_value.unwrap() - 0.7).abs() < 1e-12);
    assert!(orders_like_rewards(&by_id("example-3").instance, &[-2.0, -1.0]));
    let r4 = analyze(&by_id("example-4").instance).unwrap();
    assert!((r4.k3_condition_value.unwrap() + 0.2).abs() < 1e-12);
    let rp = analyze(&by_id("prop-3").instance).unwrap();
    assert!((rp.k3_condition_value.unwrap() - 16.0).abs() < 1e-12);
    assert!(!rp.assumption2);

    for e in registry() {
        let r = analyze(&e.instance).unwrap();
        if let Some(w) = e.expected.witness {
            assert_eq!(r.ordering_witness.is_some(), w, "{}", e.id);
        }
        if let Some(eps) = e.expected.eps_approx {
            assert!((r.eps_approx - eps).abs() < 1e-9, "{}", e.id);
        }
        if let Some(v) = e.expected.k3_condition_value {
            assert!((r.k3_condition_value.unwrap() - v).abs() < 1e-12, "{}", e.id);
        }
        if let Some(a4) = e.expected.assumption4 {
            assert_eq!(r.assumption4, a4, "{}", e.id);
        }
    }
}
