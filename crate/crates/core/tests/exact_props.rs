mod common;

use common::{arb_state, dot, expected_reward_oracle, feature_gradient_oracle, policy_oracle};
use linspg::condition::constants;
use linspg::diagnostics::{audit_monotonicity, check_smoothness};
use linspg::experiments::generated_instance;
use linspg::instances::Assumption;
use linspg::{run_exact, ExactRunConfig, LearningRate};
use proptest::collection::vec;
use proptest::prelude::*;

#[test]
fn expected_reward_never_decreases_on_conforming_instances() {
    for i in 0..50 {
        let inst = generated_instance(5, 2 + (i % 3) as usize, &[Assumption::A1, Assumption::A2], 77, i).unwrap();
        let cfg = ExactRunConfig::new(vec![0.0; inst.dim()], 10_000)
            .with_learning_rate(LearningRate::ExactBoundFraction(0.9));
        let traj = run_exact(&inst, &cfg).unwrap();
        assert!(traj.is_complete());
        for (t, w) in traj.expected_rewards.windows(2).enumerate() {
            assert!(w[1] > w[0] - 1e-12, "instance {i}, step {t}: {} -> {}", w[0], w[1]);
        }
        assert_eq!(audit_monotonicity(&traj).violations, 0);
    }
}

#[test]
fn policies_become_nearly_deterministic_and_optimal() {
    for i in 0..6 {
        let inst =
            generated_instance(4, 2, &[Assumption::A1, Assumption::A2, Assumption::A4], 91, i).unwrap();
        let cfg = ExactRunConfig::new(vec![0.0; 2], 1_000_000).with_stride(100_000);
        let traj = run_exact(&inst, &cfg).unwrap();
        assert!(traj.final_state.max_probability() > 0.99, "instance {i}: {:?}", traj.final_state.policy);
        assert_eq!(traj.final_argmax(), inst.optimal_action(), "instance {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn smoothness_inequality_holds(
        (inst, theta, step) in arb_state(None).prop_flat_map(|(inst, theta)| {
            let d = inst.dim();
            (Just(inst), Just(theta), vec(-2.0..2.0f64, d))
        })
    ) {
        let next: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + b).collect();
        let check = check_smoothness(&inst, &theta, &next).unwrap();
        prop_assert!(check.holds, "{check:?}");

        let c = constants(&inst).unwrap();
        let pi = policy_oracle(&inst, &theta);
        let g = feature_gradient_oracle(&inst, &pi, inst.rewards());
        let lhs = (expected_reward_oracle(&inst, &next) - expected_reward_oracle(&inst, &theta) - dot(&g, &step)).abs();
        let l = 9.0 * inst.reward_bound() * c.lambda_max / 2.0;
        prop_assert!((l - c.smoothness_l).abs() < 1e-12);
        prop_assert!(lhs <= l / 2.0 * dot(&step, &step) + 1e-9);
        prop_assert!((lhs - check.lhs).abs() < 1e-12);
    }

    #[test]
    fn one_exact_step_matches_the_dense_update((inst, theta) in arb_state(None)) {
        let eta = 0.9 * constants(&inst).unwrap().eta_exact_bound;
        let cfg = ExactRunConfig::new(theta.clone(), 1).with_learning_rate(LearningRate::Constant(eta)).with_stride(1);
        let traj = run_exact(&inst, &cfg).unwrap();
        let g = feature_gradient_oracle(&inst, &policy_oracle(&inst, &theta), inst.rewards());
        for j in 0..theta.len() {
            prop_assert!((traj.final_state.theta[j] - (theta[j] + eta * g[j])).abs() < 1e-12);
        }
    }
}
