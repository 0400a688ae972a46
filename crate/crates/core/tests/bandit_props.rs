mod common;

use common::{arb_state, dot, feature_gradient_oracle, norm, policy_oracle, softmax_oracle};
use linspg::{covariance_apply, exact_gradient, expected_reward, make_policy, pairwise_covariance_form, softmax};
use linspg::{Instance32, Matrix};
use proptest::collection::vec;
use proptest::prelude::*;

fn arb_policy_and_vectors() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (2usize..=7).prop_flat_map(|k| {
        (vec(-6.0..6.0f64, k), vec(-3.0..3.0f64, k), vec(-3.0..3.0f64, k))
            .prop_map(|(z, x, y)| (softmax_oracle(&z), x, y))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn gradient_matches_central_differences((inst, theta) in arb_state(None)) {
        let state = make_policy(&inst, &theta).unwrap();
        let g = exact_gradient(&inst, &state);
        let h = 1e-6;
        let f = |t: &[f64]| expected_reward(&inst, &make_policy(&inst, t).unwrap());
        let fd: Vec<f64> = (0..theta.len())
            .map(|j| {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                (f(&up) - f(&down)) / (2.0 * h)
            })
            .collect();
        let err: Vec<f64> = g.iter().zip(&fd).map(|(a, b)| a - b).collect();
        let rel = norm(&err) / norm(&g).max(norm(&fd)).max(1e-4);
        prop_assert!(rel <= 1e-5, "relative error {rel}");
    }

    #[test]
    fn gradient_matches_dense_covariance((inst, theta) in arb_state(None)) {
        let state = make_policy(&inst, &theta).unwrap();
        let pi = policy_oracle(&inst, &theta);
        for (a, b) in state.policy.iter().zip(&pi) {
            prop_assert!((a - b).abs() < 1e-14);
        }
        let oracle = feature_gradient_oracle(&inst, &pi, inst.rewards());
        for (a, b) in exact_gradient(&inst, &state).iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn covariance_apply_matches_pairwise_form((pi, x, y) in arb_policy_and_vectors()) {
        let lhs = dot(&x, &covariance_apply(&pi, &y));
        let rhs = pairwise_covariance_form(&pi, &x, &y);
        prop_assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
        let mut brute = 0.0;
        for i in 0..pi.len() {
            for j in 0..pi.len() {
                brute += 0.5 * pi[i] * pi[j] * (x[i] - x[j]) * (y[i] - y[j]);
            }
        }
        prop_assert!((rhs - brute).abs() < 1e-12);
    }

    #[test]
    fn covariance_is_positive_semidefinite((pi, v, _) in arb_policy_and_vectors()) {
        prop_assert!(dot(&v, &covariance_apply(&pi, &v)) >= -1e-12);
    }

    #[test]
    fn softmax_ignores_constant_logit_shifts(z in vec(-50.0..50.0f64, 1..8), c in -100.0..100.0f64) {
        let shifted: Vec<f64> = z.iter().map(|v| v + c).collect();
        let (p, q) = (softmax(&z), softmax(&shifted));
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn softmax_survives_huge_logits() {
    let p = softmax(&[1e300, 0.0, -1e300]);
    assert_eq!(p, vec![1.0, 0.0, 0.0]);
    let q = softmax(&[800.0, 800.0]);
    assert_eq!(q, vec![0.5, 0.5]);
}

#[test]
fn single_precision_gradient_tracks_double_precision() {
    let rows = [[0.0, -2.0], [-1.0, 0.0], [0.0, 1.0], [2.0, 0.0]];
    let x32 = Matrix::from_rows(&rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect::<Vec<_>>()).unwrap();
    let x64 = Matrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
    let i32_: Instance32 = Instance32::new(x32, vec![9.0, 8.0, 7.0, 6.0], 9.0, None).unwrap();
    let i64_ = linspg::Instance64::new(x64, vec![9.0, 8.0, 7.0, 6.0], 9.0, None).unwrap();
    let g32 = exact_gradient(&i32_, &make_policy(&i32_, &[0.3f32, -0.2]).unwrap());
    let g64 = exact_gradient(&i64_, &make_policy(&i64_, &[0.3, -0.2]).unwrap());
    for (a, b) in g32.iter().zip(&g64) {
        assert!((*a as f64 - b).abs() < 1e-5);
    }
}
