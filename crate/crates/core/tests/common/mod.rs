#![allow(dead_code)]

use linspg::condition::constants;
use linspg::{Instance64, Matrix64, NoiseFamily};
use proptest::collection::vec;
use proptest::prelude::*;
use rand::Rng;

pub fn build(k: usize, d: usize, features: Vec<f64>, rewards: Vec<f64>, noise: Option<NoiseFamily>) -> Option<Instance64> {
    let x = Matrix64::new(k, d, features).ok()?;
    let inst = Instance64::new(x, rewards, 1.0, noise).ok()?;
    let c = constants(&inst).ok()?;
    (inst.reward_gap() >= 0.01 && c.lambda_min > 1e-3).then_some(inst)
}

/// Small full-rank instances with distinct rewards in `[0, 1]` and `R_max = 1`.
pub fn arb_instance(noise: Option<NoiseFamily>) -> impl Strategy<Value = Instance64> {
    (2usize..=5)
        .prop_flat_map(|k| (Just(k), 1usize..=k.min(3)))
        .prop_flat_map(move |(k, d)| (Just(k), Just(d), vec(-2.0..2.0f64, k * d), vec(0.0..1.0f64, k)))
        .prop_filter_map("degenerate instance", move |(k, d, f, r)| build(k, d, f, r, noise))
}

pub fn arb_state(noise: Option<NoiseFamily>) -> impl Strategy<Value = (Instance64, Vec<f64>)> {
    arb_instance(noise).prop_flat_map(|inst| {
        let d = inst.dim();
        (Just(inst), vec(-3.0..3.0f64, d))
    })
}

/// Same distribution as [`arb_instance`], drawn from a plain RNG.
pub fn random_instance<R: Rng>(rng: &mut R, noise: Option<NoiseFamily>) -> Instance64 {
    loop {
        let k = rng.random_range(2..=5);
        let d = rng.random_range(1..=k.min(3));
        let f = (0..k * d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let r = (0..k).map(|_| rng.random_range(0.0..1.0)).collect();
        if let Some(inst) = build(k, d, f, r, noise) {
            return inst;
        }
    }
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Dense `diag(pi) - pi pi^T`.
pub fn h_matrix(pi: &[f64]) -> Vec<Vec<f64>> {
    let k = pi.len();
    (0..k)
        .map(|i| (0..k).map(|j| if i == j { pi[i] - pi[i] * pi[j] } else { -pi[i] * pi[j] }).collect())
        .collect()
}

pub fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Softmax computed in long form with max subtraction.
pub fn softmax_oracle(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

pub fn policy_oracle(inst: &Instance64, theta: &[f64]) -> Vec<f64> {
    let x = inst.features();
    let z: Vec<f64> = (0..inst.num_actions()).map(|a| dot(x.row(a), theta)).collect();
    softmax_oracle(&z)
}

/// `X^T (diag(pi) - pi pi^T) r` through the dense matrix.
pub fn feature_gradient_oracle(inst: &Instance64, pi: &[f64], r: &[f64]) -> Vec<f64> {
    let hr = mat_vec(&h_matrix(pi), r);
    let x = inst.features();
    (0..inst.dim()).map(|j| (0..inst.num_actions()).map(|a| x.get(a, j) * hr[a]).sum()).collect()
}

pub fn expected_reward_oracle(inst: &Instance64, theta: &[f64]) -> f64 {
    dot(&policy_oracle(inst, theta), inst.rewards())
}
