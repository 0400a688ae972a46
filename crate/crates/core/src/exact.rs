//! Gradient ascent on `<pi_theta, r>` with the true mean rewards.

use serde::{Deserialize, Serialize};

use crate::bandit::{exact_gradient, expected_reward, make_policy, PolicyState, ProblemInstance};
use crate::condition::constants;
use crate::error::{Error, Result};
use crate::instances;
use crate::scalar::{dot, norm2, Scalar};
use crate::trajectory::{Abort, Snapshot, Trajectory};

/// Runs stop once `||theta||` exceeds this.
pub const THETA_NORM_GUARD: f64 = 1e12;

/// Step-size rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "kebab-case")]
pub enum LearningRate<T> {
    Constant(T),
    /// `f * eta_exact_bound` with `f` in `(0, 1)`.
    ExactBoundFraction(T),
    /// The stochastic-setting bound itself.
    StochasticBound,
}

/// Parses `0.2`, `exact-bound:0.9` or `stochastic-bound`.
impl<T: Scalar> std::str::FromStr for LearningRate<T> {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidConfig(format!("cannot parse learning rate `{s}`"));
        if s == "stochastic-bound" {
            return Ok(LearningRate::StochasticBound);
        }
        if let Some(f) = s.strip_prefix("exact-bound:") {
            let f: f64 = f.parse().map_err(|_| bad())?;
            return Ok(LearningRate::ExactBoundFraction(T::lit(f)));
        }
        s.parse::<f64>().map(|v| LearningRate::Constant(T::lit(v))).map_err(|_| bad())
    }
}

impl<T: Scalar> LearningRate<T> {
    pub fn resolve(&self, instance: &ProblemInstance<T>) -> Result<T> {
        let eta = match *self {
            LearningRate::Constant(eta) => eta,
            LearningRate::ExactBoundFraction(f) => {
                if !(f > T::zero() && f < T::one()) {
                    return Err(Error::InvalidConfig(format!("bound fraction {f} outside (0, 1)")));
                }
                f * T::lit(constants(instance)?.eta_exact_bound)
            }
            LearningRate::StochasticBound => T::lit(constants(instance)?.eta_stochastic_bound),
        };
        if !(eta > T::zero()) || !eta.is_finite() {
            return Err(Error::InvalidConfig(format!("learning rate must be positive, got {eta}")));
        }
        Ok(eta)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExactRunConfig<T> {
    pub theta_init: Vec<T>,
    pub learning_rate: LearningRate<T>,
    pub horizon: usize,
    pub record_stride: usize,
}

impl<T: Scalar> ExactRunConfig<T> {
    /// `eta = 0.9 * eta_exact_bound`, stride 100.
    pub fn new(theta_init: Vec<T>, horizon: usize) -> Self {
        Self {
            theta_init,
            learning_rate: LearningRate::ExactBoundFraction(T::lit(0.9)),
            horizon,
            record_stride: 100,
        }
    }

    pub fn with_learning_rate(mut self, lr: LearningRate<T>) -> Self {
        self.learning_rate = lr;
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.horizon < 1 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.record_stride < 1 {
            return Err(Error::InvalidConfig("record stride must be at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn snapshot<T: Scalar>(
    instance: &ProblemInstance<T>,
    iter: usize,
    state: &PolicyState<T>,
    reward: T,
) -> Snapshot<T> {
    Snapshot {
        iter,
        theta: state.theta.clone(),
        policy: state.policy.clone(),
        expected_reward: reward,
        grad_norm: norm2(&exact_gradient(instance, state)),
        action: None,
        reward: None,
    }
}

pub(crate) fn guard_violation<T: Scalar>(theta: &[T]) -> Option<String> {
    if theta.iter().any(|x| !x.is_finite()) {
        Some("non-finite parameter".into())
    } else if norm2(theta) > T::lit(THETA_NORM_GUARD) {
        Some(format!("parameter norm exceeded {THETA_NORM_GUARD:e}"))
    } else {
        None
    }
}

/// Runs the exact algorithm; `observe(t, state)` sees every iterate
/// `theta_1 ..= theta_{T+1}`.
pub fn run_exact_with<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &ExactRunConfig<T>,
    mut observe: impl FnMut(usize, &PolicyState<T>),
) -> Result<Trajectory<T>> {
    config.validate()?;
    let eta = config.learning_rate.resolve(instance)?;
    let mut state = make_policy(instance, &config.theta_init)?;
    let mut rewards = Vec::with_capacity(config.horizon + 1);
    let mut records = Vec::with_capacity(config.horizon / config.record_stride + 2);
    let mut abort = None;

    let a_star = instance.optimal_action();
    let mut min_opt = state.policy[a_star];
    let first = expected_reward(instance, &state);
    rewards.push(first);
    records.push(snapshot(instance, 1, &state, first));
    observe(1, &state);

    for t in 1..=config.horizon {
        let grad = exact_gradient(instance, &state);
        let theta: Vec<T> = state.theta.iter().zip(&grad).map(|(&th, &g)| th + eta * g).collect();
        if let Some(reason) = guard_violation(&theta) {
            abort = Some(Abort { last_finite_iter: t, reason });
            break;
        }
        state = make_policy(instance, &theta)?;
        let iter = t + 1;
        let reward = expected_reward(instance, &state);
        rewards.push(reward);
        min_opt = min_opt.min(state.policy[a_star]);
        observe(iter, &state);
        if (iter - 1) % config.record_stride == 0 || t == config.horizon {
            records.push(snapshot(instance, iter, &state, reward));
        }
    }
    if abort.is_some() {
        let iter = rewards.len();
        if records.last().map(|s| s.iter) != Some(iter) {
            records.push(snapshot(instance, iter, &state, *rewards.last().expect("nonempty")));
        }
    }
    Ok(Trajectory {
        optimal_action: a_star,
        optimal_reward: instance.optimal_reward(),
        expected_rewards: rewards,
        records,
        final_state: state,
        abort,
        ledger: None,
        learning_rate: eta,
        min_optimal_probability: min_opt,
    })
}

/// Runs the exact algorithm for `config.horizon` updates.
///
/// A run that hits the divergence guard is returned with `abort` set and the
/// last finite iterate as its final state.
pub fn run_exact<T: Scalar>(instance: &ProblemInstance<T>, config: &ExactRunConfig<T>) -> Result<Trajectory<T>> {
    run_exact_with(instance, config, |_, _| {})
}

/// Outcome of the three-armed non-convergence construction.
#[derive(Debug, Clone)]
pub struct Prop2Outcome {
    pub trajectory: Trajectory<f64>,
    pub theta_init: Vec<f64>,
    /// Scale `C` of the initialization `C (x_3 - x_1)`.
    pub scale: f64,
    /// Threshold `-log(zeta) / ||x_3 - x_1||^2` that `scale` must exceed.
    pub scale_threshold: f64,
    pub zeta: f64,
    /// Steps where `pi(1)/pi(3)` was below `zeta` yet increased.
    pub ratio_increases_below_zeta: usize,
    pub max_pi1: f64,
}

/// Ratio bound `zeta` of the three-armed construction for a given start.
/// Labels 0, 1, 2 are the actions in descending reward order.
pub fn prop2_zeta<T: Scalar>(instance: &ProblemInstance<T>, theta_init: &[T]) -> Result<T> {
    let x = |a: usize| instance.feature(a);
    let sub = |p: &[T], q: &[T]| -> Vec<T> { p.iter().zip(q).map(|(&a, &b)| a - b).collect() };
    let x13 = sub(x(0), x(2));
    let num = dot(&sub(x(2), x(1)), &x13);
    let den = dot(&sub(x(0), x(1)), &x13);
    let state = make_policy(instance, theta_init)?;
    let v = expected_reward(instance, &state);
    let r = instance.rewards();
    Ok(num / den * (v - r[2]) / (r[0] - v))
}

/// Runs the exact algorithm on the three-armed instance that violates the
/// `K = 3` condition, from `theta_1 = 2 (x_3 - x_1)` with
/// `eta = 0.9 * eta_exact_bound`.
pub fn run_prop2_counterexample(horizon: usize) -> Result<Prop2Outcome> {
    let instance = instances::lookup("example-4")?;
    let scale = 2.0;
    let x1 = instance.feature(0).to_vec();
    let x3 = instance.feature(2).to_vec();
    let dir: Vec<f64> = x3.iter().zip(&x1).map(|(a, b)| a - b).collect();
    let theta_init: Vec<f64> = dir.iter().map(|v| scale * v).collect();
    let zeta = prop2_zeta(&instance, &theta_init)?;
    let scale_threshold = -zeta.ln() / dot(&dir, &dir);

    let config = ExactRunConfig::new(theta_init.clone(), horizon).with_stride(100.max(horizon / 1000));
    let mut prev_ratio: Option<f64> = None;
    let mut increases = 0;
    let mut max_pi1: f64 = 0.0;
    let trajectory = run_exact_with(&instance, &config, |_, s| {
        let ratio = s.policy[0] / s.policy[2];
        if let Some(p) = prev_ratio {
            if p < zeta && ratio > p {
                increases += 1;
            }
        }
        prev_ratio = Some(ratio);
        max_pi1 = max_pi1.max(s.policy[0]);
    })?;
    Ok(Prop2Outcome {
        trajectory,
        theta_init,
        scale,
        scale_threshold,
        zeta,
        ratio_increases_below_zeta: increases,
        max_pi1,
    })
}
