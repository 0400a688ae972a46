//! Sampled-reward policy gradient with the importance-weighted estimator.

use crate::bandit::{
    covariance_apply, expected_reward, make_policy, NoiseFamily, PolicyState, ProblemInstance,
};
use crate::error::{Error, Result};
use crate::exact::{guard_violation, snapshot, LearningRate};
use crate::rng::CounterRng;
use crate::scalar::Scalar;
use crate::trajectory::{Abort, Ledger, LedgerRow, Trajectory};

/// Importance-weighted reward estimate `r_hat = e_a R / pi(a)`.
pub fn is_estimator<T: Scalar>(policy: &[T], action: usize, reward: T) -> Result<Vec<T>> {
    if action >= policy.len() {
        return Err(Error::Shape(format!("action {action} out of range for K = {}", policy.len())));
    }
    let p = policy[action];
    if p <= T::zero() {
        return Err(Error::ZeroProbabilityAction { action });
    }
    let mut r_hat = vec![T::zero(); policy.len()];
    r_hat[action] = reward / p;
    Ok(r_hat)
}

/// Update direction `X^T H(pi) r_hat` for one observed `(action, reward)`.
pub fn stochastic_direction<T: Scalar>(
    instance: &ProblemInstance<T>,
    state: &PolicyState<T>,
    action: usize,
    reward: T,
) -> Result<Vec<T>> {
    let r_hat = is_estimator(&state.policy, action, reward)?;
    Ok(instance.features().tr_mul_vec(&covariance_apply(&state.policy, &r_hat)))
}

/// `theta + eta X^T H(pi) r_hat`.
pub fn stochastic_update<T: Scalar>(
    instance: &ProblemInstance<T>,
    state: &PolicyState<T>,
    action: usize,
    reward: T,
    eta: T,
) -> Result<Vec<T>> {
    let dir = stochastic_direction(instance, state, action, reward)?;
    Ok(state.theta.iter().zip(&dir).map(|(&t, &g)| t + eta * g).collect())
}

/// Inverse-CDF draw from `policy` using a uniform `u` in `[0, 1)`.
/// Zero-probability actions are never returned.
pub fn sample_action<T: Scalar>(policy: &[T], u: f64) -> usize {
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (a, p) in policy.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p <= 0.0 {
            continue;
        }
        cum += p;
        last_positive = a;
        if u < cum {
            return a;
        }
    }
    last_positive
}

/// Draws a reward for `action`; without a noise family the mean is returned.
pub fn sample_reward<T: Scalar>(instance: &ProblemInstance<T>, action: usize, rng: &mut CounterRng) -> T {
    let mean = instance.rewards()[action];
    match instance.noise() {
        Some(noise) => T::lit(noise.sample(mean.to_f64_lossy(), rng)),
        None => mean,
    }
}

/// Which logit differences to decompose into progress and noise.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum LedgerPairs {
    #[default]
    Off,
    /// `(a*, a)` for every `a != a*`.
    AgainstOptimal,
    Pairs(Vec<(usize, usize)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRunConfig<T> {
    pub theta_init: Vec<T>,
    pub learning_rate: LearningRate<T>,
    pub horizon: usize,
    pub seed: u64,
    pub record_stride: usize,
    pub ledger: LedgerPairs,
}

impl<T: Scalar> StochasticRunConfig<T> {
    /// Stochastic step-size bound, stride 100, no ledger.
    pub fn new(theta_init: Vec<T>, horizon: usize, seed: u64) -> Self {
        Self {
            theta_init,
            learning_rate: LearningRate::StochasticBound,
            horizon,
            seed,
            record_stride: 100,
            ledger: LedgerPairs::Off,
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

    pub fn with_ledger(mut self, ledger: LedgerPairs) -> Self {
        self.ledger = ledger;
        self
    }
}

struct LedgerState<T> {
    pairs: Vec<(usize, usize)>,
    initial: Vec<T>,
    progress: Vec<T>,
    noise: Vec<T>,
    rows: Vec<LedgerRow<T>>,
    max_err: T,
}

impl<T: Scalar> LedgerState<T> {
    fn new(pairs: Vec<(usize, usize)>, state: &PolicyState<T>) -> Self {
        let initial = pairs.iter().map(|&(i, j)| state.logits[i] - state.logits[j]).collect();
        let n = pairs.len();
        Self { pairs, initial, progress: vec![T::zero(); n], noise: vec![T::zero(); n], rows: Vec::new(), max_err: T::zero() }
    }

    /// Books one step taken from `prev` to `next` with estimate `r_hat`.
    fn book(
        &mut self,
        instance: &ProblemInstance<T>,
        prev: &PolicyState<T>,
        next: &PolicyState<T>,
        r_hat: &[T],
        eta: T,
        record_iter: Option<usize>,
    ) {
        let x = instance.features();
        let push = |v: &[T]| -> Vec<T> {
            x.mul_vec(&x.tr_mul_vec(&covariance_apply(&prev.policy, v))).into_iter().map(|z| eta * z).collect()
        };
        let progress = push(instance.rewards());
        let deviation: Vec<T> = r_hat.iter().zip(instance.rewards()).map(|(&a, &b)| a - b).collect();
        let noise = push(&deviation);
        let mut inc_p = Vec::with_capacity(self.pairs.len());
        let mut inc_n = Vec::with_capacity(self.pairs.len());
        let mut diffs = Vec::with_capacity(self.pairs.len());
        for (p, &(i, j)) in self.pairs.iter().enumerate() {
            let dp = progress[i] - progress[j];
            let dn = noise[i] - noise[j];
            self.progress[p] = self.progress[p] + dp;
            self.noise[p] = self.noise[p] + dn;
            let direct = next.logits[i] - next.logits[j];
            let rebuilt = self.initial[p] + self.progress[p] + self.noise[p];
            self.max_err = self.max_err.max((direct - rebuilt).abs());
            inc_p.push(dp);
            inc_n.push(dn);
            diffs.push(direct);
        }
        if let Some(iter) = record_iter {
            self.rows.push(LedgerRow {
                iter,
                progress_increment: inc_p,
                noise_increment: inc_n,
                progress_cum: self.progress.clone(),
                noise_cum: self.noise.clone(),
                logit_diff: diffs,
            });
        }
    }

    fn finish(self) -> Ledger<T> {
        Ledger { pairs: self.pairs, initial_diff: self.initial, rows: self.rows, max_reconstruction_error: self.max_err }
    }
}

/// Runs the stochastic algorithm. Iteration `t` draws its action and reward
/// from the stream keyed by `(config.seed, t)`.
pub fn run_stochastic<T: Scalar>(
    instance: &ProblemInstance<T>,
    config: &StochasticRunConfig<T>,
) -> Result<Trajectory<T>> {
    if config.horizon < 1 || config.record_stride < 1 {
        return Err(Error::InvalidConfig("horizon and record stride must be at least 1".into()));
    }
    let k = instance.num_actions();
    let a_star = instance.optimal_action();
    let pairs = match &config.ledger {
        LedgerPairs::Off => None,
        LedgerPairs::AgainstOptimal => Some((0..k).filter(|&a| a != a_star).map(|a| (a_star, a)).collect()),
        LedgerPairs::Pairs(p) => {
            if p.iter().any(|&(i, j)| i >= k || j >= k || i == j) {
                return Err(Error::InvalidConfig(format!("bad ledger pairs {p:?}")));
            }
            Some(p.clone())
        }
    };
    if instance.noise().is_none() {
        return Err(Error::Unsupported("a reward noise family for sampled runs".into()));
    }
    let eta = config.learning_rate.resolve(instance)?;
    let mut state = make_policy(instance, &config.theta_init)?;
    let mut min_opt = state.policy[a_star];
    #[cfg(debug_assertions)]
    let direction_bound = crate::linalg::sym_eigs(&crate::linalg::gram(instance.features()))
        .map(|(_, hi)| T::lit(2.0) * hi * instance.reward_bound() * instance.reward_bound())
        .ok();
    let mut ledger = pairs.map(|p| LedgerState::new(p, &state));
    let mut rewards = Vec::with_capacity(config.horizon + 1);
    let mut records = Vec::with_capacity(config.horizon / config.record_stride + 2);
    let mut abort = None;

    let first = expected_reward(instance, &state);
    rewards.push(first);
    let mut pending = snapshot(instance, 1, &state, first);

    for t in 1..=config.horizon {
        let mut rng = CounterRng::new(config.seed, t as u64);
        let action = sample_action(&state.policy, rng.uniform());
        let reward = sample_reward(instance, action, &mut rng);
        let recorded = (t - 1) % config.record_stride == 0;
        if recorded {
            pending.action = Some(action);
            pending.reward = Some(reward);
            records.push(pending.clone());
        }
        let r_hat = is_estimator(&state.policy, action, reward)?;
        let dir = instance.features().tr_mul_vec(&covariance_apply(&state.policy, &r_hat));
        #[cfg(debug_assertions)]
        if let Some(bound) = direction_bound {
            let sq = crate::scalar::dot(&dir, &dir);
            debug_assert!(sq <= bound * (T::one() + T::lit(1e-9)), "update direction {sq} above {bound}");
        }
        let theta: Vec<T> = state.theta.iter().zip(&dir).map(|(&th, &g)| th + eta * g).collect();
        if let Some(reason) = guard_violation(&theta) {
            abort = Some(Abort { last_finite_iter: t, reason });
            break;
        }
        let next = make_policy(instance, &theta)?;
        let iter = t + 1;
        if let Some(l) = ledger.as_mut() {
            let row = (iter - 1) % config.record_stride == 0 || t == config.horizon;
            l.book(instance, &state, &next, &r_hat, eta, row.then_some(iter));
        }
        state = next;
        let value = expected_reward(instance, &state);
        rewards.push(value);
        min_opt = min_opt.min(state.policy[a_star]);
        if (iter - 1) % config.record_stride == 0 || t == config.horizon {
            pending = snapshot(instance, iter, &state, value);
            if t == config.horizon {
                records.push(pending.clone());
            }
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
        ledger: ledger.map(LedgerState::finish),
        learning_rate: eta,
        min_optimal_probability: min_opt,
    })
}

/// Reward outcomes for `action` with their probabilities, when the reward
/// law is discrete.
fn discrete_outcomes<T: Scalar>(instance: &ProblemInstance<T>, action: usize) -> Option<Vec<(T, T)>> {
    let mean = instance.rewards()[action];
    match instance.noise() {
        None => Some(vec![(mean, T::one())]),
        Some(NoiseFamily::Bernoulli) => Some(vec![(T::one(), mean), (T::zero(), T::one() - mean)]),
        Some(_) => None,
    }
}

/// `E_t[theta_{t+1}]` given `theta_t`.
///
/// Discrete reward laws are enumerated outcome by outcome; for continuous
/// laws the update is linear in the reward, so only the mean enters.
pub fn exact_step_expectation<T: Scalar>(
    instance: &ProblemInstance<T>,
    state: &PolicyState<T>,
    eta: T,
) -> Result<Vec<T>> {
    let mut mean_dir = vec![T::zero(); instance.dim()];
    for a in 0..instance.num_actions() {
        let pa = state.policy[a];
        if pa <= T::zero() {
            continue;
        }
        let outcomes =
            discrete_outcomes(instance, a).unwrap_or_else(|| vec![(instance.rewards()[a], T::one())]);
        for (reward, prob) in outcomes {
            let dir = stochastic_direction(instance, state, a, reward)?;
            for (m, v) in mean_dir.iter_mut().zip(dir) {
                *m = *m + pa * prob * v;
            }
        }
    }
    Ok(state.theta.iter().zip(&mean_dir).map(|(&t, &g)| t + eta * g).collect())
}

/// `E_t[<pi_{t+1}, r>]` by enumerating every action and reward outcome.
/// Only available for discrete reward laws.
pub fn expected_next_reward<T: Scalar>(
    instance: &ProblemInstance<T>,
    state: &PolicyState<T>,
    eta: T,
) -> Result<T> {
    let mut total = T::zero();
    for a in 0..instance.num_actions() {
        let pa = state.policy[a];
        if pa <= T::zero() {
            continue;
        }
        let outcomes = discrete_outcomes(instance, a).ok_or_else(|| {
            Error::Unsupported("expected next reward needs a discrete reward law".into())
        })?;
        for (reward, prob) in outcomes {
            let next = make_policy(instance, &stochastic_update(instance, state, a, reward, eta)?)?;
            total = total + pa * prob * expected_reward(instance, &next);
        }
    }
    Ok(total)
}
