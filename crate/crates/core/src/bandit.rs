//! Problem instances, log-linear softmax policies and the exact gradient.
//!
//! Every quantity is built around the covariance operator
//! `H(pi) = diag(pi) - pi pi^T`: the gradient of the expected reward with
//! respect to the logits is `H(pi) r`, and with respect to the parameters it is
//! `X^T H(pi) r`.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, TOLERANCES};
use crate::scalar::{all_finite, dot, Scalar};

/// Reward distribution family attached to an instance for stochastic runs.
///
/// Every family draws from `[0, 1]` and has mean exactly `r(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseFamily {
    Bernoulli,
    /// Gaussian around the mean, truncated symmetrically to the widest
    /// interval centred at the mean that fits in `[0, 1]`.
    TruncatedGaussian { sigma: f64 },
    /// `Beta(c * mean, c * (1 - mean))`.
    Beta { concentration: f64 },
}

const MAX_GAUSSIAN_REJECTIONS: usize = 10_000;

impl NoiseFamily {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseFamily::Bernoulli => "bernoulli",
            NoiseFamily::TruncatedGaussian { .. } => "gaussian",
            NoiseFamily::Beta { .. } => "beta",
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            NoiseFamily::Bernoulli => Ok(()),
            NoiseFamily::TruncatedGaussian { sigma } if sigma > 0.0 && sigma.is_finite() => Ok(()),
            NoiseFamily::Beta { concentration } if concentration > 0.0 && concentration.is_finite() => {
                Ok(())
            }
            other => Err(Error::InvalidInstance(format!("bad noise parameters {other:?}"))),
        }
    }

    /// Draws one reward with the given mean (which must lie in `[0, 1]`).
    pub fn sample<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match *self {
            NoiseFamily::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            NoiseFamily::TruncatedGaussian { sigma } => {
                let half_width = mean.min(1.0 - mean);
                if half_width <= 0.0 {
                    return mean;
                }
                for _ in 0..MAX_GAUSSIAN_REJECTIONS {
                    let z: f64 = rng.sample(StandardNormal);
                    let dev = sigma * z;
                    if dev.abs() <= half_width {
                        return mean + dev;
                    }
                }
                // Only reachable when sigma dwarfs the window; the window is
                // then nearly uniform.
                mean + half_width * (2.0 * rng.random::<f64>() - 1.0)
            }
            NoiseFamily::Beta { concentration } => {
                if mean <= 0.0 || mean >= 1.0 {
                    return mean;
                }
                let beta = Beta::new(concentration * mean, concentration * (1.0 - mean))
                    .expect("positive beta shape parameters");
                beta.sample(rng)
            }
        }
    }

    /// `E[R^2]` for a reward of this family with the given mean.
    pub fn second_moment(&self, mean: f64) -> f64 {
        match *self {
            NoiseFamily::Bernoulli => mean,
            NoiseFamily::Beta { concentration } => {
                mean * mean + mean * (1.0 - mean) / (concentration + 1.0)
            }
            NoiseFamily::TruncatedGaussian { sigma } => {
                let half_width = mean.min(1.0 - mean);
                if half_width <= 0.0 {
                    return mean * mean;
                }
                use statrs::distribution::{Continuous, ContinuousCDF, Normal};
                let n = Normal::new(0.0, 1.0).expect("standard normal");
                let b = half_width / sigma;
                let mass = 2.0 * n.cdf(b) - 1.0;
                let var = sigma * sigma * (1.0 - 2.0 * b * n.pdf(b) / mass);
                mean * mean + var
            }
        }
    }
}

pub const DEFAULT_GAUSSIAN_SIGMA: f64 = 0.1;
pub const DEFAULT_BETA_CONCENTRATION: f64 = 10.0;

/// Parses `bernoulli`, `gaussian[:sigma]` or `beta[:concentration]`.
impl std::str::FromStr for NoiseFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.trim().split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s.trim(), None),
        };
        let value = |default: f64| -> Result<f64> {
            match param {
                None => Ok(default),
                Some(p) => p
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("bad noise parameter `{p}`"))),
            }
        };
        let family = match name.to_ascii_lowercase().as_str() {
            "bernoulli" if param.is_none() => NoiseFamily::Bernoulli,
            "gaussian" | "truncated-gaussian" => NoiseFamily::TruncatedGaussian { sigma: value(DEFAULT_GAUSSIAN_SIGMA)? },
            "beta" => NoiseFamily::Beta { concentration: value(DEFAULT_BETA_CONCENTRATION)? },
            _ => return Err(Error::InvalidConfig(format!("unknown noise family `{s}`"))),
        };
        family.validate().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(family)
    }
}

/// A K-armed bandit with linear features.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemInstance<T> {
    features: Matrix<T>,
    rewards: Vec<T>,
    reward_bound: T,
    noise: Option<NoiseFamily>,
}

impl<T: Scalar> ProblemInstance<T> {
    /// Validates shapes and bounds. Ties between rewards are allowed here;
    /// use [`ProblemInstance::new_strict`] to reject them.
    pub fn new(
        features: Matrix<T>,
        rewards: Vec<T>,
        reward_bound: T,
        noise: Option<NoiseFamily>,
    ) -> Result<Self> {
        let (k, d) = (features.rows(), features.cols());
        if k < 2 {
            return Err(Error::InvalidInstance(format!("need K >= 2 actions, got {k}")));
        }
        if d < 1 || d > k {
            return Err(Error::InvalidInstance(format!("need 1 <= d <= K, got d={d}, K={k}")));
        }
        if rewards.len() != k {
            return Err(Error::Shape(format!("{} rewards for {k} actions", rewards.len())));
        }
        if !all_finite(&rewards) || !reward_bound.is_finite() {
            return Err(Error::NonFinite("rewards"));
        }
        if reward_bound <= T::zero() {
            return Err(Error::InvalidInstance("reward bound must be positive".into()));
        }
        if let Some(worst) = rewards.iter().map(|r| r.abs()).find(|&r| r > reward_bound) {
            return Err(Error::InvalidInstance(format!(
                "|r(a)| = {worst} exceeds reward bound {reward_bound}"
            )));
        }
        if let Some(noise) = noise {
            noise.validate()?;
            if reward_bound < T::one() {
                return Err(Error::InvalidInstance(format!(
                    "{} rewards reach 1, so the reward bound must be at least 1",
                    noise.name()
                )));
            }
            if rewards.iter().any(|&r| r < T::zero() || r > T::one()) {
                return Err(Error::InvalidInstance(format!(
                    "{} rewards need means in [0, 1]",
                    noise.name()
                )));
            }
        }
        Ok(Self { features, rewards, reward_bound, noise })
    }

    /// Like [`ProblemInstance::new`] but also rejects near-tied rewards.
    pub fn new_strict(
        features: Matrix<T>,
        rewards: Vec<T>,
        reward_bound: T,
        noise: Option<NoiseFamily>,
    ) -> Result<Self> {
        let inst = Self::new(features, rewards, reward_bound, noise)?;
        if inst.reward_gap() <= T::lit(TOLERANCES.reward_tie) {
            return Err(Error::InvalidInstance("mean rewards are not pairwise distinct".into()));
        }
        Ok(inst)
    }

    /// Same instance with a different noise family.
    pub fn with_noise(&self, noise: Option<NoiseFamily>) -> Result<Self> {
        Self::new(self.features.clone(), self.rewards.clone(), self.reward_bound, noise)
    }

    /// Same rewards with features multiplied by `c`.
    pub fn with_scaled_features(&self, c: T) -> Result<Self> {
        Self::new(self.features.scaled(c), self.rewards.clone(), self.reward_bound, self.noise)
    }

    #[inline]
    pub fn num_actions(&self) -> usize {
        self.features.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix<T> {
        &self.features
    }

    pub fn feature(&self, a: usize) -> &[T] {
        self.features.row(a)
    }

    pub fn rewards(&self) -> &[T] {
        &self.rewards
    }

    pub fn reward_bound(&self) -> T {
        self.reward_bound
    }

    pub fn noise(&self) -> Option<NoiseFamily> {
        self.noise
    }

    /// Index of the largest mean reward (first one on ties).
    pub fn optimal_action(&self) -> usize {
        let mut best = 0;
        for (a, &r) in self.rewards.iter().enumerate() {
            if r > self.rewards[best] {
                best = a;
            }
        }
        best
    }

    pub fn optimal_reward(&self) -> T {
        self.rewards[self.optimal_action()]
    }

    /// Minimum pairwise reward gap.
    pub fn reward_gap(&self) -> T {
        let mut gap = T::infinity();
        for i in 0..self.rewards.len() {
            for j in (i + 1)..self.rewards.len() {
                gap = gap.min((self.rewards[i] - self.rewards[j]).abs());
            }
        }
        gap
    }

    /// Action indices sorted by descending mean reward.
    pub fn reward_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.num_actions()).collect();
        order.sort_by(|&a, &b| {
            self.rewards[b].partial_cmp(&self.rewards[a]).expect("finite rewards").then(a.cmp(&b))
        });
        order
    }

    /// Suboptimality gap `r(a*) - <pi, r>`.
    pub fn suboptimality(&self, policy: &[T]) -> T {
        self.optimal_reward() - dot(policy, &self.rewards)
    }
}

/// One iterate: parameters plus the logits and policy derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState<T> {
    pub theta: Vec<T>,
    pub logits: Vec<T>,
    pub policy: Vec<T>,
}

impl<T: Scalar> PolicyState<T> {
    pub fn probability(&self, a: usize) -> T {
        self.policy[a]
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.policy)
    }

    pub fn max_probability(&self) -> T {
        self.policy[self.argmax()]
    }
}

pub(crate) fn argmax<T: Scalar>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Softmax with max-logit subtraction.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = logits.iter().map(|&z| (z - m).exp()).collect();
    let total: T = out.iter().copied().sum();
    for p in &mut out {
        *p = *p / total;
    }
    out
}

/// `pi_theta = softmax(X theta)`.
pub fn make_policy<T: Scalar>(instance: &ProblemInstance<T>, theta: &[T]) -> Result<PolicyState<T>> {
    if theta.len() != instance.dim() {
        return Err(Error::Shape(format!(
            "theta has {} entries, features have {} columns",
            theta.len(),
            instance.dim()
        )));
    }
    if !all_finite(theta) {
        return Err(Error::NonFinite("theta"));
    }
    let logits = instance.features().mul_vec(theta);
    let policy = softmax(&logits);
    Ok(PolicyState { theta: theta.to_vec(), logits, policy })
}

/// `<pi, r>`.
pub fn expected_reward<T: Scalar>(instance: &ProblemInstance<T>, state: &PolicyState<T>) -> T {
    dot(&state.policy, instance.rewards())
}

/// `(diag(pi) - pi pi^T) v`.
pub fn covariance_apply<T: Scalar>(policy: &[T], v: &[T]) -> Vec<T> {
    let mean = dot(policy, v);
    policy.iter().zip(v).map(|(&p, &x)| p * (x - mean)).collect()
}

/// Gradient of `<pi, r>` with respect to the logits, `H(pi) r`.
pub fn logit_gradient<T: Scalar>(instance: &ProblemInstance<T>, state: &PolicyState<T>) -> Vec<T> {
    covariance_apply(&state.policy, instance.rewards())
}

/// Gradient of `<pi_theta, r>` with respect to `theta`, `X^T H(pi) r`.
pub fn exact_gradient<T: Scalar>(instance: &ProblemInstance<T>, state: &PolicyState<T>) -> Vec<T> {
    instance.features().tr_mul_vec(&logit_gradient(instance, state))
}

/// `sum_{i<j} pi(i) pi(j) (x(i) - x(j)) (y(i) - y(j))`, which equals
/// `<x, H(pi) y>`; evaluated directly from the pairs.
pub fn pairwise_covariance_form<T: Scalar>(policy: &[T], x: &[T], y: &[T]) -> T {
    let k = policy.len();
    let mut total = T::zero();
    for i in 0..k {
        for j in (i + 1)..k {
            total = total + policy[i] * policy[j] * (x[i] - x[j]) * (y[i] - y[j]);
        }
    }
    total
}

/// On-disk form of a problem instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    /// Row-major `K x d` feature matrix.
    pub features: Vec<f64>,
    pub rewards: Vec<f64>,
    pub r_max: f64,
    #[serde(default)]
    pub noise: Option<NoiseFamily>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            k: self.num_actions(),
            d: self.dim(),
            features: self.features.as_slice().iter().map(|x| x.to_f64_lossy()).collect(),
            rewards: self.rewards.iter().map(|x| x.to_f64_lossy()).collect(),
            r_max: self.reward_bound.to_f64_lossy(),
            noise: self.noise,
        }
    }

    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let features = Matrix::new(file.k, file.d, file.features.iter().map(|&x| T::lit(x)).collect())?;
        let rewards = file.rewards.iter().map(|&x| T::lit(x)).collect();
        Self::new(features, rewards, T::lit(file.r_max), file.noise)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn example1() -> ProblemInstance<f64> {
        let x = Matrix::from_columns(&[vec![0.0, -1.0, 0.0, 2.0], vec![-2.0, 0.0, 1.0, 0.0]]).unwrap();
        ProblemInstance::new(x, vec![9.0, 8.0, 7.0, 6.0], 9.0, None).unwrap()
    }

    fn tabular2(r: [f64; 2]) -> ProblemInstance<f64> {
        ProblemInstance::new(Matrix::identity(2), r.to_vec(), 1.0, None).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let s = make_policy(&example1(), &[0.0, 0.0]).unwrap();
        assert!(s.policy.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!((expected_reward(&example1(), &s) - 7.5).abs() < 1e-12);
    }

    #[test]
    fn example1_logits() {
        let s = make_policy(&example1(), &[3.0, 3.0]).unwrap();
        assert_eq!(s.logits, vec![-6.0, -3.0, 3.0, 6.0]);
        let z: f64 = [-6.0f64, -3.0, 3.0, 6.0].iter().map(|z| z.exp()).sum();
        assert!((s.policy[3] - 6f64.exp() / z).abs() < 1e-15);
    }

    #[test]
    fn two_arm_softmax() {
        let s = make_policy(&tabular2([1.0, 0.0]), &[3f64.ln(), 0.0]).unwrap();
        assert!((s.policy[0] - 0.75).abs() < 1e-15 && (s.policy[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_theta() {
        assert!(make_policy(&example1(), &[f64::NAN, 0.0]).is_err());
        assert!(make_policy(&example1(), &[0.0]).is_err());
    }

    #[test]
    fn expected_reward_cases() {
        let inst = tabular2([1.0, 0.0]);
        let s = make_policy(&inst, &[0.0, 0.0]).unwrap();
        assert_eq!(expected_reward(&inst, &s), 0.5);
        let hot = PolicyState { theta: vec![], logits: vec![], policy: vec![1.0, 0.0, 0.0, 0.0] };
        assert_eq!(expected_reward(&example1(), &hot), 9.0);
    }

    #[test]
    fn covariance_operator() {
        assert_eq!(covariance_apply(&[0.0, 1.0, 0.0], &[3.0, -1.0, 2.0]), vec![0.0, 0.0, 0.0]);
        assert_eq!(covariance_apply(&[0.5, 0.5], &[1.0, 0.0]), vec![0.25, -0.25]);
        let out = covariance_apply(&[0.2_f64, 0.3, 0.5], &[4.0, 4.0, 4.0]);
        assert!(out.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn exact_gradient_cases() {
        let inst = tabular2([1.0, 0.0]);
        let s = make_policy(&inst, &[0.0, 0.0]).unwrap();
        assert_eq!(exact_gradient(&inst, &s), vec![0.25, -0.25]);
        let hot = PolicyState { theta: vec![0.0; 2], logits: vec![0.0; 4], policy: vec![0.0, 0.0, 1.0, 0.0] };
        assert_eq!(exact_gradient(&example1(), &hot), vec![0.0, 0.0]);
    }

    #[test]
    fn pairwise_form_matches_operator() {
        let p: f64 = 0.3;
        let v = pairwise_covariance_form(&[p, 1.0 - p], &[2.0, -1.0], &[0.5, 1.5]);
        assert!((v - p * (1.0 - p) * 3.0 * -1.0).abs() < 1e-15);
        let r = [9.0_f64, 8.0, 7.0, 6.0];
        let u = [0.25; 4];
        let direct = dot(&r, &covariance_apply(&u, &r));
        assert!((pairwise_covariance_form(&u, &r, &r) - direct).abs() < 1e-12);
        assert_eq!(pairwise_covariance_form(&u, &[1.0; 4], &r), 0.0);
    }

    #[test]
    fn instance_validation() {
        let x = Matrix::<f64>::identity(2);
        assert!(ProblemInstance::new(x.clone(), vec![2.0, 0.0], 1.0, None).is_err());
        assert!(ProblemInstance::new(x.clone(), vec![0.5, 0.5], 1.0, None).is_ok());
        assert!(ProblemInstance::new_strict(x.clone(), vec![0.5, 0.5], 1.0, None).is_err());
        assert!(ProblemInstance::new(x.clone(), vec![-0.5, 0.5], 1.0, Some(NoiseFamily::Bernoulli)).is_err());
        let one = Matrix::from_rows(&[vec![1.0]]).unwrap();
        assert!(ProblemInstance::new(one, vec![0.3], 1.0, None).is_err());
        let wide = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(ProblemInstance::new(wide, vec![1.0, 0.0], 1.0, None).is_err());
    }

    #[test]
    fn derived_quantities() {
        let inst = example1();
        assert_eq!(inst.optimal_action(), 0);
        assert_eq!(inst.reward_gap(), 1.0);
        assert_eq!(inst.reward_order(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let x = Matrix::from_rows(&[vec![0.1, 1.0 / 3.0], vec![-2.5e-17, 7.0], vec![1e300, -0.3]]).unwrap();
        let inst = ProblemInstance::new(x, vec![0.1, 0.7, 0.30000000000000004], 1.0, Some(NoiseFamily::Beta { concentration: 3.0 }))
            .unwrap();
        let back: ProblemInstance<f64> = ProblemInstance::from_json(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
        for (a, b) in back.features().as_slice().iter().zip(inst.features().as_slice()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn noise_samples_stay_in_unit_interval_with_right_mean() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for fam in [
            NoiseFamily::Bernoulli,
            NoiseFamily::TruncatedGaussian { sigma: 0.3 },
            NoiseFamily::Beta { concentration: 4.0 },
        ] {
            for mean in [0.0, 0.2, 0.5, 0.9, 1.0] {
                let n = 40_000;
                let (mut s, mut s2) = (0.0, 0.0);
                for _ in 0..n {
                    let x = fam.sample(mean, &mut rng);
                    assert!((0.0..=1.0).contains(&x));
                    s += x;
                    s2 += x * x;
                }
                let m = s / n as f64;
                assert!((m - mean).abs() < 0.01, "{fam:?} mean {mean}: {m}");
                let m2 = s2 / n as f64;
                assert!((m2 - fam.second_moment(mean)).abs() < 0.01, "{fam:?} E[R^2] at {mean}");
            }
        }
    }

    #[test]
    fn noise_names_parse() {
        assert_eq!("bernoulli".parse::<NoiseFamily>().unwrap(), NoiseFamily::Bernoulli);
        assert_eq!("gaussian".parse::<NoiseFamily>().unwrap(), NoiseFamily::TruncatedGaussian { sigma: 0.1 });
        assert_eq!("gaussian:0.3".parse::<NoiseFamily>().unwrap(), NoiseFamily::TruncatedGaussian { sigma: 0.3 });
        assert_eq!("Beta:4".parse::<NoiseFamily>().unwrap(), NoiseFamily::Beta { concentration: 4.0 });
        assert!("beta:-1".parse::<NoiseFamily>().is_err());
        assert!("bernoulli:2".parse::<NoiseFamily>().is_err());
        assert!("poisson".parse::<NoiseFamily>().is_err());
    }
}
