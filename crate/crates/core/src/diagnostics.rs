//! Checks of the convergence theory on concrete states and finished runs.

use serde::Serialize;

use crate::bandit::{
    exact_gradient, expected_reward, logit_gradient, make_policy, NoiseFamily, PolicyState,
    ProblemInstance,
};
use crate::condition::constants;
use crate::error::{Error, Result};
use crate::scalar::{dot, norm2};
use crate::stochastic::{expected_next_reward, stochastic_direction};
use crate::trajectory::Trajectory;

/// Tolerance below which a drop in expected reward counts as a violation.
pub const MONOTONICITY_TOLERANCE: f64 = 1e-12;
/// Floor applied to suboptimalities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonotonicityAudit {
    pub violations: usize,
    /// Largest drop `<pi_t, r> - <pi_{t+1}, r>` seen (0 if none).
    pub worst_drop: f64,
}

/// Counts steps with `<pi_{t+1}, r> <= <pi_t, r> - 1e-12`.
pub fn audit_monotonicity(traj: &Trajectory<f64>) -> MonotonicityAudit {
    let mut violations = 0;
    let mut worst_drop: f64 = 0.0;
    for w in traj.expected_rewards.windows(2) {
        let drop = w[0] - w[1];
        worst_drop = worst_drop.max(drop);
        if w[1] <= w[0] - MONOTONICITY_TOLERANCE {
            violations += 1;
        }
    }
    MonotonicityAudit { violations, worst_drop }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RateModel {
    /// `c / T`
    InverseT,
    /// `c ln T / T`
    LogTOverT,
}

impl RateModel {
    fn shape(self, t: f64) -> f64 {
        match self {
            RateModel::InverseT => 1.0 / t,
            RateModel::LogTOverT => t.ln() / t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    pub fitted_c: f64,
    /// Root-mean-square residual of the fit in log space.
    pub residual: f64,
    /// Inclusive 1-based iteration range used.
    pub window: (usize, usize),
}

/// Fits `log s_t = log c + log g(t)` over the last half of `series`, where
/// `series[i]` belongs to iteration `i + 1`.
pub fn fit_rate(series: &[f64], model: RateModel) -> Result<RateFit> {
    let n = series.len();
    if n < 4 {
        return Err(Error::InvalidConfig(format!("need at least 4 points to fit a rate, got {n}")));
    }
    let start = (n / 2).max(2);
    let logs: Vec<(f64, f64)> = (start..=n)
        .map(|t| {
            let s = series[t - 1].max(LOG_FLOOR);
            (s.ln(), model.shape(t as f64).ln())
        })
        .collect();
    let m = logs.len() as f64;
    let log_c = logs.iter().map(|(ls, lg)| ls - lg).sum::<f64>() / m;
    let residual = (logs.iter().map(|(ls, lg)| (ls - lg - log_c).powi(2)).sum::<f64>() / m).sqrt();
    Ok(RateFit { model, fitted_c: log_c.exp(), residual, window: (start, n) })
}

/// Running average `(1/t) sum_{s<=t} series[s]`.
pub fn running_average(series: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            total += v;
            total / (i + 1) as f64
        })
        .collect()
}

/// Rate fit of the running-average suboptimality.
pub fn fit_average_rate(series: &[f64], model: RateModel) -> Result<RateFit> {
    fit_rate(&running_average(series), model)
}

/// The model with the smaller log-space residual.
pub fn select_rate_model(series: &[f64]) -> Result<RateFit> {
    let a = fit_rate(series, RateModel::InverseT)?;
    let b = fit_rate(series, RateModel::LogTOverT)?;
    Ok(if b.residual < a.residual { b } else { a })
}

/// Median of pairwise slopes. At most `MAX_POINTS` evenly spaced points
/// are used.
pub fn theil_sen_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    const MAX_POINTS: usize = 400;
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Shape(format!("need two equal-length series of length >= 2, got {} and {}", xs.len(), ys.len())));
    }
    let n = xs.len();
    let step = n.div_ceil(MAX_POINTS).max(1);
    let idx: Vec<usize> = (0..n).step_by(step).collect();
    let mut slopes = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (p, &i) in idx.iter().enumerate() {
        for &j in &idx[p + 1..] {
            let dx = xs[j] - xs[i];
            if dx != 0.0 {
                slopes.push((ys[j] - ys[i]) / dx);
            }
        }
    }
    if slopes.is_empty() {
        return Err(Error::InvalidConfig("all abscissae coincide".into()));
    }
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    Ok(if m % 2 == 1 { slopes[m / 2] } else { 0.5 * (slopes[m / 2 - 1] + slopes[m / 2]) })
}

/// `2 R_max [(K-1)/C ln(C T + e^C) + pi^2 (K-1)/(6C)] / (T - tau)`.
pub fn evaluate_theorem6_bound(k: usize, c: f64, t: f64, tau: f64, r_max: f64) -> Result<f64> {
    if !(c > 0.0) || !(t > tau) || k < 2 {
        return Err(Error::InvalidConfig(format!("need C > 0, T > tau and K >= 2 (C={c}, T={t}, tau={tau}, K={k})")));
    }
    let km1 = (k - 1) as f64;
    let pi2 = std::f64::consts::PI * std::f64::consts::PI;
    Ok(2.0 * r_max * (km1 / c * (c * t + c.exp()).ln() + pi2 * km1 / (6.0 * c)) / (t - tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `||H(pi) r|| >= pi(a*) (r(a*) - <pi, r>)`, up to `1e-12`.
pub fn check_lojasiewicz(instance: &ProblemInstance<f64>, state: &PolicyState<f64>) -> InequalityCheck {
    let lhs = norm2(&logit_gradient(instance, state));
    let a_star = instance.optimal_action();
    let rhs = state.policy[a_star] * (instance.optimal_reward() - expected_reward(instance, state));
    InequalityCheck { lhs, rhs, holds: lhs >= rhs - 1e-12 }
}

/// Reward outcomes with probabilities for exact expectations.
fn outcomes(noise: Option<NoiseFamily>, mean: f64) -> Vec<(f64, f64)> {
    match noise {
        Some(NoiseFamily::Bernoulli) => vec![(1.0, mean), (0.0, 1.0 - mean)],
        _ => vec![(mean, 1.0)],
    }
}

/// `E ||X^T H(pi) r_hat||^2`, exact.
///
/// The direction is linear in the realized reward, so each action
/// contributes `pi(a) E[R^2 | a] ||direction(a, R = 1)||^2`. Bernoulli
/// rewards are additionally enumerated outcome by outcome.
pub fn stochastic_second_moment(instance: &ProblemInstance<f64>, state: &PolicyState<f64>) -> Result<f64> {
    let mut total = 0.0;
    for a in 0..instance.num_actions() {
        let pa = state.policy[a];
        if pa <= 0.0 {
            continue;
        }
        let mean = instance.rewards()[a];
        match instance.noise() {
            Some(NoiseFamily::Bernoulli) | None => {
                for (reward, prob) in outcomes(instance.noise(), mean) {
                    let dir = stochastic_direction(instance, state, a, reward)?;
                    total += pa * prob * dot(&dir, &dir);
                }
            }
            Some(noise) => {
                let dir = stochastic_direction(instance, state, a, 1.0)?;
                total += pa * noise.second_moment(mean) * dot(&dir, &dir);
            }
        }
    }
    Ok(total)
}

/// Strong growth: `E ||g_hat||^2 <= rho lambda_max ||H(pi) r|| + 1e-9`.
pub fn check_strong_growth(instance: &ProblemInstance<f64>, state: &PolicyState<f64>) -> Result<InequalityCheck> {
    let c = constants(instance)?;
    let lhs = stochastic_second_moment(instance, state)?;
    let rhs = c.sgc_rho * c.lambda_max * norm2(&logit_gradient(instance, state));
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// Largest `||X^T H(pi) r_hat||^2` over every realizable `(action, reward)`
/// against `2 lambda_max R_max^2`.
pub fn check_bounded_gradient(instance: &ProblemInstance<f64>, state: &PolicyState<f64>) -> Result<InequalityCheck> {
    let c = constants(instance)?;
    let mut worst: f64 = 0.0;
    for a in 0..instance.num_actions() {
        if state.policy[a] <= 0.0 {
            continue;
        }
        let extremes: Vec<f64> = match instance.noise() {
            None => vec![instance.rewards()[a]],
            Some(_) => vec![0.0, 1.0],
        };
        for reward in extremes {
            let dir = stochastic_direction(instance, state, a, reward)?;
            worst = worst.max(dot(&dir, &dir));
        }
    }
    let rhs = 2.0 * c.lambda_max * c.r_max * c.r_max;
    Ok(InequalityCheck { lhs: worst, rhs, holds: worst <= rhs * (1.0 + 1e-12) })
}

/// One-step expected improvement at step size `eta` against
/// `||H(pi) r||^2 / (6 rho kappa^2) - 1e-9`.
pub fn check_expected_improvement(
    instance: &ProblemInstance<f64>,
    state: &PolicyState<f64>,
    eta: f64,
) -> Result<InequalityCheck> {
    let c = constants(instance)?;
    let lhs = expected_next_reward(instance, state, eta)? - expected_reward(instance, state);
    let g = norm2(&logit_gradient(instance, state));
    let rhs = g * g / (6.0 * c.sgc_rho * c.kappa * c.kappa);
    Ok(InequalityCheck { lhs, rhs, holds: lhs >= rhs - 1e-9 })
}

/// `|f(theta') - f(theta) - <grad f(theta), theta' - theta>| <= (L/2) ||theta' - theta||^2 + 1e-9`.
pub fn check_smoothness(instance: &ProblemInstance<f64>, theta: &[f64], theta_next: &[f64]) -> Result<InequalityCheck> {
    let c = constants(instance)?;
    let s0 = make_policy(instance, theta)?;
    let s1 = make_policy(instance, theta_next)?;
    let diff: Vec<f64> = theta_next.iter().zip(theta).map(|(a, b)| a - b).collect();
    let lin = dot(&exact_gradient(instance, &s0), &diff);
    let lhs = (expected_reward(instance, &s1) - expected_reward(instance, &s0) - lin).abs();
    let rhs = 0.5 * c.smoothness_l * dot(&diff, &diff);
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs + 1e-9 })
}

/// Second derivative of `<pi_theta, r>` along `u`, in closed form:
/// `E_pi[(v - E_pi v)^2 (r - E_pi r)]` with `v = X u`.
pub fn directional_curvature(instance: &ProblemInstance<f64>, state: &PolicyState<f64>, u: &[f64]) -> f64 {
    let v = instance.features().mul_vec(u);
    let vbar = dot(&state.policy, &v);
    let rbar = expected_reward(instance, state);
    state
        .policy
        .iter()
        .zip(&v)
        .zip(instance.rewards())
        .map(|((&p, &vi), &ri)| p * (vi - vbar).powi(2) * (ri - rbar))
        .sum()
}

/// Central second difference of `<pi_theta, r>` along `u` with step `h`.
pub fn directional_second_difference(instance: &ProblemInstance<f64>, theta: &[f64], u: &[f64], h: f64) -> Result<f64> {
    let at = |s: f64| -> Result<f64> {
        let th: Vec<f64> = theta.iter().zip(u).map(|(t, d)| t + s * d).collect();
        Ok(expected_reward(instance, &make_policy(instance, &th)?))
    };
    Ok((at(h)? - 2.0 * at(0.0)? + at(-h)?) / (h * h))
}

/// `|u^T hess f(theta) u| <= 3 lambda_max ||H(pi) r||` for a unit `u`.
pub fn check_nonuniform_smoothness(
    instance: &ProblemInstance<f64>,
    state: &PolicyState<f64>,
    u: &[f64],
) -> Result<InequalityCheck> {
    let c = constants(instance)?;
    let n = norm2(u);
    if !(n > 0.0) {
        return Err(Error::InvalidConfig("direction must be nonzero".into()));
    }
    let unit: Vec<f64> = u.iter().map(|x| x / n).collect();
    let lhs = directional_curvature(instance, state, &unit).abs();
    let rhs = 3.0 * c.lambda_max * norm2(&logit_gradient(instance, state));
    Ok(InequalityCheck { lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-9) + 1e-15 })
}

/// Plug-in `(min_t pi_t(a*))^2` over a realized run.
pub fn empirical_mu(traj: &Trajectory<f64>) -> f64 {
    traj.min_optimal_probability * traj.min_optimal_probability
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticSummary {
    pub steps: usize,
    pub learning_rate: f64,
    pub final_expected_reward: f64,
    pub final_suboptimality: f64,
    pub auc: f64,
    pub final_argmax: usize,
    pub optimal_action: usize,
    pub final_max_probability: f64,
    pub monotonicity: MonotonicityAudit,
    pub rate_fit: Option<RateFit>,
    pub average_rate_fit: Option<RateFit>,
    pub empirical_mu: f64,
    pub ledger_max_reconstruction_error: Option<f64>,
    pub aborted: Option<crate::trajectory::Abort>,
}

pub fn summarize(traj: &Trajectory<f64>) -> DiagnosticSummary {
    let sub = traj.suboptimality();
    DiagnosticSummary {
        steps: traj.steps(),
        learning_rate: traj.learning_rate,
        final_expected_reward: traj.final_expected_reward(),
        final_suboptimality: traj.final_suboptimality(),
        auc: traj.auc(),
        final_argmax: traj.final_argmax(),
        optimal_action: traj.optimal_action,
        final_max_probability: traj.final_state.max_probability(),
        monotonicity: audit_monotonicity(traj),
        rate_fit: select_rate_model(&sub).ok(),
        average_rate_fit: fit_average_rate(&sub, RateModel::LogTOverT).ok(),
        empirical_mu: empirical_mu(traj),
        ledger_max_reconstruction_error: traj.ledger.as_ref().map(|l| l.max_reconstruction_error),
        aborted: traj.abort.clone(),
    }
}
