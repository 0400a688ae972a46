//! Recorded optimizer runs and their CSV/JSON exports.

use std::fmt::Write as _;

use serde::Serialize;

use crate::bandit::PolicyState;
use crate::scalar::Scalar;

/// Iterate recorded at a stride.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot<T> {
    /// 1-based iteration index of `theta_t`.
    pub iter: usize,
    pub theta: Vec<T>,
    pub policy: Vec<T>,
    pub expected_reward: T,
    /// Norm of the exact gradient at `theta_t`.
    pub grad_norm: T,
    /// Action sampled at this iteration (stochastic runs only).
    pub action: Option<usize>,
    pub reward: Option<T>,
}

/// Why a run stopped before its horizon.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Abort {
    /// Iteration of the last finite iterate kept as the final state.
    pub last_finite_iter: usize,
    pub reason: String,
}

/// Cumulative progress/noise split of logit differences for tracked pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Ledger<T> {
    pub pairs: Vec<(usize, usize)>,
    pub initial_diff: Vec<T>,
    /// Strided rows, one entry per pair in each vector.
    pub rows: Vec<LedgerRow<T>>,
    /// Largest `|z(a1) - z(a2) - (initial + progress + noise)|` over every
    /// step of the run, not only the recorded rows.
    pub max_reconstruction_error: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerRow<T> {
    pub iter: usize,
    pub progress_increment: Vec<T>,
    pub noise_increment: Vec<T>,
    pub progress_cum: Vec<T>,
    pub noise_cum: Vec<T>,
    pub logit_diff: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub optimal_action: usize,
    pub optimal_reward: T,
    /// `<pi_t, r>` for every iterate `t = 1..=T+1` (index `t - 1`).
    pub expected_rewards: Vec<T>,
    pub records: Vec<Snapshot<T>>,
    pub final_state: PolicyState<T>,
    pub abort: Option<Abort>,
    pub ledger: Option<Ledger<T>>,
    pub learning_rate: T,
    /// Smallest `pi_t(a*)` over every iterate.
    pub min_optimal_probability: T,
}

impl<T: Scalar> Trajectory<T> {
    pub fn is_complete(&self) -> bool {
        self.abort.is_none()
    }

    /// Number of updates actually applied.
    pub fn steps(&self) -> usize {
        self.expected_rewards.len().saturating_sub(1)
    }

    pub fn final_expected_reward(&self) -> T {
        *self.expected_rewards.last().expect("trajectory holds the initial iterate")
    }

    pub fn final_suboptimality(&self) -> T {
        self.optimal_reward - self.final_expected_reward()
    }

    /// `r(a*) - <pi_t, r>` for every iterate.
    pub fn suboptimality(&self) -> Vec<T> {
        self.expected_rewards.iter().map(|&v| self.optimal_reward - v).collect()
    }

    /// Mean suboptimality over the run.
    pub fn auc(&self) -> T {
        let n = T::from_usize(self.expected_rewards.len()).expect("length fits scalar");
        self.suboptimality().into_iter().sum::<T>() / n
    }

    pub fn final_argmax(&self) -> usize {
        self.final_state.argmax()
    }

    /// `iter,expected_reward,grad_norm,pi_max,pi_argmax`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,expected_reward,grad_norm,pi_max,pi_argmax\n");
        for s in &self.records {
            let am = crate::bandit::argmax(&s.policy);
            let _ = writeln!(out, "{},{},{},{},{}", s.iter, s.expected_reward, s.grad_norm, s.policy[am], am);
        }
        out
    }

    /// `iter,action,reward,expected_reward,pi_astar` for stochastic runs.
    pub fn step_log_csv(&self) -> String {
        let mut out = String::from("iter,action,reward,expected_reward,pi_astar\n");
        for s in &self.records {
            let action = s.action.map_or_else(String::new, |a| a.to_string());
            let reward = s.reward.map_or_else(String::new, |r| r.to_string());
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.iter, action, reward, s.expected_reward, s.policy[self.optimal_action]
            );
        }
        out
    }

    /// One `iter,progress_cum,noise_cum,logit_diff` table per tracked pair.
    pub fn ledger_csvs(&self) -> Vec<((usize, usize), String)> {
        let Some(ledger) = &self.ledger else { return Vec::new() };
        ledger
            .pairs
            .iter()
            .enumerate()
            .map(|(p, &pair)| {
                let mut out = String::from("iter,progress_cum,noise_cum,logit_diff\n");
                for row in &ledger.rows {
                    let _ = writeln!(
                        out,
                        "{},{},{},{}",
                        row.iter, row.progress_cum[p], row.noise_cum[p], row.logit_diff[p]
                    );
                }
                (pair, out)
            })
            .collect()
    }

    /// Full parameter dump of the recorded iterates.
    pub fn theta_json(&self) -> String {
        #[derive(Serialize)]
        struct Row {
            iter: usize,
            theta: Vec<f64>,
        }
        let rows: Vec<Row> = self
            .records
            .iter()
            .map(|s| Row { iter: s.iter, theta: s.theta.iter().map(|x| x.to_f64_lossy()).collect() })
            .collect();
        serde_json::to_string(&rows).expect("theta dump serializes")
    }
}
