//! Feature-condition certification and the problem constants derived from a
//! bandit instance.
//!
//! Four conditions are decided:
//!
//! * distinct mean rewards;
//! * reward-ordering preservation: some `w` makes `X w` sort the actions
//!   exactly like `r`. Decided by maximizing the margin `t` of the chain
//!   `<x_(i) - x_(i+1), w> >= t` over the box `||w||_inf <= 1`;
//! * the three-armed condition `<x_2 - x_3, x_1 - x_3> > 0`;
//! * the general triple condition on `<x_i - x_j, x_* - x_k>`.
//!
//! Actions are relabelled internally into descending-reward order; every
//! index reported back refers to the caller's original (0-based) labels.

use serde::{Deserialize, Serialize};

use crate::bandit::ProblemInstance;
use crate::error::{Error, Result};
use crate::linalg::{gram, least_squares_residual, sym_eigs, TOLERANCES};
use crate::lp::{maximize, LpOutcome, SimplexOptions};
use crate::scalar::{dot, Scalar};

/// Optimal margin of the ordering LP, with the maximizer when it certifies.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingMargin<T> {
    pub w: Vec<T>,
    pub margin: T,
}

impl<T: Scalar> OrderingMargin<T> {
    pub fn is_certificate(&self) -> bool {
        self.margin > T::lit(TOLERANCES.lp_margin)
    }
}

/// Theoretical constants of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub delta: f64,
    pub r_max: f64,
    /// Smoothness constant `9 R_max lambda_max / 2`.
    pub smoothness_l: f64,
    /// Strong-growth constant `8 R_max^3 K^{3/2} / delta^2`.
    pub sgc_rho: f64,
    /// Exclusive upper end of the exact-setting step-size interval.
    pub eta_exact_bound: f64,
    /// Largest admissible stochastic-setting step size.
    pub eta_stochastic_bound: f64,
}

/// Everything the analyzer can say about an instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub assumption1: bool,
    /// Certified ordering direction, present iff `margin` clears the threshold.
    pub ordering_witness: Option<Vec<f64>>,
    /// Optimal LP margin (reported even when no witness is certified).
    pub margin: Option<f64>,
    pub assumption2: bool,
    /// `<x_2 - x_3, x_1 - x_3>` in reward order, only for three actions.
    pub k3_condition_value: Option<f64>,
    pub assumption3: Option<bool>,
    pub assumption4: bool,
    /// First violating `(i, j, k)` in original 0-based action labels.
    pub assumption4_violation: Option<[usize; 3]>,
    pub eps_approx: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub kappa: f64,
    pub delta: f64,
    pub r_max: f64,
    pub smoothness_l: f64,
    /// `None` when rewards tie (the gap, hence rho, degenerates).
    pub sgc_rho: Option<f64>,
    pub eta_exact_bound: f64,
    pub eta_stochastic_bound: Option<f64>,
}

/// True iff all pairwise reward gaps exceed the tie tolerance.
pub fn check_assumption1<T: Scalar>(instance: &ProblemInstance<T>) -> bool {
    instance.reward_gap() > T::lit(TOLERANCES.reward_tie)
}

fn require_distinct<T: Scalar>(instance: &ProblemInstance<T>) -> Result<()> {
    if check_assumption1(instance) {
        Ok(())
    } else {
        Err(Error::InvalidInstance("requires pairwise distinct mean rewards".into()))
    }
}

/// Solves the margin LP and returns its optimum `(w, t*)` whether or not it
/// certifies ordering preservation.
pub fn ordering_margin<T: Scalar>(instance: &ProblemInstance<T>) -> Result<OrderingMargin<T>> {
    require_distinct(instance)?;
    let d = instance.dim();
    let order = instance.reward_order();
    let diffs: Vec<Vec<T>> = order
        .windows(2)
        .map(|p| {
            instance.feature(p[0]).iter().zip(instance.feature(p[1])).map(|(&a, &b)| a - b).collect()
        })
        .collect();

    // Variables: [w+ (d), w- (d), t]; all non-negative. The optimal margin is
    // never negative (w = 0 achieves 0), so t >= 0 loses nothing.
    let n = 2 * d + 1;
    let mut c = vec![T::zero(); n];
    c[2 * d] = T::one();
    let mut a = Vec::with_capacity(diffs.len() + 2 * d);
    let mut b = Vec::with_capacity(diffs.len() + 2 * d);
    for diff in &diffs {
        // t - <diff, w+ - w-> <= 0
        let mut row = vec![T::zero(); n];
        for j in 0..d {
            row[j] = -diff[j];
            row[d + j] = diff[j];
        }
        row[2 * d] = T::one();
        a.push(row);
        b.push(T::zero());
    }
    for j in 0..d {
        let mut up = vec![T::zero(); n];
        up[j] = T::one();
        up[d + j] = -T::one();
        a.push(up);
        b.push(T::one());
        let mut down = vec![T::zero(); n];
        down[j] = -T::one();
        down[d + j] = T::one();
        a.push(down);
        b.push(T::one());
    }
    match maximize(&c, &a, &b, &SimplexOptions::default())? {
        LpOutcome::Optimal { x, value } => {
            let w = (0..d).map(|j| x[j] - x[d + j]).collect();
            Ok(OrderingMargin { w, margin: value })
        }
        // The box keeps the LP bounded; reaching this means the pivots broke down.
        LpOutcome::Unbounded => Err(Error::LpIndeterminate { iterations: 0 }),
    }
}

/// Returns an order-preserving direction and its margin when one exists.
pub fn find_ordering_witness<T: Scalar>(instance: &ProblemInstance<T>) -> Result<Option<(Vec<T>, T)>> {
    let m = ordering_margin(instance)?;
    Ok(m.is_certificate().then_some((m.w, m.margin)))
}

/// Direct check that `X w` orders every pair of actions exactly like `r`.
pub fn preserves_reward_order<T: Scalar>(instance: &ProblemInstance<T>, w: &[T]) -> bool {
    let projected = instance.features().mul_vec(w);
    let r = instance.rewards();
    let k = r.len();
    (0..k).all(|i| {
        (0..k).all(|j| i == j || ((r[i] > r[j]) == (projected[i] > projected[j]) && projected[i] != projected[j]))
    })
}

/// `<x_2 - x_3, x_1 - x_3>` with actions labelled by descending reward.
pub fn check_assumption3<T: Scalar>(instance: &ProblemInstance<T>) -> Result<T> {
    if instance.num_actions() != 3 {
        return Err(Error::InvalidInstance(format!(
            "three-armed condition needs K = 3, got {}",
            instance.num_actions()
        )));
    }
    let o = instance.reward_order();
    let (x1, x2, x3) = (instance.feature(o[0]), instance.feature(o[1]), instance.feature(o[2]));
    let a: Vec<T> = x2.iter().zip(x3).map(|(&p, &q)| p - q).collect();
    let b: Vec<T> = x1.iter().zip(x3).map(|(&p, &q)| p - q).collect();
    Ok(dot(&a, &b))
}

/// Checks every reward-ordered triple; returns the first violation in
/// lexicographic order of reward ranks, mapped to original labels.
pub fn check_assumption4<T: Scalar>(instance: &ProblemInstance<T>) -> Result<(bool, Option<[usize; 3]>)> {
    require_distinct(instance)?;
    let order = instance.reward_order();
    let k = order.len();
    let tol = T::lit(TOLERANCES.inner_product_sign);
    let best = instance.feature(order[0]);
    for i in 0..k {
        for j in (i + 1)..k {
            for l in (i + 1)..k {
                let xi = instance.feature(order[i]);
                let xj = instance.feature(order[j]);
                let xl = instance.feature(order[l]);
                let value: T = (0..instance.dim()).map(|p| (xi[p] - xj[p]) * (best[p] - xl[p])).sum();
                let strict = i == 0 || j == l;
                let ok = if strict { value > tol } else { value >= -tol };
                if !ok {
                    return Ok((false, Some([order[i], order[j], order[l]])));
                }
            }
        }
    }
    Ok((true, None))
}

/// Derives every constant used by the step-size rules and bounds.
pub fn constants<T: Scalar>(instance: &ProblemInstance<T>) -> Result<Constants> {
    let (lambda_min, lambda_max) = sym_eigs(&gram(instance.features()))?;
    let (lambda_min, lambda_max) = (lambda_min.to_f64_lossy(), lambda_max.to_f64_lossy());
    if lambda_min <= 1e-12 {
        return Err(Error::RankDeficient { lambda_min });
    }
    let r_max = instance.reward_bound().to_f64_lossy();
    let delta = instance.reward_gap().to_f64_lossy();
    let k = instance.num_actions() as f64;
    let sgc_rho = 8.0 * r_max.powi(3) * k.powf(1.5) / (delta * delta);
    let eta_stochastic_bound = (1.0 / (6.0 * lambda_max.powf(1.5) * (2.0 * r_max).sqrt()))
        .min(lambda_min / (6.0 * sgc_rho * lambda_max * lambda_max));
    Ok(Constants {
        lambda_min,
        lambda_max,
        kappa: lambda_max / lambda_min,
        delta,
        r_max,
        smoothness_l: 9.0 * r_max * lambda_max / 2.0,
        sgc_rho,
        eta_exact_bound: 4.0 / (9.0 * r_max * lambda_max),
        eta_stochastic_bound,
    })
}

/// Runs every check and gathers the results.
pub fn analyze<T: Scalar>(instance: &ProblemInstance<T>) -> Result<ConditionReport> {
    let assumption1 = check_assumption1(instance);
    let c = constants(instance)?;
    let (_, eps) = least_squares_residual(instance.features(), instance.rewards())?;

    let (ordering_witness, margin, assumption4, assumption4_violation) = if assumption1 {
        let m = ordering_margin(instance)?;
        let certified = m.is_certificate();
        let (a4, viol) = check_assumption4(instance)?;
        let w = certified.then(|| m.w.iter().map(|x| x.to_f64_lossy()).collect());
        (w, Some(m.margin.to_f64_lossy()), a4, viol)
    } else {
        (None, None, false, None)
    };
    let k3 = if instance.num_actions() == 3 {
        Some(check_assumption3(instance)?.to_f64_lossy())
    } else {
        None
    };
    let tol = TOLERANCES.inner_product_sign;
    Ok(ConditionReport {
        k: instance.num_actions(),
        d: instance.dim(),
        assumption1,
        assumption2: ordering_witness.is_some(),
        ordering_witness,
        margin,
        k3_condition_value: k3,
        assumption3: k3.map(|v| v > tol),
        assumption4,
        assumption4_violation,
        eps_approx: eps.to_f64_lossy(),
        lambda_min: c.lambda_min,
        lambda_max: c.lambda_max,
        kappa: c.kappa,
        delta: c.delta,
        r_max: c.r_max,
        smoothness_l: c.smoothness_l,
        sgc_rho: assumption1.then_some(c.sgc_rho),
        eta_exact_bound: c.eta_exact_bound,
        eta_stochastic_bound: assumption1.then_some(c.eta_stochastic_bound),
    })
}

impl ConditionReport {
    /// Human-readable verdict table.
    pub fn verdict_table(&self) -> String {
        let pass = |b: bool| if b { "PASS" } else { "FAIL" };
        let mut out = String::new();
        out.push_str(&format!("K = {}, d = {}\n", self.k, self.d));
        out.push_str(&format!("Assumption 1 (distinct rewards):      {}\n", pass(self.assumption1)));
        match (&self.ordering_witness, self.margin) {
            (Some(w), Some(t)) => out.push_str(&format!(
                "Assumption 2 (ordering preservation): PASS  w = {w:?}, margin = {t:.6}\n"
            )),
            (None, Some(t)) => out.push_str(&format!(
                "Assumption 2 (ordering preservation): FAIL  optimal margin = {t:.3e}\n"
            )),
            _ => out.push_str("Assumption 2 (ordering preservation): FAIL  (rewards tie)\n"),
        }
        if let (Some(v), Some(ok)) = (self.k3_condition_value, self.assumption3) {
            out.push_str(&format!("Assumption 3 (K = 3 condition):       {}  value = {v}\n", pass(ok)));
        }
        match self.assumption4_violation {
            Some([i, j, k]) => out.push_str(&format!(
                "Assumption 4 (triple condition):      FAIL  first violation (i, j, k) = ({i}, {j}, {k})\n"
            )),
            None => out.push_str(&format!("Assumption 4 (triple condition):      {}\n", pass(self.assumption4))),
        }
        out.push_str(&format!("eps_approx = {:.6}\n", self.eps_approx));
        out.push_str(&format!(
            "lambda_min = {:.6}, lambda_max = {:.6}, kappa = {:.6}\n",
            self.lambda_min, self.lambda_max, self.kappa
        ));
        out.push_str(&format!("Delta = {}, R_max = {}, L = {:.6}\n", self.delta, self.r_max, self.smoothness_l));
        out.push_str(&format!("eta (exact) < {:.6e}\n", self.eta_exact_bound));
        match (self.sgc_rho, self.eta_stochastic_bound) {
            (Some(rho), Some(eta)) => out.push_str(&format!("rho = {rho:.6e}, eta (stochastic) <= {eta:.6e}\n")),
            _ => out.push_str("rho and stochastic step size undefined (rewards tie)\n"),
        }
        out
    }
}
