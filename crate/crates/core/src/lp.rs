//! Dense tableau simplex for `max c^T x  s.t.  A x <= b, x >= 0` with `b >= 0`.
//!
//! The all-slack basis is feasible whenever `b >= 0`, so no phase one is
//! needed. Bland's rule picks both the entering and the leaving variable,
//! which rules out cycling on the degenerate vertices the margin LP starts at.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome<T> {
    Optimal { x: Vec<T>, value: T },
    Unbounded,
}

pub struct SimplexOptions {
    pub max_pivots: usize,
    pub tolerance: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self { max_pivots: 10_000, tolerance: 1e-12 }
    }
}

/// Solves the LP; `a` is row-major with `b.len()` rows and `c.len()` columns.
pub fn maximize<T: Scalar>(c: &[T], a: &[Vec<T>], b: &[T], opts: &SimplexOptions) -> Result<LpOutcome<T>> {
    let n = c.len();
    let m = b.len();
    if a.len() != m || a.iter().any(|row| row.len() != n) {
        return Err(Error::Shape("LP constraint matrix does not match c and b".into()));
    }
    if b.iter().any(|&bi| bi < T::zero()) {
        return Err(Error::Unsupported("a non-negative right-hand side".into()));
    }
    let tol = T::lit(opts.tolerance);
    let width = n + m + 1;
    // Rows 0..m are constraints, row m is the objective (stores -c).
    let mut tab = vec![T::zero(); (m + 1) * width];
    for i in 0..m {
        tab[i * width..i * width + n].copy_from_slice(&a[i]);
        tab[i * width + n + i] = T::one();
        tab[i * width + width - 1] = b[i];
    }
    for j in 0..n {
        tab[m * width + j] = -c[j];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    for _ in 0..opts.max_pivots {
        let Some(enter) = (0..n + m).find(|&j| tab[m * width + j] < -tol) else {
            let mut x = vec![T::zero(); n];
            for (i, &bv) in basis.iter().enumerate() {
                if bv < n {
                    x[bv] = tab[i * width + width - 1];
                }
            }
            return Ok(LpOutcome::Optimal { x, value: tab[m * width + width - 1] });
        };
        let mut leave: Option<(usize, T)> = None;
        for i in 0..m {
            let coef = tab[i * width + enter];
            if coef > tol {
                let ratio = tab[i * width + width - 1] / coef;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((li, lr)) => {
                        if ratio < lr || (ratio == lr && basis[i] < basis[li]) {
                            Some((i, ratio))
                        } else {
                            Some((li, lr))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Ok(LpOutcome::Unbounded);
        };
        pivot(&mut tab, width, m, row, enter);
        basis[row] = enter;
    }
    Err(Error::LpIndeterminate { iterations: opts.max_pivots })
}

fn pivot<T: Scalar>(tab: &mut [T], width: usize, m: usize, row: usize, col: usize) {
    let p = tab[row * width + col];
    for j in 0..width {
        tab[row * width + j] = tab[row * width + j] / p;
    }
    for i in 0..=m {
        if i == row {
            continue;
        }
        let f = tab[i * width + col];
        if f != T::zero() {
            for j in 0..width {
                tab[i * width + j] = tab[i * width + j] - f * tab[row * width + j];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let out = maximize(
            &[3.0, 5.0],
            &[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 2.0]],
            &[4.0, 12.0, 18.0],
            &SimplexOptions::default(),
        )
        .unwrap();
        match out {
            LpOutcome::Optimal { x, value } => {
                assert!((value - 36.0f64).abs() < 1e-12);
                assert!((x[0] - 2.0f64).abs() < 1e-12 && (x[1] - 6.0f64).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn detects_unbounded() {
        let out = maximize(&[1.0, 0.0], &[vec![-1.0, 1.0]], &[1.0], &SimplexOptions::default()).unwrap();
        assert_eq!(out, LpOutcome::<f64>::Unbounded);
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let opts = SimplexOptions { max_pivots: 0, tolerance: 1e-12 };
        let err = maximize(&[1.0], &[vec![1.0]], &[1.0], &opts).unwrap_err();
        assert_eq!(err, Error::LpIndeterminate { iterations: 0 });
    }

    #[test]
    fn degenerate_start_terminates() {
        // Beale-style degenerate vertex at the origin.
        let out = maximize(
            &[0.75, -150.0, 0.02, -6.0],
            &[
                vec![0.25, -60.0, -0.04, 9.0],
                vec![0.5, -90.0, -0.02, 3.0],
                vec![0.0, 0.0, 1.0, 0.0],
            ],
            &[0.0, 0.0, 1.0],
            &SimplexOptions::default(),
        )
        .unwrap();
        match out {
            LpOutcome::Optimal { value, .. } => assert!((value - 0.05f64).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }
}
