//! Small dense linear algebra: Gram matrices, Jacobi eigenvalues for the
//! symmetric case, and least-squares projection through the normal equations.
//!
//! Everything here is sized for bandit feature matrices (K up to a few dozen
//! rows, d up to ~16 columns), so the routines favour clarity and
//! determinism over blocking or pivoting tricks.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, dot, norm2, Scalar};

/// Numerical thresholds used across the crate, gathered in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Default absolute tolerance for equalities.
    pub absolute: f64,
    /// Jacobi stops once the off-diagonal Frobenius norm drops below this.
    pub jacobi_off_diagonal: f64,
    /// Largest |G - G^T| entry accepted as symmetric.
    pub symmetry_defect: f64,
    /// Smallest Gram eigenvalue accepted as full column rank.
    pub rank: f64,
    /// Two rewards closer than this count as tied.
    pub reward_tie: f64,
    /// Sign threshold for the inner products of the feature conditions.
    pub inner_product_sign: f64,
    /// Optimal LP margin that certifies an ordering witness.
    pub lp_margin: f64,
}

pub const TOLERANCES: Tolerances = Tolerances {
    absolute: 1e-10,
    jacobi_off_diagonal: 1e-12,
    symmetry_defect: 1e-9,
    rank: 1e-10,
    reward_tie: 1e-12,
    inner_product_sign: 1e-12,
    lp_margin: 1e-9,
};

const JACOBI_MAX_SWEEPS: usize = 100;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if !all_finite(&data) {
            return Err(Error::NonFinite("matrix entries"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Builds a matrix from its columns, which is how feature matrices are
    /// usually written down (one row of `X^T` per feature dimension).
    pub fn from_columns(columns: &[Vec<T>]) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Shape("ragged columns".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for c in columns {
                data.push(c[i]);
            }
        }
        Self::new(rows, cols, data)
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            data[i * n + i] = T::one();
        }
        Self { rows: n, cols: n, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for j in 0..self.cols {
            for i in 0..self.rows {
                data.push(self.get(i, j));
            }
        }
        Self { rows: self.cols, cols: self.rows, data }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| x * c).collect(),
        }
    }

    /// `A v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), v)).collect()
    }

    /// `A^T v`.
    pub fn tr_mul_vec(&self, v: &[T]) -> Vec<T> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &vi) in v.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(self.row(i)) {
                *o = *o + a * vi;
            }
        }
        out
    }

    /// Largest absolute difference between mirrored entries.
    pub fn symmetry_defect(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    fn frobenius(&self) -> T {
        norm2(&self.data)
    }
}

/// `X^T X`. Only the upper triangle is accumulated; the lower one is a copy,
/// so the result is bitwise symmetric.
pub fn gram<T: Scalar>(x: &Matrix<T>) -> Matrix<T> {
    let d = x.cols();
    let mut data = vec![T::zero(); d * d];
    for i in 0..d {
        for j in i..d {
            let s: T = (0..x.rows()).map(|a| x.get(a, i) * x.get(a, j)).sum();
            data[i * d + j] = s;
            data[j * d + i] = s;
        }
    }
    Matrix { rows: d, cols: d, data }
}

/// All eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending. Sweeps visit the upper triangle in row-major order.
pub fn sym_eigenvalues<T: Scalar>(g: &Matrix<T>) -> Result<Vec<T>> {
    if g.rows() != g.cols() {
        return Err(Error::Shape(format!("{}x{} is not square", g.rows(), g.cols())));
    }
    let defect = g.symmetry_defect();
    if defect > T::lit(TOLERANCES.symmetry_defect) {
        return Err(Error::NotSymmetric {
            defect: defect.to_f64_lossy(),
            tolerance: TOLERANCES.symmetry_defect,
        });
    }
    let n = g.rows();
    let mut a = g.clone();
    // Symmetrize so tiny accepted defects do not bias the rotations.
    for i in 0..n {
        for j in (i + 1)..n {
            let m = (a.get(i, j) + a.get(j, i)) / T::lit(2.0);
            a.data[i * n + j] = m;
            a.data[j * n + i] = m;
        }
    }
    // Absolute target from the contract, widened only when the scalar type
    // cannot resolve it relative to the matrix norm.
    let floor = T::epsilon() * T::lit(10.0) * g.frobenius();
    let target = T::lit(TOLERANCES.jacobi_off_diagonal).max(floor);

    for _ in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) < target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                rotate(&mut a, p, q);
            }
        }
    }
    let mut eig: Vec<T> = (0..n).map(|i| a.get(i, i)).collect();
    eig.sort_by(|x, y| x.partial_cmp(y).expect("finite eigenvalues"));
    Ok(eig)
}

/// Extreme eigenvalues `(lambda_min, lambda_max)` of a symmetric matrix.
pub fn sym_eigs<T: Scalar>(g: &Matrix<T>) -> Result<(T, T)> {
    let eig = sym_eigenvalues(g)?;
    match (eig.first(), eig.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(Error::Shape("empty matrix".into())),
    }
}

fn off_diagonal_norm<T: Scalar>(a: &Matrix<T>) -> T {
    let n = a.rows();
    let mut s = T::zero();
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s = s + a.get(i, j) * a.get(i, j);
            }
        }
    }
    s.sqrt()
}

/// One Jacobi rotation zeroing `a[p][q]` (Golub & Van Loan, Alg. 8.4.1).
fn rotate<T: Scalar>(a: &mut Matrix<T>, p: usize, q: usize) {
    let n = a.rows();
    let apq = a.get(p, q);
    if apq == T::zero() {
        return;
    }
    let two = T::lit(2.0);
    let tau = (a.get(q, q) - a.get(p, p)) / (two * apq);
    let t = if tau >= T::zero() {
        T::one() / (tau + (T::one() + tau * tau).sqrt())
    } else {
        -T::one() / (-tau + (T::one() + tau * tau).sqrt())
    };
    let c = T::one() / (T::one() + t * t).sqrt();
    let s = t * c;
    for k in 0..n {
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        a.data[k * n + p] = c * akp - s * akq;
        a.data[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = a.get(p, k);
        let aqk = a.get(q, k);
        a.data[p * n + k] = c * apk - s * aqk;
        a.data[q * n + k] = s * apk + c * aqk;
    }
}

/// Cholesky factor `L` with `G = L L^T`; fails on non-positive pivots.
fn cholesky<T: Scalar>(g: &Matrix<T>) -> Option<Matrix<T>> {
    let n = g.rows();
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g.get(i, j);
            for k in 0..j {
                s = s - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= T::zero() {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    Some(Matrix { rows: n, cols: n, data: l })
}

fn cholesky_solve<T: Scalar>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.rows();
    let mut y = vec![T::zero(); n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s = s - l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![T::zero(); n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s = s - l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Least-squares fit `w* = argmin ||X w - r||` and its residual norm.
pub fn least_squares_residual<T: Scalar>(x: &Matrix<T>, r: &[T]) -> Result<(Vec<T>, T)> {
    if r.len() != x.rows() {
        return Err(Error::Shape(format!(
            "reward vector has {} entries for {} rows",
            r.len(),
            x.rows()
        )));
    }
    let g = gram(x);
    let (lambda_min, _) = sym_eigs(&g)?;
    if lambda_min <= T::lit(TOLERANCES.rank) {
        return Err(Error::RankDeficient { lambda_min: lambda_min.to_f64_lossy() });
    }
    let l = cholesky(&g).ok_or(Error::RankDeficient { lambda_min: lambda_min.to_f64_lossy() })?;
    let w = cholesky_solve(&l, &x.tr_mul_vec(r));
    let fitted = x.mul_vec(&w);
    let resid: Vec<T> = fitted.iter().zip(r).map(|(&f, &y)| f - y).collect();
    Ok((w, norm2(&resid)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example1() -> Matrix<f64> {
        Matrix::from_columns(&[vec![0.0, -1.0, 0.0, 2.0], vec![-2.0, 0.0, 1.0, 0.0]]).unwrap()
    }

    fn example2() -> Matrix<f64> {
        Matrix::from_columns(&[vec![0.0, 0.0, -1.0, 2.0], vec![-2.0, 1.0, 0.0, 0.0]]).unwrap()
    }

    #[test]
    fn gram_of_registry_examples() {
        let five = Matrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(gram(&example1()), five);
        assert_eq!(gram(&example2()), five);
        assert_eq!(gram(&Matrix::<f64>::identity(4)), Matrix::identity(4));
    }

    #[test]
    fn eigen_extremes() {
        let g = Matrix::from_rows(&[vec![5.0, 0.0], vec![0.0, 5.0]]).unwrap();
        assert_eq!(sym_eigs(&g).unwrap(), (5.0, 5.0));
        let g = Matrix::from_rows(&[vec![2.0_f64, 1.0], vec![1.0, 2.0]]).unwrap();
        let (lo, hi) = sym_eigs(&g).unwrap();
        assert!((lo - 1.0).abs() < 1e-10 && (hi - 3.0).abs() < 1e-10);
        let (lo, hi) = sym_eigs(&Matrix::<f64>::identity(3)).unwrap();
        assert_eq!((lo, hi), (1.0, 1.0));
    }

    #[test]
    fn rejects_asymmetric_input() {
        let g = Matrix::from_rows(&[vec![1.0, 1e-6], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(sym_eigs(&g), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn residuals_of_registry_examples() {
        let r = [9.0, 8.0, 7.0, 6.0];
        let (_, e1) = least_squares_residual(&example1(), &r).unwrap();
        let (_, e2) = least_squares_residual(&example2(), &r).unwrap();
        assert!((e1 - 202.6f64.sqrt()).abs() < 1e-9, "{e1}");
        assert!((e2 - 205f64.sqrt()).abs() < 1e-9, "{e2}");
        let (_, e) = least_squares_residual(&Matrix::<f64>::identity(4), &r).unwrap();
        assert!(e.abs() < 1e-12);
    }

    #[test]
    fn rank_deficient_features_are_rejected() {
        let x = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]).unwrap();
        assert!(matches!(
            least_squares_residual(&x, &[1.0, 0.0, 0.0]),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        assert!(Matrix::<f64>::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Matrix::new(1, 1, vec![f64::NAN]).is_err());
        assert!(least_squares_residual(&example1(), &[1.0, 2.0]).is_err());
    }

    #[test]
    fn works_in_single_precision() {
        let g = Matrix::<f32>::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let (lo, hi) = sym_eigs(&g).unwrap();
        assert!((lo - 1.0).abs() < 1e-5 && (hi - 3.0).abs() < 1e-5);
    }
}
