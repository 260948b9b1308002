//! Small dense linear algebra.
//!
//! The generic routines run over any [`Scalar`] (floats or jets) and are
//! meant for the `n ≤ 4` matrices of the geometry code. The float-only
//! routines for rank estimation are backed by nalgebra's SVD.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::scalar::Scalar;

pub type Matrix<S> = Vec<Vec<S>>;

/// Inverse by Gauss–Jordan elimination with partial pivoting on the leading
/// real values. Returns `None` when a pivot falls below `pivot_tol`.
pub fn invert<S: Scalar>(m: &[Vec<S>], pivot_tol: f64) -> Option<Matrix<S>> {
    let n = m.len();
    let mut a: Vec<Vec<S>> = m.to_vec();
    let mut inv: Vec<Vec<S>> =
        (0..n).map(|i| (0..n).map(|j| if i == j { S::one() } else { S::zero() }).collect()).collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].re().abs().total_cmp(&a[j][col].re().abs()))?;
        if a[piv][col].re().abs() <= pivot_tol {
            return None;
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let p = a[col][col].clone();
        let pinv = S::one() / p;
        for j in 0..n {
            a[col][j] = a[col][j].clone() * pinv.clone();
            inv[col][j] = inv[col][j].clone() * pinv.clone();
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = a[i][col].clone();
            if f.re() == 0.0 && f.is_zero() {
                continue;
            }
            for j in 0..n {
                let t = f.clone() * a[col][j].clone();
                a[i][j] -= t;
                let t = f.clone() * inv[col][j].clone();
                inv[i][j] -= t;
            }
        }
    }
    Some(inv)
}

/// `m · v`
pub fn mat_vec<S: Scalar>(m: &[Vec<S>], v: &[S]) -> Vec<S> {
    m.iter().map(|row| crate::scalar::dot(row, v)).collect()
}

pub fn to_dmatrix(m: &[Vec<f64>]) -> DMatrix<f64> {
    let r = m.len();
    let c = if r == 0 { 0 } else { m[0].len() };
    DMatrix::from_fn(r, c, |i, j| m[i][j])
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &[Vec<f64>]) -> f64 {
    let eig = SymmetricEigen::new(to_dmatrix(m));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Whether a symmetric matrix admits a Cholesky factorisation.
pub fn is_positive_definite(m: &[Vec<f64>]) -> bool {
    nalgebra::Cholesky::new(to_dmatrix(m)).is_some()
}

/// Singular values in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Numerical rank relative to the largest singular value.
pub fn numerical_rank(m: &DMatrix<f64>, tol: f64) -> (usize, Vec<f64>) {
    let sv = singular_values(m);
    let Some(&smax) = sv.first() else {
        return (0, sv);
    };
    if smax == 0.0 || !smax.is_finite() {
        return (0, sv);
    }
    let rank = sv.iter().filter(|&&s| s > tol * smax).count();
    (rank, sv)
}

/// Relative residual of projecting every column of `b` onto the column span
/// of `a` (truncated at relative tolerance `tol`): `max_j |b_j - P b_j| / max(|b_j|, scale)`.
pub fn projection_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> f64 {
    if b.ncols() == 0 {
        return 0.0;
    }
    let bscale = b.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if bscale == 0.0 {
        return 0.0;
    }
    if a.ncols() == 0 {
        return 1.0;
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len()).filter(|&i| svd.singular_values[i] > tol * smax).collect();
    let mut worst: f64 = 0.0;
    for col in b.column_iter() {
        let mut r: DVector<f64> = col.into_owned();
        for &k in &keep {
            let uk = u.column(k);
            let c = uk.dot(&r);
            r -= uk * c;
        }
        worst = worst.max(r.norm() / bscale);
    }
    worst
}
