//! Small dense complex linear algebra: guarded solves, condition estimates and
//! eigendecompositions for reduced pencils.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{MorError, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Pivot ratio `min |u_ii| / max |u_ii|` below which a solve is refused.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

/// Solves `M X = B` with full pivoting; `None` when `M` is numerically singular.
pub fn solve(m: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    if m.nrows() == 0 {
        return Some(CMatrix::zeros(0, b.ncols()));
    }
    let lu = m.clone().full_piv_lu();
    let u = lu.u();
    let diag: Vec<f64> = (0..u.nrows()).map(|i| u[(i, i)].norm()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min / max <= SINGULAR_PIVOT_RATIO {
        return None;
    }
    lu.solve(b)
}

pub fn solve_vec(m: &CMatrix, b: &CVector) -> Option<CVector> {
    let rhs = CMatrix::from_column_slice(b.len(), 1, b.as_slice());
    solve(m, &rhs).map(|x| x.column(0).into_owned())
}

pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone().svd(false, false).singular_values.iter().cloned().collect()
}

/// `sigma_max / sigma_min`; infinite when singular, 1 for an empty matrix.
pub fn condition_number(m: &CMatrix) -> f64 {
    let sv = singular_values(m);
    if sv.is_empty() {
        return 1.0;
    }
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn frobenius(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Eigenvalues and right eigenvectors of `M`, requiring pairwise separation
/// of at least `rel_sep` times the spectral radius.
///
/// Complex Schur form `M = Q T Q^*`, then back-substitution on `T`. Columns
/// of the returned matrix have unit norm.
pub fn eig_semisimple(m: &CMatrix, rel_sep: f64) -> Result<(Vec<Complex64>, CMatrix)> {
    let r = m.nrows();
    if r == 0 {
        return Ok((Vec::new(), CMatrix::zeros(0, 0)));
    }
    let schur = nalgebra::linalg::Schur::try_new(m.clone(), 1e-15, 10_000)
        .ok_or_else(|| MorError::Internal("Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let lambdas: Vec<Complex64> = (0..r).map(|i| t[(i, i)]).collect();
    let radius = lambdas.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let tol = rel_sep * radius.max(f64::MIN_POSITIVE);
    for i in 0..r {
        for j in i + 1..r {
            let gap = (lambdas[i] - lambdas[j]).norm();
            if gap < tol {
                return Err(MorError::SemiSimplicity(format!(
                    "eigenvalues {} and {} are separated by {gap:.3e} (tolerance {tol:.3e})",
                    lambdas[i], lambdas[j]
                )));
            }
        }
    }
    let mut y = CMatrix::zeros(r, r);
    for k in 0..r {
        y[(k, k)] = Complex64::new(1.0, 0.0);
        for i in (0..k).rev() {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in i + 1..=k {
                acc += t[(i, j)] * y[(j, k)];
            }
            y[(i, k)] = -acc / (t[(i, i)] - t[(k, k)]);
        }
    }
    let mut x = q * y;
    for k in 0..r {
        let n = x.column(k).norm();
        x.column_mut(k).unscale_mut(n);
    }
    Ok((lambdas, x))
}
