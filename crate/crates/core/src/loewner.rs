//! Loewner pencil from tangential data alone.
//!
//! With `u_ij = <p_j, G(rho_i)^dagger[q_i]>` and `y_ij = <G(sigma_j)[p_j], q_i>`:
//!
//! ```text
//! E_ij = -(u_ij - y_ij) / (rho_i - sigma_j)
//! A_ij = -(rho_i u_ij - sigma_j y_ij) / (rho_i - sigma_j)
//! ```
//!
//! and for a coincident pair with Hermite scalar `h_ij = <dG/ds(sigma_j)[p_j], q_i>`,
//! `E_ij = -h_ij`, `A_ij = -(y_ij + sigma_j h_ij)`. Rows of `B_r` are represented by
//! the left samples, columns of `C_r` are the right samples.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{MorError, Result};
use crate::linalg::{self, CMatrix};
use crate::rom::{Provenance, ReducedModel};
use crate::samples::TangentialDataset;

/// Condition estimate of `E_r` above which assembly fails.
pub const CONDITION_REJECT: f64 = 1e12;

/// Condition estimate of `E_r` above which assembly warns.
pub const CONDITION_WARN: f64 = 1e8;

/// `(E_r, A_r)` from the dataset without any conditioning check.
pub fn loewner_matrices(data: &TangentialDataset) -> Result<(CMatrix, CMatrix)> {
    let r = data.r();
    let mut e = CMatrix::zeros(r, r);
    let mut a = CMatrix::zeros(r, r);
    for (i, left) in data.lefts().iter().enumerate() {
        for (j, right) in data.rights().iter().enumerate() {
            let y = right.value.inner(&left.q)?;
            let (rho, sigma) = (left.rho, right.sigma);
            if data.is_coincident(i, j) {
                let h = data.hermite(i, j).ok_or_else(|| {
                    MorError::Data(format!("no Hermite sample for coincident pair ({i}, {j})"))
                })?;
                e[(i, j)] = -h;
                a[(i, j)] = -(y + sigma * h);
            } else {
                let u = right.p.inner(&left.value)?;
                e[(i, j)] = -(u - y) / (rho - sigma);
                a[(i, j)] = -(rho * u - sigma * y) / (rho - sigma);
            }
        }
    }
    Ok((e, a))
}

/// Builds the interpolating reduced model.
pub fn assemble(data: &TangentialDataset) -> Result<ReducedModel> {
    let (e, a) = loewner_matrices(data)?;
    let cond = linalg::condition_number(&e);
    if !(cond <= CONDITION_REJECT) {
        return Err(MorError::Conditioning { estimate: cond });
    }
    if cond > CONDITION_WARN {
        log::warn!("E_r condition estimate {cond:.3e} exceeds {CONDITION_WARN:.0e}");
    }
    let b_rows = data.lefts().iter().map(|l| l.value.clone()).collect();
    let c_cols = data.rights().iter().map(|r| r.value.clone()).collect();
    let mut prov = Provenance::new();
    prov.insert("method".into(), "loewner".into());
    prov.insert("dataset_sha256".into(), data.hash()?.into());
    prov.insert("coincidence_tol".into(), data.coincidence_tol().into());
    prov.insert("condition_reject".into(), CONDITION_REJECT.into());
    prov.insert("e_condition".into(), cond.into());
    Ok(ReducedModel::new(e, a, b_rows, c_cols)?.with_provenance(prov))
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub e_condition: f64,
    pub min_separation: f64,
    /// `det` of the Gram matrix of the normalized right directions.
    pub right_gram_det: f64,
    pub left_gram_det: f64,
    pub near_singular: bool,
}

fn normalized_gram_det(fs: &[crate::funcspace::FunctionVector]) -> Result<f64> {
    let unit = fs.iter().map(|f| f.normalized()).collect::<Result<Vec<_>>>()?;
    Ok(crate::rom::gram(&unit)?.determinant().re)
}

/// Diagnostics for the pencil the dataset would produce.
pub fn condition_report(data: &TangentialDataset) -> Result<ConditionReport> {
    let (e, _) = loewner_matrices(data)?;
    let e_condition = linalg::condition_number(&e);
    Ok(ConditionReport {
        e_condition,
        min_separation: data.min_separation(),
        right_gram_det: normalized_gram_det(&data.right_dirs())?,
        left_gram_det: normalized_gram_det(&data.left_dirs())?,
        near_singular: !(e_condition <= CONDITION_WARN),
    })
}

/// `y_ij = <G(sigma_j)[p_j], q_i>`, the right-sample pairing matrix.
pub fn y_matrix(data: &TangentialDataset) -> Result<CMatrix> {
    let r = data.r();
    let mut y = CMatrix::zeros(r, r);
    for (i, left) in data.lefts().iter().enumerate() {
        for (j, right) in data.rights().iter().enumerate() {
            y[(i, j)] = right.value.inner(&left.q)?;
        }
    }
    Ok(y)
}

/// `u_ij = <p_j, G(rho_i)^dagger[q_i]>`, the left-sample pairing matrix.
pub fn u_matrix(data: &TangentialDataset) -> Result<CMatrix> {
    let r = data.r();
    let mut u = CMatrix::zeros(r, r);
    for (i, left) in data.lefts().iter().enumerate() {
        for (j, right) in data.rights().iter().enumerate() {
            u[(i, j)] = right.p.inner(&left.value)?;
        }
    }
    Ok(u)
}

pub fn diag(z: &[Complex64]) -> CMatrix {
    CMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(z))
}
