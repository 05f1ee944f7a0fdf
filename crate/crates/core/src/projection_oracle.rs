//! Petrov–Galerkin projection of the heat model in modal coordinates.
//!
//! In the mode basis `A` acts as `diag(lambda_k)` and `B[p]` has coefficients
//! `c_k(p) = <1_con p, phi_k>`. The trial basis `V` has columns
//! `v_j = (sigma_j - A)^{-1} B[p_j]`. The test side is stored through Riesz
//! representers `w_i = (rho_i - A)^{-*} C^*[q_i]`, with coefficients
//! `d_k(q_i) / (conj(rho_i) - lambda_k)`; the pairing row is `conj(w_i)^T`,
//! so `E_r = W^H V` and `A_r = W^H diag(lambda) V`. This is the only place
//! those conjugations appear.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{MorError, Result};
use crate::funcspace::FunctionVector;
use crate::heat2d::FullModel;
use crate::linalg::{self, CMatrix, CVector};
use crate::rom::{Provenance, ReducedModel};

/// `sigma_min / sigma_max` of the normalized columns below which a basis is rejected.
pub const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    Trial,
    Test,
}

/// `modes x r` coefficient matrix plus the data that generated it.
#[derive(Debug, Clone)]
pub struct ModalBasis {
    side: Side,
    points: Vec<Complex64>,
    coeffs: CMatrix,
    forcing: CMatrix,
}

impl ModalBasis {
    /// `V` from right data, without the rank check.
    pub fn trial(model: &FullModel, sigmas: &[Complex64], ps: &[FunctionVector]) -> Result<Self> {
        check_len(sigmas.len(), ps.len())?;
        let n = model.mode_count();
        let mut coeffs = CMatrix::zeros(n, sigmas.len());
        let mut forcing = CMatrix::zeros(n, sigmas.len());
        for (j, (&sigma, p)) in sigmas.iter().zip(ps).enumerate() {
            model.check_resolvent(sigma)?;
            let c = model.input_coefficients(p)?;
            for (k, (&ck, &l)) in c.iter().zip(model.eigenvalues()).enumerate() {
                forcing[(k, j)] = ck;
                coeffs[(k, j)] = ck / (sigma - l);
            }
        }
        Ok(ModalBasis { side: Side::Trial, points: sigmas.to_vec(), coeffs, forcing })
    }

    /// Representer coefficients of `W` from left data, without the rank check.
    pub fn test(model: &FullModel, rhos: &[Complex64], qs: &[FunctionVector]) -> Result<Self> {
        check_len(rhos.len(), qs.len())?;
        let n = model.mode_count();
        let mut coeffs = CMatrix::zeros(n, rhos.len());
        let mut forcing = CMatrix::zeros(n, rhos.len());
        for (i, (&rho, q)) in rhos.iter().zip(qs).enumerate() {
            model.check_resolvent(rho)?;
            let d = model.output_coefficients(q)?;
            for (k, (&dk, &l)) in d.iter().zip(model.eigenvalues()).enumerate() {
                forcing[(k, i)] = dk;
                coeffs[(k, i)] = dk / (rho.conj() - l);
            }
        }
        Ok(ModalBasis { side: Side::Test, points: rhos.to_vec(), coeffs, forcing })
    }

    /// Arbitrary basis (for example a random full-rank test space); no generating data.
    pub fn from_coefficients(side: Side, coeffs: CMatrix) -> Self {
        let r = coeffs.ncols();
        let n = coeffs.nrows();
        ModalBasis { side, points: vec![Complex64::new(0.0, 0.0); r], coeffs, forcing: CMatrix::zeros(n, r) }
    }

    /// Seeded uniform complex coefficients.
    pub fn random(side: Side, modes: usize, r: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let coeffs = CMatrix::from_fn(modes, r, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        Self::from_coefficients(side, coeffs)
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn r(&self) -> usize {
        self.coeffs.ncols()
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn coeffs(&self) -> &CMatrix {
        &self.coeffs
    }

    /// Copy with entry `(k, j)` shifted by `eps`.
    pub fn perturbed(&self, k: usize, j: usize, eps: Complex64) -> Self {
        let mut out = self.clone();
        out.coeffs[(k, j)] += eps;
        out
    }

    /// Errors when the normalized columns are numerically dependent; returns
    /// `sigma_min / sigma_max` otherwise.
    pub fn check_rank(&self) -> Result<f64> {
        let r = self.r();
        if r == 0 {
            return Ok(1.0);
        }
        let mut unit = self.coeffs.clone();
        for j in 0..r {
            let n = unit.column(j).norm();
            if n == 0.0 {
                return Err(MorError::RankDeficient(format!("{:?} basis column {j} is zero", self.side)));
            }
            unit.column_mut(j).unscale_mut(n);
        }
        let sv = linalg::singular_values(&unit);
        let max = sv.iter().cloned().fold(0.0, f64::max);
        let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
        let ratio = min / max;
        if !(ratio >= RANK_TOL) {
            let gram_det = (unit.adjoint() * &unit).determinant().re;
            return Err(MorError::RankDeficient(format!(
                "{:?} basis: sigma_min/sigma_max = {ratio:.3e}, Gram determinant {gram_det:.3e}",
                self.side
            )));
        }
        Ok(ratio)
    }
}

fn check_len(points: usize, dirs: usize) -> Result<()> {
    if points != dirs {
        return Err(MorError::Dimension(format!("{points} points but {dirs} directions")));
    }
    Ok(())
}

/// Rank-checked `(V, W)` from right and left data.
pub fn build_bases(
    model: &FullModel,
    sigmas: &[Complex64],
    ps: &[FunctionVector],
    rhos: &[Complex64],
    qs: &[FunctionVector],
) -> Result<(ModalBasis, ModalBasis)> {
    let v = ModalBasis::trial(model, sigmas, ps)?;
    let w = ModalBasis::test(model, rhos, qs)?;
    v.check_rank()?;
    w.check_rank()?;
    Ok((v, w))
}

/// `E_r = W^H V`, `A_r = W^H Lambda V`, `b_i = B^* w_i`, `c_j = C v_j`.
pub fn project_explicit(model: &FullModel, v: &ModalBasis, w: &ModalBasis) -> Result<ReducedModel> {
    if v.coeffs.nrows() != model.mode_count() || w.coeffs.nrows() != model.mode_count() {
        return Err(MorError::Dimension("basis length differs from the model's mode count".into()));
    }
    if v.r() != w.r() {
        return Err(MorError::Dimension(format!("trial basis has {} columns, test basis {}", v.r(), w.r())));
    }
    let lambda = CVector::from_iterator(model.mode_count(), model.eigenvalues().iter().map(|&l| Complex64::new(l, 0.0)));
    let wh = w.coeffs.adjoint();
    let e = &wh * &v.coeffs;
    let mut lv = v.coeffs.clone();
    for (k, l) in lambda.iter().enumerate() {
        lv.row_mut(k).scale_mut(l.re);
    }
    let a = &wh * lv;
    let b_rows = (0..w.r()).map(|i| model.synthesize_input(w.coeffs.column(i).as_slice())).collect();
    let c_cols = (0..v.r()).map(|j| model.synthesize_output(v.coeffs.column(j).as_slice())).collect();
    let mut prov = Provenance::new();
    prov.insert("method".into(), "projection".into());
    prov.insert("n_modes".into(), model.n_max().into());
    Ok(ReducedModel::new(e, a, b_rows, c_cols)?.with_provenance(prov))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residual {
    pub absolute: f64,
    pub relative: f64,
}

/// Frobenius residual of `V diag(sigma) - Lambda V - [B p_1 ... B p_r]` (trial side)
/// or `diag(rho) W - W Lambda - [C^* q_i]^H` (test side, `W` as pairing rows).
pub fn sylvester_residual(model: &FullModel, basis: &ModalBasis) -> Residual {
    let n = model.mode_count();
    let r = basis.r();
    let mut res = 0.0;
    let mut scale = 0.0;
    for j in 0..r {
        let z = basis.points[j];
        for k in 0..n {
            let l = model.eigenvalues()[k];
            let (entry, forcing) = match basis.side {
                Side::Trial => (basis.coeffs[(k, j)] * (z - l), basis.forcing[(k, j)]),
                Side::Test => (basis.coeffs[(k, j)].conj() * (z - l), basis.forcing[(k, j)].conj()),
            };
            res += (entry - forcing).norm_sqr();
            scale += forcing.norm_sqr();
        }
    }
    let absolute = res.sqrt();
    let relative = if scale > 0.0 { absolute / scale.sqrt() } else { absolute };
    Residual { absolute, relative }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProjectorReport {
    /// `max ||P^2 x - P x|| / ||P x||`
    pub idempotency: f64,
    /// `max ||P v_j - v_j|| / ||v_j||`
    pub range: f64,
    /// `max ||(id - P) v_j|| / ||v_j||`
    pub complement: f64,
}

impl ProjectorReport {
    pub fn max(&self) -> f64 {
        self.idempotency.max(self.range).max(self.complement)
    }
}

/// Applies `P(s) = V (s E_r - A_r)^{-1} W^H (s - Lambda)` to seeded random modal vectors.
pub fn projector_check(
    model: &FullModel,
    rom: &ReducedModel,
    v: &ModalBasis,
    w: &ModalBasis,
    s: Complex64,
    trials: usize,
    seed: u64,
) -> Result<ProjectorReport> {
    let n = model.mode_count();
    let pencil = rom.e().map(|z| z * s) - rom.a();
    let wh = w.coeffs.adjoint();
    let apply = |x: &CVector| -> Result<CVector> {
        let shifted = CVector::from_iterator(n, x.iter().zip(model.eigenvalues()).map(|(xk, &l)| xk * (s - l)));
        let y = linalg::solve_vec(&pencil, &(&wh * shifted)).ok_or(MorError::SingularPencil { s })?;
        Ok(&v.coeffs * y)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ProjectorReport { idempotency: 0.0, range: 0.0, complement: 0.0 };
    for _ in 0..trials {
        let x = CVector::from_fn(n, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let px = apply(&x)?;
        let ppx = apply(&px)?;
        report.idempotency = report.idempotency.max((&ppx - &px).norm() / px.norm());
    }
    for j in 0..v.r() {
        let col = v.coeffs.column(j).into_owned();
        let pv = apply(&col)?;
        report.range = report.range.max((&pv - &col).norm() / col.norm());
        let comp = &col - apply(&col)?;
        report.complement = report.complement.max(comp.norm() / col.norm());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{mode_patch_coefficient, restrict_mode};
    use crate::heat2d::HeatConfig;
    use crate::loewner;
    use crate::samples::{collect, DirectionSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn model(n: usize) -> FullModel {
        FullModel::new(&HeatConfig { quad_order: Some(20), ..HeatConfig::with_modes(n) }).unwrap()
    }

    fn dirs(m: &FullModel, modes: &[(usize, usize)]) -> (Vec<FunctionVector>, Vec<FunctionVector>) {
        let ps = modes.iter().map(|&(a, b)| DirectionSpec::Mode(a, b).realize(m.con_grid()).unwrap()).collect();
        let qs = modes.iter().map(|&(a, b)| DirectionSpec::Mode(a, b).realize(m.obs_grid()).unwrap()).collect();
        (ps, qs)
    }

    const SIGMAS: [Complex64; 4] = [c_(1.0, 0.0), c_(2.0, 0.0), c_(5.0, 1.0), c_(5.0, -1.0)];
    const RHOS: [Complex64; 4] = [c_(1.5, 0.0), c_(3.0, 0.0), c_(6.0, 2.0), c_(6.0, -2.0)];
    const MODES: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

    const fn c_(re: f64, im: f64) -> Complex64 {
        Complex64 { re, im }
    }

    fn rel(a: &FunctionVector, b: &FunctionVector) -> f64 {
        a.sub(b).unwrap().norm() / b.norm()
    }

    #[test]
    fn single_mode_basis_entry() {
        let m = model(1);
        let p = restrict_mode(1, 1, m.con_grid()).unwrap();
        let v = ModalBasis::trial(&m, &[c(0.0, 0.0)], &[p.clone()]).unwrap();
        let expect = mode_patch_coefficient(&p, 1, 1).unwrap() / (2.0 * std::f64::consts::PI.powi(2));
        assert!((v.coeffs()[(0, 0)] - expect).norm() < 1e-15);
        assert!(v.check_rank().is_ok());
    }

    #[test]
    fn single_mode_projection() {
        let m = model(1);
        let p = FunctionVector::random(m.con_grid(), 1);
        let q = FunctionVector::random(m.obs_grid(), 2);
        let (sigma, rho) = (c(1.0, 0.5), c(2.0, 0.0));
        let (v, w) = build_bases(&m, &[sigma], &[p.clone()], &[rho], &[q.clone()]).unwrap();
        let rom = project_explicit(&m, &v, &w).unwrap();
        let l = m.eigenvalues()[0];
        let phi = restrict_mode(1, 1, m.obs_grid()).unwrap();
        let expect = mode_patch_coefficient(&p, 1, 1).unwrap() * phi.inner(&q).unwrap() / ((sigma - l) * (rho - l));
        assert!((rom.e()[(0, 0)] - expect).norm() < 1e-15 * expect.norm().max(1e-300) * 10.0);
    }

    #[test]
    fn duplicate_pair_is_rank_deficient() {
        let m = model(4);
        let (ps, qs) = dirs(&m, &[(1, 1), (1, 1)]);
        let err = build_bases(&m, &[c(1.0, 0.0), c(1.0, 0.0)], &ps, &[c(2.0, 0.0), c(3.0, 0.0)], &qs).unwrap_err();
        assert!(matches!(err, MorError::RankDeficient(_)));
        assert!(err.to_string().contains("Gram determinant"));
    }

    #[test]
    fn zero_direction_gives_zero_column() {
        let m = model(4);
        let (mut ps, qs) = dirs(&m, &MODES[..2]);
        ps[1] = FunctionVector::zeros(m.con_grid());
        let v = ModalBasis::trial(&m, &SIGMAS[..2], &ps).unwrap();
        assert!(v.check_rank().is_err());
        let w = ModalBasis::test(&m, &RHOS[..2], &qs).unwrap();
        let rom = project_explicit(&m, &v, &w).unwrap();
        for i in 0..2 {
            assert_eq!(rom.e()[(i, 1)], c(0.0, 0.0));
            assert_eq!(rom.a()[(i, 1)], c(0.0, 0.0));
        }
        assert!(rom.c_cols()[1].is_zero());
    }

    #[test]
    fn agrees_with_loewner_assembly() {
        let m = model(8);
        let (ps, qs) = dirs(&m, &MODES);
        for rhos in [RHOS, [c(1.0, 0.0), RHOS[1], RHOS[2], RHOS[3]]] {
            let d = collect(&m, &SIGMAS, &ps, &rhos, &qs).unwrap();
            let lw = loewner::assemble(&d).unwrap();
            let (v, w) = build_bases(&m, &SIGMAS, &ps, &rhos, &qs).unwrap();
            let pj = project_explicit(&m, &v, &w).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    let (a, b) = (lw.e()[(i, j)], pj.e()[(i, j)]);
                    assert!((a - b).norm() <= 1e-10 * b.norm(), "E[{i},{j}] {a} vs {b}");
                    let (a, b) = (lw.a()[(i, j)], pj.a()[(i, j)]);
                    assert!((a - b).norm() <= 1e-10 * b.norm(), "A[{i},{j}] {a} vs {b}");
                }
                assert!(rel(&lw.b_rows()[i], &pj.b_rows()[i]) < 1e-10);
                assert!(rel(&lw.c_cols()[i], &pj.c_cols()[i]) < 1e-10);
            }
        }
    }

    #[test]
    fn sylvester_exact_and_perturbed() {
        let m = model(8);
        let (ps, qs) = dirs(&m, &MODES);
        let (v, w) = build_bases(&m, &SIGMAS, &ps, &RHOS, &qs).unwrap();
        assert!(sylvester_residual(&m, &v).relative < 1e-11);
        assert!(sylvester_residual(&m, &w).relative < 1e-11);
        let (k, j) = (5, 2);
        let gain = (SIGMAS[j] - m.eigenvalues()[k]).norm();
        let r6 = sylvester_residual(&m, &v.perturbed(k, j, c(1e-6, 0.0))).absolute;
        let r4 = sylvester_residual(&m, &v.perturbed(k, j, c(1e-4, 0.0))).absolute;
        assert!((r6 / (1e-6 * gain) - 1.0).abs() < 0.1);
        assert!((r4 / (1e-4 * gain) - 1.0).abs() < 0.1);
        let empty = ModalBasis::trial(&m, &[], &[]).unwrap();
        assert_eq!(sylvester_residual(&m, &empty).absolute, 0.0);
    }

    #[test]
    fn projector_properties() {
        let m = model(8);
        let (ps, qs) = dirs(&m, &MODES);
        let (v, w) = build_bases(&m, &SIGMAS, &ps, &RHOS, &qs).unwrap();
        let rom = project_explicit(&m, &v, &w).unwrap();
        for s in [c(0.5, 0.0), c(3.0, 7.0)] {
            let rep = projector_check(&m, &rom, &v, &w, s, 20, 1).unwrap();
            assert!(rep.max() < 1e-9, "{rep:?}");
        }
    }

    #[test]
    fn right_interpolation_with_arbitrary_test_space() {
        let m = model(8);
        let (ps, _) = dirs(&m, &MODES);
        let v = ModalBasis::trial(&m, &SIGMAS, &ps).unwrap();
        let w = ModalBasis::random(Side::Test, m.mode_count(), 4, 3);
        let rom = project_explicit(&m, &v, &w).unwrap();
        for (s, p) in SIGMAS.iter().zip(&ps) {
            assert!(rel(&rom.eval_tf(*s, p).unwrap(), &m.apply_tf(*s, p).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn left_interpolation_with_arbitrary_trial_space() {
        let m = model(8);
        let (_, qs) = dirs(&m, &MODES);
        let w = ModalBasis::test(&m, &RHOS, &qs).unwrap();
        let v = ModalBasis::random(Side::Trial, m.mode_count(), 4, 4);
        let rom = project_explicit(&m, &v, &w).unwrap();
        for (s, q) in RHOS.iter().zip(&qs) {
            assert!(rel(&rom.eval_tf_adjoint(*s, q).unwrap(), &m.apply_tf_adjoint(*s, q).unwrap()) < 1e-8);
        }
    }

    #[test]
    fn hermite_interpolation_at_shared_points() {
        let m = model(8);
        let (ps, qs) = dirs(&m, &MODES);
        let (v, w) = build_bases(&m, &SIGMAS, &ps, &SIGMAS, &qs).unwrap();
        let rom = project_explicit(&m, &v, &w).unwrap();
        for k in 0..4 {
            let full = m.apply_tf_derivative(SIGMAS[k], &ps[k]).unwrap().inner(&qs[k]).unwrap();
            let red = rom.eval_tf_derivative(SIGMAS[k], &ps[k]).unwrap().inner(&qs[k]).unwrap();
            assert!((full - red).norm() / full.norm() < 1e-8);
        }
    }
}
