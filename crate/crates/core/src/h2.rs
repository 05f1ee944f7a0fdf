//! H2 norms, inner products, errors and the tangential optimality residuals.
//!
//! `||G||^2 = (1/2 pi) int ||G(i w)||_HS^2 dw`. The imaginary axis is mapped to
//! `(-pi/2, pi/2)` by `w = c tan(theta)` and integrated with Gauss–Legendre in
//! `theta`; the scale `c` comes from [`TransferFunction::frequency_scale`].

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{MorError, Result};
use crate::funcspace::{gauss_legendre, FunctionVector};
use crate::rom::{PoleResidue, ReducedModel};
use crate::system::TransferFunction;

pub const DEFAULT_NODES: usize = 256;
pub const MAX_NODES: usize = 1 << 15;

/// Relative change between successive doublings accepted as converged.
pub const QUADRATURE_TOL: f64 = 1e-10;

/// Negative squared errors smaller than this (relative to the norms involved) are round-off.
pub const CLAMP_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FrequencyQuadrature {
    scale: f64,
    thetas: Vec<f64>,
    weights: Vec<f64>,
}

impl FrequencyQuadrature {
    pub fn new(scale: f64, nodes: usize) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(MorError::Domain(format!("frequency scale must be positive, got {scale}")));
        }
        if nodes < 64 {
            return Err(MorError::Domain(format!("frequency quadrature needs at least 64 nodes, got {nodes}")));
        }
        let (t, w) = gauss_legendre(nodes);
        let thetas = t.iter().map(|x| 0.5 * PI * x).collect();
        let weights = w.iter().map(|w| 0.5 * PI * w).collect();
        Ok(FrequencyQuadrature { scale, thetas, weights })
    }

    pub fn nodes(&self) -> usize {
        self.thetas.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.thetas.iter().map(|t| self.scale * t.tan()).collect()
    }

    /// `(1/2 pi) int f(w) dw`; nodes evaluate in parallel, the sum runs in node order.
    pub fn integrate<F>(&self, f: F) -> Result<Complex64>
    where
        F: Fn(f64) -> Result<Complex64> + Sync,
    {
        let terms = self
            .thetas
            .par_iter()
            .zip(&self.weights)
            .map(|(&t, &w)| {
                let sec = 1.0 / t.cos();
                Ok(f(self.scale * t.tan())? * (w * self.scale * sec * sec))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = Complex64::new(0.0, 0.0);
        for t in terms {
            acc += t;
        }
        Ok(acc / (2.0 * PI))
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureValue {
    pub value: Complex64,
    pub nodes: usize,
    pub converged: bool,
}

/// Doubles the node count from [`DEFAULT_NODES`] until the relative change drops below `tol`.
pub fn integrate_adaptive<F>(scale: f64, tol: f64, f: F) -> Result<QuadratureValue>
where
    F: Fn(f64) -> Result<Complex64> + Sync,
{
    let mut nodes = DEFAULT_NODES;
    let mut prev = FrequencyQuadrature::new(scale, nodes)?.integrate(&f)?;
    while nodes < MAX_NODES {
        nodes *= 2;
        let next = FrequencyQuadrature::new(scale, nodes)?.integrate(&f)?;
        if (next - prev).norm() <= tol * next.norm() || next.norm() == 0.0 {
            return Ok(QuadratureValue { value: next, nodes, converged: true });
        }
        prev = next;
    }
    log::warn!("frequency quadrature did not settle within {MAX_NODES} nodes");
    Ok(QuadratureValue { value: prev, nodes, converged: false })
}

pub fn hs_norm(sys: &dyn TransferFunction, s: Complex64) -> Result<f64> {
    Ok(sys.hs_norm_squared(s)?.sqrt())
}

/// `||G(i w)||_HS` at each frequency, for plotting.
pub fn hs_profile(sys: &dyn TransferFunction, omegas: &[f64]) -> Result<Vec<f64>> {
    omegas.par_iter().map(|&w| hs_norm(sys, Complex64::new(0.0, w))).collect()
}

pub fn h2_norm_squared_quadrature(sys: &dyn TransferFunction) -> Result<QuadratureValue> {
    integrate_adaptive(sys.frequency_scale(), QUADRATURE_TOL, |w| {
        Ok(Complex64::new(sys.hs_norm_squared(Complex64::new(0.0, w))?, 0.0))
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct H2Norm {
    pub quadrature: f64,
    pub closed: f64,
    pub nodes: usize,
    pub relative_difference: f64,
}

/// Both the closed form and the quadrature value of `||G||_H2`.
pub fn h2_norm(sys: &dyn TransferFunction) -> Result<H2Norm> {
    let closed = sys.h2_norm_squared_closed()?.max(0.0).sqrt();
    let q = h2_norm_squared_quadrature(sys)?;
    let quadrature = q.value.re.max(0.0).sqrt();
    Ok(H2Norm {
        quadrature,
        closed,
        nodes: q.nodes,
        relative_difference: (quadrature - closed).abs() / closed.max(f64::MIN_POSITIVE),
    })
}

fn check_stable_pole(lambda: Complex64) -> Result<()> {
    if !(lambda.re < 0.0) {
        return Err(MorError::Domain(format!("rank-1 pole must lie in the open left half-plane, got {lambda}")));
    }
    Ok(())
}

/// `<F, G>_H2 = <q, G(-conj(lambda))[p]>` for `F = <., p> q / (s - lambda)`.
pub fn h2_inner_rank1(sys: &dyn TransferFunction, lambda: Complex64, p: &FunctionVector, q: &FunctionVector) -> Result<Complex64> {
    check_stable_pole(lambda)?;
    q.inner(&sys.apply(-lambda.conj(), p)?)
}

/// The same inner product by frequency quadrature of `<q, G(i w)[p]> / (i w - lambda)`.
pub fn h2_inner_rank1_quadrature(
    sys: &dyn TransferFunction,
    lambda: Complex64,
    p: &FunctionVector,
    q: &FunctionVector,
) -> Result<QuadratureValue> {
    check_stable_pole(lambda)?;
    let scale = sys.frequency_scale().max(lambda.norm());
    integrate_adaptive(scale, QUADRATURE_TOL, |w| {
        let s = Complex64::new(0.0, w);
        Ok(q.inner(&sys.apply(s, p)?)? / (s - lambda))
    })
}

fn clamp_squared(value: f64, scale: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if -value <= CLAMP_TOL * scale.max(1.0) {
        Ok(0.0)
    } else {
        Err(MorError::Internal(format!("squared H2 error is negative ({value:.3e})")))
    }
}

/// `||G - G_r||^2` from the pole-residue form of `G_r`.
pub fn h2_error_pole_residue(full: &dyn TransferFunction, pr: &PoleResidue) -> Result<f64> {
    pr.require_stable()?;
    let g2 = full.h2_norm_squared_closed()?;
    let gr2 = pr.h2_norm_squared_closed()?;
    let mut cross = 0.0;
    for ((l, b), c) in pr.poles().iter().zip(pr.b_dirs()).zip(pr.c_dirs()) {
        cross += c.inner(&full.apply(-l.conj(), b)?)?.re;
    }
    clamp_squared(g2 - 2.0 * cross + gr2, g2 + gr2)
}

/// Squared H2 error; `rom` must be stable and semi-simple.
pub fn h2_error(full: &dyn TransferFunction, rom: &ReducedModel) -> Result<f64> {
    h2_error_pole_residue(full, &rom.pole_residue()?)
}

/// `(1/2 pi) int ||(G - G_r)(i w)||_HS^2 dw`, expanded pointwise as
/// `||G||_HS^2 - 2 Re sum_j conj(d_j) <G b_j, c_j> + ||G_r||_HS^2`.
pub fn h2_error_quadrature(full: &dyn TransferFunction, pr: &PoleResidue) -> Result<QuadratureValue> {
    pr.require_stable()?;
    integrate_adaptive(full.frequency_scale(), QUADRATURE_TOL, |w| {
        let s = Complex64::new(0.0, w);
        let mut cross = Complex64::new(0.0, 0.0);
        for ((l, b), c) in pr.poles().iter().zip(pr.b_dirs()).zip(pr.c_dirs()) {
            let d = Complex64::new(1.0, 0.0) / (s - l);
            cross += d.conj() * full.apply(s, b)?.inner(c)?;
        }
        let v = full.hs_norm_squared(s)? - 2.0 * cross.re + TransferFunction::hs_norm_squared(pr, s)?;
        Ok(Complex64::new(v, 0.0))
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimalityReport {
    pub poles: Vec<Complex64>,
    pub eps_left: Vec<f64>,
    pub eps_right: Vec<f64>,
    pub eps_herm: Vec<f64>,
    pub max: f64,
}

/// Relative mismatch of the three tangential conditions at each mirror point `-conj(lambda_i)`.
pub fn optimality_residuals_pole_residue(full: &dyn TransferFunction, pr: &PoleResidue) -> Result<OptimalityReport> {
    pr.require_stable()?;
    let r = pr.r();
    let mut rep = OptimalityReport {
        poles: pr.poles().to_vec(),
        eps_left: Vec::with_capacity(r),
        eps_right: Vec::with_capacity(r),
        eps_herm: Vec::with_capacity(r),
        max: 0.0,
    };
    for i in 0..r {
        let z = -pr.poles()[i].conj();
        let (b, c) = (&pr.b_dirs()[i], &pr.c_dirs()[i]);
        let gb = full.apply(z, b)?;
        let left = gb.sub(&pr.eval(z, b)?)?.norm() / gb.norm();
        let gc = full.apply_adjoint(z, c)?;
        let right = gc.sub(&pr.eval_adjoint(z, c)?)?.norm() / gc.norm();
        let dg = full.apply_derivative(z, b)?.inner(c)?;
        let dgr = pr.eval_derivative(z, b)?.inner(c)?;
        let herm = (dg - dgr).norm() / dg.norm();
        rep.max = rep.max.max(left).max(right).max(herm);
        rep.eps_left.push(left);
        rep.eps_right.push(right);
        rep.eps_herm.push(herm);
    }
    Ok(rep)
}

pub fn optimality_residuals(full: &dyn TransferFunction, rom: &ReducedModel) -> Result<OptimalityReport> {
    optimality_residuals_pole_residue(full, &rom.pole_residue()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{Patch, QuadratureGrid};
    use crate::heat2d::{FullModel, HeatConfig};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn grids() -> (Arc<QuadratureGrid>, Arc<QuadratureGrid>) {
        (
            QuadratureGrid::new(Patch::square(0.1, 0.3).unwrap(), 6).unwrap(),
            QuadratureGrid::new(Patch::square(0.6, 0.8).unwrap(), 6).unwrap(),
        )
    }

    fn rank_one(lambda: Complex64, alpha: f64) -> PoleResidue {
        let (u, y) = grids();
        PoleResidue::rank_one(lambda, FunctionVector::random(&u, 1), FunctionVector::random(&y, 2).scaled(c(alpha, 0.0))).unwrap()
    }

    #[test]
    fn quadrature_weights_and_test_integral() {
        let q = FrequencyQuadrature::new(1.0, 256).unwrap();
        assert!(q.weights.iter().all(|&w| w > 0.0));
        assert!(FrequencyQuadrature::new(1.0, 32).is_err());
        // (1/2 pi) int 1/(1+w^2) dw = 1/2
        let a = q.integrate(|w| Ok(c(1.0 / (1.0 + w * w), 0.0))).unwrap();
        let b = FrequencyQuadrature::new(1.0, 512).unwrap().integrate(|w| Ok(c(1.0 / (1.0 + w * w), 0.0))).unwrap();
        assert!((a.re - 0.5).abs() < 1e-12);
        assert!((a - b).norm() < 1e-8);
    }

    #[test]
    fn rank_one_hs_norm() {
        let f = rank_one(c(-1.0, 0.5), 1.0);
        let s = c(2.0, 3.0);
        let expect = f.b_dirs()[0].norm() * f.c_dirs()[0].norm() / (s - f.poles()[0]).norm();
        assert!((hs_norm(&f, s).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn hs_norm_decays_at_high_frequency() {
        let m = FullModel::new(&HeatConfig { quad_order: Some(12), ..HeatConfig::with_modes(4) }).unwrap();
        let a = hs_norm(&m, c(1e3, 0.0)).unwrap();
        let b = hs_norm(&m, c(1e4, 0.0)).unwrap();
        assert!(b < a && a > 0.0);
    }

    #[test]
    fn rank_one_norm_is_one_half() {
        let f = rank_one(c(-1.0, 0.0), 1.0);
        let n = h2_norm(&f).unwrap();
        assert!((n.closed.powi(2) - 0.5).abs() < 1e-14);
        assert!((n.quadrature.powi(2) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn norm_is_homogeneous() {
        let a = h2_norm(&rank_one(c(-2.0, 1.0), 1.0)).unwrap();
        let b = h2_norm(&rank_one(c(-2.0, 1.0), -3.0)).unwrap();
        assert!((b.closed - 3.0 * a.closed).abs() < 1e-13);
        assert!((b.quadrature - 3.0 * a.quadrature).abs() < 1e-9);
    }

    #[test]
    fn unstable_norm_is_an_error() {
        assert!(matches!(h2_norm(&rank_one(c(0.5, 0.0), 1.0)), Err(MorError::Unstable { .. })));
    }

    #[test]
    fn heat_closed_form_matches_quadrature() {
        let m = FullModel::new(&HeatConfig::with_modes(8)).unwrap();
        let n = h2_norm(&m).unwrap();
        assert!(n.relative_difference < 1e-6, "{n:?}");
    }

    #[test]
    fn rank_one_inner_product() {
        let f = rank_one(c(-1.5, 2.0), 1.0);
        let (p, q) = (&f.b_dirs()[0], &f.c_dirs()[0]);
        let own = h2_inner_rank1(&f, f.poles()[0], p, q).unwrap();
        assert!((own.re - 1.0 / 3.0).abs() < 1e-14 && own.im.abs() < 1e-14);
        assert!(h2_inner_rank1(&f, c(0.0, 1.0), p, q).is_err());
    }

    #[test]
    fn rank_one_inner_product_matches_quadrature_on_heat() {
        let m = FullModel::new(&HeatConfig::with_modes(8)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..3 {
            let lambda = c(-rng.gen_range(1.0..40.0), rng.gen_range(-30.0..30.0));
            let p = FunctionVector::random_with(m.con_grid(), &mut rng);
            let q = FunctionVector::random_with(m.obs_grid(), &mut rng);
            let a = h2_inner_rank1(&m, lambda, &p, &q).unwrap();
            let b = h2_inner_rank1_quadrature(&m, lambda, &p, &q).unwrap();
            assert!((a - b.value).norm() / a.norm() < 1e-6);
        }
    }

    #[test]
    fn orthogonal_probe_gives_zero() {
        let m = FullModel::new(&HeatConfig { quad_order: Some(12), ..HeatConfig::with_modes(4) }).unwrap();
        let lambda = c(-3.0, 1.0);
        let p = FunctionVector::random(m.con_grid(), 1);
        let g = m.apply_tf(-lambda.conj(), &p).unwrap();
        let mut q = FunctionVector::random(m.obs_grid(), 2);
        let proj = q.inner(&g).unwrap() / g.norm_squared();
        q.axpy(-proj, &g).unwrap();
        assert!(h2_inner_rank1(&m, lambda, &p, &q).unwrap().norm() < 1e-16);
    }

    #[test]
    fn error_of_self_is_zero() {
        let (u, y) = grids();
        let pr = PoleResidue::new(
            vec![c(-1.0, 0.0), c(-2.0, 4.0), c(-2.0, -4.0)],
            (0..3).map(|k| FunctionVector::random(&u, k)).collect(),
            (0..3).map(|k| FunctionVector::random(&y, 5 + k)).collect(),
        )
        .unwrap();
        let rom = pr.to_reduced_model().unwrap();
        assert!(h2_error(&pr, &rom).unwrap() < 1e-10);
        let rep = optimality_residuals(&pr, &rom).unwrap();
        assert!(rep.max < 1e-12);
    }

    #[test]
    fn random_rom_is_not_optimal() {
        let m = FullModel::new(&HeatConfig::with_modes(8)).unwrap();
        let pr = PoleResidue::new(
            vec![c(-15.0, 0.0), c(-60.0, 0.0)],
            vec![FunctionVector::random(m.con_grid(), 1), FunctionVector::random(m.con_grid(), 2)],
            vec![FunctionVector::random(m.obs_grid(), 3).scaled(c(1e-3, 0.0)), FunctionVector::random(m.obs_grid(), 4).scaled(c(1e-3, 0.0))],
        )
        .unwrap();
        let rep = optimality_residuals_pole_residue(&m, &pr).unwrap();
        assert!(rep.max > 1e-2);
        let e = h2_error_pole_residue(&m, &pr).unwrap();
        let g = m.h2_norm_squared_closed().unwrap().sqrt();
        let gr = pr.h2_norm_squared_closed().unwrap().sqrt();
        assert!(e <= (g + gr).powi(2) + 1e-9);
        let q = h2_error_quadrature(&m, &pr).unwrap();
        assert!((q.value.re - e).abs() / e < 1e-6);
    }
}
