//! The 2D Dirichlet heat equation on the unit square in modal coordinates.
//!
//! With `phi_nm(z) = 2 sin(n pi z1) sin(m pi z2)` and `lambda_nm = -pi^2 (n^2 + m^2)`,
//! the transfer function from `U = L2(omega_con)` to `Y = L2(omega_obs)` is
//!
//! ```text
//! G(s)[p] = sum_{n,m <= N} <1_con p, phi_nm> / (s - lambda_nm) * phi_nm|obs
//! ```
//!
//! All mode sums run in `(n, m)` lexicographic order.

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::expint;
use crate::funcspace::{FunctionVector, Patch, QuadratureGrid};
use crate::system::TransferFunction;
use crate::timeseries::TimeSeries;

/// Default absolute distance below which `s` counts as sitting on the spectrum.
pub const POLE_TOLERANCE: f64 = 1e-8;

/// `lambda_nm = -pi^2 (n^2 + m^2)`
pub fn eigenvalue(n: usize, m: usize) -> Result<f64> {
    if n < 1 || m < 1 {
        return Err(MorError::Domain(format!("mode indices must be >= 1, got ({n},{m})")));
    }
    Ok(-PI * PI * ((n * n + m * m) as f64))
}

/// Bound on `sum 1/(pi^4 (n^2+m^2)^2)` over modes with `n_max < max(n, m) <= upto`.
///
/// For `Re(s) >= 0`, `|s - lambda_nm| >= |lambda_nm|`, so by Bessel's inequality the
/// square root of this value times `||p||` bounds the change of `G(s)[p]` when
/// the truncation grows from `n_max` to `upto`.
pub fn truncation_tail(n_max: usize, upto: usize) -> f64 {
    let mut acc = 0.0;
    for n in 1..=upto {
        for m in 1..=upto {
            if n.max(m) > n_max {
                let q = (n * n + m * m) as f64;
                acc += 1.0 / (PI.powi(4) * q * q);
            }
        }
    }
    acc
}

/// Estimate of the infinite tail `sum_{max(n,m) > n_max} 1/(n^2+m^2)^2`.
///
/// Exact partial sum up to `8 n_max`, plus the polar-integral remainder
/// `pi / (4 R^2)` beyond radius `R = 8 n_max`. Decays like `1/n_max^2`.
pub fn hs_tail_estimate(n_max: usize) -> f64 {
    let upto = 8 * n_max.max(1);
    truncation_tail(n_max, upto) * PI.powi(4) + PI / (4.0 * (upto * upto) as f64)
}

/// Model configuration, as read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatConfig {
    pub con_patch: Patch,
    pub obs_patch: Patch,
    pub n_modes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quad_order: Option<usize>,
}

impl Default for HeatConfig {
    fn default() -> Self {
        HeatConfig {
            con_patch: Patch::square(0.1, 0.3).expect("valid patch"),
            obs_patch: Patch::square(0.6, 0.8).expect("valid patch"),
            n_modes: 20,
            quad_order: None,
        }
    }
}

impl HeatConfig {
    pub fn with_modes(n_modes: usize) -> Self {
        HeatConfig { n_modes, ..Default::default() }
    }

    pub fn effective_quad_order(&self) -> usize {
        self.quad_order.unwrap_or_else(|| QuadratureGrid::default_order(self.n_modes))
    }
}

/// Sampled modes on one patch: plain values and weight-folded values, mode-major.
#[derive(Debug, Clone)]
struct ModeTable {
    values: Vec<f64>,
    weighted: Vec<f64>,
    nodes: usize,
}

impl ModeTable {
    fn new(grid: &QuadratureGrid, modes: &[(usize, usize)], n_max: usize) -> Self {
        let (xs, ys) = grid.axis_nodes();
        let order = grid.order();
        let sines = |coords: &[f64]| -> Vec<Vec<f64>> {
            (1..=n_max)
                .map(|n| coords.iter().map(|&c| (n as f64 * PI * c).sin()).collect())
                .collect()
        };
        let sx = sines(xs);
        let sy = sines(ys);
        let nodes = grid.len();
        let mut values = Vec::with_capacity(modes.len() * nodes);
        for &(n, m) in modes {
            for i in 0..order {
                for j in 0..order {
                    values.push(2.0 * sx[n - 1][i] * sy[m - 1][j]);
                }
            }
        }
        let weighted = values
            .chunks(nodes)
            .flat_map(|row| row.iter().zip(grid.weights()).map(|(v, w)| v * w))
            .collect();
        ModeTable { values, weighted, nodes }
    }

    fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.nodes..(k + 1) * self.nodes]
    }

    fn weighted_row(&self, k: usize) -> &[f64] {
        &self.weighted[k * self.nodes..(k + 1) * self.nodes]
    }

    /// `<f, phi_k>` for every mode.
    fn project(&self, f: &[Complex64]) -> Vec<Complex64> {
        let modes = self.values.len() / self.nodes;
        (0..modes)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (w, v) in self.weighted_row(k).iter().zip(f) {
                    acc += v * w;
                }
                acc
            })
            .collect()
    }

    /// `sum_k x_k phi_k` at the nodes.
    fn synthesize(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.nodes];
        for (k, xk) in x.iter().enumerate() {
            if *xk == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (o, v) in out.iter_mut().zip(self.row(k)) {
                *o += xk * v;
            }
        }
        out
    }

    /// `G_kl = <phi_l, phi_k>` on the patch.
    fn gram(&self) -> DMatrix<f64> {
        let modes = self.values.len() / self.nodes;
        let phi = DMatrix::from_row_slice(modes, self.nodes, &self.values);
        let phi_w = DMatrix::from_row_slice(modes, self.nodes, &self.weighted);
        &phi_w * phi.transpose()
    }
}

/// The full-order heat model with `n_max^2` retained modes.
#[derive(Debug)]
pub struct FullModel {
    config: HeatConfig,
    con_grid: Arc<QuadratureGrid>,
    obs_grid: Arc<QuadratureGrid>,
    modes: Vec<(usize, usize)>,
    eigenvalues: Vec<f64>,
    con: ModeTable,
    obs: ModeTable,
    pole_tol: f64,
    hs_kernel: OnceLock<Vec<f64>>,
}

impl FullModel {
    pub fn new(config: &HeatConfig) -> Result<Self> {
        let n_max = config.n_modes;
        if n_max < 1 {
            return Err(MorError::Domain("n_modes must be at least 1".into()));
        }
        let order = config.effective_quad_order();
        let con_grid = QuadratureGrid::new(config.con_patch, order)?;
        let obs_grid = QuadratureGrid::new(config.obs_patch, order)?;
        let modes: Vec<(usize, usize)> = (1..=n_max).flat_map(|n| (1..=n_max).map(move |m| (n, m))).collect();
        let eigenvalues = modes.iter().map(|&(n, m)| eigenvalue(n, m)).collect::<Result<Vec<_>>>()?;
        let con = ModeTable::new(&con_grid, &modes, n_max);
        let obs = ModeTable::new(&obs_grid, &modes, n_max);
        Ok(FullModel {
            config: config.clone(),
            con_grid,
            obs_grid,
            modes,
            eigenvalues,
            con,
            obs,
            pole_tol: POLE_TOLERANCE,
            hs_kernel: OnceLock::new(),
        })
    }

    pub fn with_pole_tolerance(mut self, tol: f64) -> Self {
        self.pole_tol = tol;
        self
    }

    pub fn config(&self) -> &HeatConfig {
        &self.config
    }

    pub fn n_max(&self) -> usize {
        self.config.n_modes
    }

    pub fn con_grid(&self) -> &Arc<QuadratureGrid> {
        &self.con_grid
    }

    pub fn obs_grid(&self) -> &Arc<QuadratureGrid> {
        &self.obs_grid
    }

    pub fn modes(&self) -> &[(usize, usize)] {
        &self.modes
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode_count(&self) -> usize {
        self.modes.len()
    }

    /// `|lambda_11| = 2 pi^2`, the exponential decay rate of the semigroup.
    pub fn stability_margin(&self) -> f64 {
        -self.eigenvalues[0]
    }

    fn check_input(&self, p: &FunctionVector) -> Result<()> {
        if p.grid().same_as(&self.con_grid) {
            Ok(())
        } else {
            Err(MorError::Dimension("input function is not on the control grid".into()))
        }
    }

    fn check_output(&self, q: &FunctionVector) -> Result<()> {
        if q.grid().same_as(&self.obs_grid) {
            Ok(())
        } else {
            Err(MorError::Dimension("output function is not on the observation grid".into()))
        }
    }

    /// Rejects `s` within the pole tolerance of a retained eigenvalue.
    pub fn check_resolvent(&self, s: Complex64) -> Result<()> {
        let (k, distance) = self
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, &l)| (k, (s - l).norm()))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
        if distance < self.pole_tol {
            let (n, m) = self.modes[k];
            return Err(MorError::PoleProximity { s, n, m, distance });
        }
        Ok(())
    }

    /// Modal coefficients of `B[p]`: `<1_con p, phi_nm>`.
    pub fn input_coefficients(&self, p: &FunctionVector) -> Result<Vec<Complex64>> {
        self.check_input(p)?;
        Ok(self.con.project(p.values()))
    }

    /// Modal coefficients of `C^*[q]`: `<q, phi_nm|obs>`.
    pub fn output_coefficients(&self, q: &FunctionVector) -> Result<Vec<Complex64>> {
        self.check_output(q)?;
        Ok(self.obs.project(q.values()))
    }

    /// `C[x] = sum x_nm phi_nm|obs`
    pub fn synthesize_output(&self, x: &[Complex64]) -> FunctionVector {
        FunctionVector::from_parts(self.obs_grid.clone(), self.obs.synthesize(x))
    }

    /// `B^*[x] = sum x_nm phi_nm|con`
    pub fn synthesize_input(&self, x: &[Complex64]) -> FunctionVector {
        FunctionVector::from_parts(self.con_grid.clone(), self.con.synthesize(x))
    }

    /// Gram matrix of the modes restricted to the control patch.
    pub fn con_gram(&self) -> DMatrix<f64> {
        self.con.gram()
    }

    /// Gram matrix of the modes restricted to the observation patch.
    pub fn obs_gram(&self) -> DMatrix<f64> {
        self.obs.gram()
    }

    pub fn apply_tf(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.check_resolvent(s)?;
        let mut x = self.input_coefficients(p)?;
        for (xk, l) in x.iter_mut().zip(&self.eigenvalues) {
            *xk /= s - l;
        }
        Ok(self.synthesize_output(&x))
    }

    pub fn apply_tf_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        self.check_resolvent(s)?;
        let mut x = self.output_coefficients(q)?;
        for (xk, l) in x.iter_mut().zip(&self.eigenvalues) {
            *xk *= (Complex64::new(1.0, 0.0) / (s - l)).conj();
        }
        Ok(self.synthesize_input(&x))
    }

    pub fn apply_tf_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.check_resolvent(s)?;
        let mut x = self.input_coefficients(p)?;
        for (xk, l) in x.iter_mut().zip(&self.eigenvalues) {
            let d = s - l;
            *xk = -*xk / (d * d);
        }
        Ok(self.synthesize_output(&x))
    }

    /// `H_kl = <phi_l, phi_k>_obs <phi_k, phi_l>_con`; `||G(s)||_HS^2 = d^* H d` with `d_k = 1/(s - lambda_k)`.
    fn hs_kernel(&self) -> &[f64] {
        self.hs_kernel.get_or_init(|| {
            let go = self.obs.gram();
            let gc = self.con.gram();
            let n = self.modes.len();
            let mut h = Vec::with_capacity(n * n);
            for k in 0..n {
                for l in 0..n {
                    h.push(go[(k, l)] * gc[(l, k)]);
                }
            }
            h
        })
    }

    /// Zero-state response to a piecewise-linear input, integrated exactly per mode.
    pub fn simulate(&self, u: &TimeSeries, horizon: f64) -> Result<TimeSeries> {
        if !u.grid().same_as(&self.con_grid) {
            return Err(MorError::Dimension("input series is not on the control grid".into()));
        }
        let steps = u.steps_for(horizon)?;
        let forcing: Vec<Vec<Complex64>> = u.samples()[..=steps].iter().map(|s| self.con.project(s.values())).collect();
        let rates: Vec<Complex64> = self.eigenvalues.iter().map(|&l| Complex64::new(l, 0.0)).collect();
        let states = expint::integrate(&rates, u.dt(), &forcing);
        let outputs = states.iter().map(|x| self.synthesize_output(x)).collect();
        TimeSeries::new(u.dt(), outputs)
    }
}

impl TransferFunction for FullModel {
    fn input_grid(&self) -> &Arc<QuadratureGrid> {
        &self.con_grid
    }

    fn output_grid(&self) -> &Arc<QuadratureGrid> {
        &self.obs_grid
    }

    fn apply(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.apply_tf(s, p)
    }

    fn apply_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        self.apply_tf_adjoint(s, q)
    }

    fn apply_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.apply_tf_derivative(s, p)
    }

    fn hs_norm_squared(&self, s: Complex64) -> Result<f64> {
        self.check_resolvent(s)?;
        let h = self.hs_kernel();
        let n = self.modes.len();
        let d: Vec<Complex64> = self.eigenvalues.iter().map(|&l| Complex64::new(1.0, 0.0) / (s - l)).collect();
        let mut acc = 0.0;
        for k in 0..n {
            let mut row = Complex64::new(0.0, 0.0);
            for l in 0..n {
                row += d[l] * h[k * n + l];
            }
            acc += (d[k].conj() * row).re;
        }
        Ok(acc.max(0.0))
    }

    /// Double modal series `sum_kl H_kl / (-(lambda_k + lambda_l))`.
    fn h2_norm_squared_closed(&self) -> Result<f64> {
        let h = self.hs_kernel();
        let n = self.modes.len();
        let mut acc = 0.0;
        for k in 0..n {
            for l in 0..n {
                acc += h[k * n + l] / (-(self.eigenvalues[k] + self.eigenvalues[l]));
            }
        }
        Ok(acc)
    }

    fn frequency_scale(&self) -> f64 {
        self.stability_margin()
    }
}
