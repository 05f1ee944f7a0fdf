//! L2 spaces over axis-aligned rectangles of the unit square.
//!
//! Functions are stored as complex samples on a tensor Gauss–Legendre grid.
//! The quadrature weights define the discrete inner product
//! `<f, g> = sum_k w_k f_k conj(g_k)`, which is linear in the first argument.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};

/// Axis-aligned rectangle `[x_lo, x_hi] x [y_lo, y_hi]` inside the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PatchRepr", into = "PatchRepr")]
pub struct Patch {
    x_lo: f64,
    x_hi: f64,
    y_lo: f64,
    y_hi: f64,
}

#[derive(Serialize, Deserialize)]
struct PatchRepr {
    x: [f64; 2],
    y: [f64; 2],
}

impl TryFrom<PatchRepr> for Patch {
    type Error = MorError;

    fn try_from(repr: PatchRepr) -> Result<Self> {
        Patch::new(repr.x[0], repr.x[1], repr.y[0], repr.y[1])
    }
}

impl From<Patch> for PatchRepr {
    fn from(p: Patch) -> Self {
        PatchRepr {
            x: [p.x_lo, p.x_hi],
            y: [p.y_lo, p.y_hi],
        }
    }
}

impl Patch {
    pub fn new(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64) -> Result<Self> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo < hi && hi <= 1.0;
        if !ok(x_lo, x_hi) || !ok(y_lo, y_hi) {
            return Err(MorError::Domain(format!(
                "patch [{x_lo}, {x_hi}] x [{y_lo}, {y_hi}] must satisfy 0 <= lo < hi <= 1 on both axes"
            )));
        }
        Ok(Patch { x_lo, x_hi, y_lo, y_hi })
    }

    /// Square patch `[lo, hi]^2`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Patch::new(lo, hi, lo, hi)
    }

    /// The whole domain `(0, 1)^2`.
    pub fn unit() -> Self {
        Patch { x_lo: 0.0, x_hi: 1.0, y_lo: 0.0, y_hi: 1.0 }
    }

    pub fn x(&self) -> (f64, f64) {
        (self.x_lo, self.x_hi)
    }

    pub fn y(&self) -> (f64, f64) {
        (self.y_lo, self.y_hi)
    }

    pub fn area(&self) -> f64 {
        (self.x_hi - self.x_lo) * (self.y_hi - self.y_lo)
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`, ascending.
pub fn gauss_legendre(order: usize) -> (Vec<f64>, Vec<f64>) {
    let n = order;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        // Tricomi's initial guess, then Newton on P_n.
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Tensor Gauss–Legendre rule on a patch.
///
/// Node `k = i * order + j` sits at `(xs[i], ys[j])`.
#[derive(Debug, Clone)]
pub struct QuadratureGrid {
    patch: Patch,
    order: usize,
    xs: Vec<f64>,
    ys: Vec<f64>,
    nodes: Vec<[f64; 2]>,
    weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn new(patch: Patch, order: usize) -> Result<Arc<Self>> {
        if order == 0 {
            return Err(MorError::Domain("quadrature order must be at least 1".into()));
        }
        let (t, w) = gauss_legendre(order);
        let (x_lo, x_hi) = patch.x();
        let (y_lo, y_hi) = patch.y();
        let hx = 0.5 * (x_hi - x_lo);
        let hy = 0.5 * (y_hi - y_lo);
        let xs: Vec<f64> = t.iter().map(|&t| x_lo + hx * (t + 1.0)).collect();
        let ys: Vec<f64> = t.iter().map(|&t| y_lo + hy * (t + 1.0)).collect();
        let mut nodes = Vec::with_capacity(order * order);
        let mut weights = Vec::with_capacity(order * order);
        for i in 0..order {
            for j in 0..order {
                nodes.push([xs[i], ys[j]]);
                weights.push(hx * w[i] * hy * w[j]);
            }
        }
        Ok(Arc::new(QuadratureGrid { patch, order, xs, ys, nodes, weights }))
    }

    /// Order recommended for resolving sine modes up to `n_max` per axis.
    pub fn default_order(n_max: usize) -> usize {
        16.max(2 * n_max + 4)
    }

    pub fn patch(&self) -> &Patch {
        &self.patch
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Polynomial degree per axis integrated exactly.
    pub fn exactness_degree(&self) -> usize {
        2 * self.order - 1
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axis_nodes(&self) -> (&[f64], &[f64]) {
        (&self.xs, &self.ys)
    }

    /// Two grids are interchangeable when they share patch and order.
    pub fn same_as(&self, other: &QuadratureGrid) -> bool {
        std::ptr::eq(self, other) || (self.patch == other.patch && self.order == other.order)
    }

    /// Integral of a real function over the patch.
    pub fn integrate(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(z, w)| w * f(z[0], z[1]))
            .sum()
    }
}

/// A function in `L2(patch)`, sampled on a quadrature grid.
///
/// Serializes as `{"patch": {...}, "quad_order": k, "values": [[re, im], ...]}`;
/// the grid is rebuilt on load.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "FunctionVectorRepr", into = "FunctionVectorRepr")]
pub struct FunctionVector {
    grid: Arc<QuadratureGrid>,
    values: Vec<Complex64>,
}

#[derive(Serialize, Deserialize)]
struct FunctionVectorRepr {
    patch: Patch,
    quad_order: usize,
    values: Vec<Complex64>,
}

impl TryFrom<FunctionVectorRepr> for FunctionVector {
    type Error = MorError;

    fn try_from(r: FunctionVectorRepr) -> Result<Self> {
        FunctionVector::new(QuadratureGrid::new(r.patch, r.quad_order)?, r.values)
    }
}

impl From<FunctionVector> for FunctionVectorRepr {
    fn from(f: FunctionVector) -> Self {
        FunctionVectorRepr { patch: f.grid.patch, quad_order: f.grid.order, values: f.values }
    }
}

impl PartialEq for FunctionVector {
    fn eq(&self, other: &Self) -> bool {
        self.grid.same_as(&other.grid) && self.values == other.values
    }
}

impl FunctionVector {
    pub fn new(grid: Arc<QuadratureGrid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(MorError::Dimension(format!(
                "{} values for a grid with {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(MorError::Domain("function values must be finite".into()));
        }
        Ok(FunctionVector { grid, values })
    }

    pub fn zeros(grid: &Arc<QuadratureGrid>) -> Self {
        FunctionVector {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.len()],
        }
    }

    pub fn constant(grid: &Arc<QuadratureGrid>, c: Complex64) -> Self {
        FunctionVector { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: &Arc<QuadratureGrid>, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|z| f(z[0], z[1])).collect();
        FunctionVector { grid: grid.clone(), values }
    }

    /// Unit-norm function with i.i.d. uniform complex samples from a fixed seed.
    pub fn random(grid: &Arc<QuadratureGrid>, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::random_with(grid, &mut rng)
    }

    pub fn random_with(grid: &Arc<QuadratureGrid>, rng: &mut impl Rng) -> Self {
        let values = (0..grid.len())
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let f = FunctionVector { grid: grid.clone(), values };
        f.normalized().expect("random sample vector is nonzero")
    }

    /// Used internally when the length is known to match.
    pub(crate) fn from_parts(grid: Arc<QuadratureGrid>, values: Vec<Complex64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        FunctionVector { grid, values }
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    fn check_grid(&self, other: &FunctionVector) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(MorError::Dimension(format!(
                "functions live on different grids ({:?}, order {} vs {:?}, order {})",
                self.grid.patch(),
                self.grid.order(),
                other.grid.patch(),
                other.grid.order()
            )))
        }
    }

    /// `sum_k w_k f_k conj(g_k)`, accumulated in node order.
    pub fn inner(&self, other: &FunctionVector) -> Result<Complex64> {
        self.check_grid(other)?;
        let mut acc = Complex64::new(0.0, 0.0);
        for ((f, g), w) in self.values.iter().zip(&other.values).zip(self.grid.weights()) {
            acc += f * g.conj() * w;
        }
        Ok(acc)
    }

    pub fn norm_squared(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(f, w)| w * f.norm_sqr())
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    pub fn scaled(&self, c: Complex64) -> FunctionVector {
        FunctionVector {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn conj(&self) -> FunctionVector {
        FunctionVector {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }

    pub fn normalized(&self) -> Result<FunctionVector> {
        let n = self.norm();
        if n == 0.0 {
            return Err(MorError::Domain("cannot normalize the zero function".into()));
        }
        Ok(self.scaled(Complex64::new(1.0 / n, 0.0)))
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: Complex64, other: &FunctionVector) -> Result<()> {
        self.check_grid(other)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn sub(&self, other: &FunctionVector) -> Result<FunctionVector> {
        let mut out = self.clone();
        out.axpy(Complex64::new(-1.0, 0.0), other)?;
        Ok(out)
    }

    pub fn add(&self, other: &FunctionVector) -> Result<FunctionVector> {
        let mut out = self.clone();
        out.axpy(Complex64::new(1.0, 0.0), other)?;
        Ok(out)
    }

    /// Largest absolute imaginary part of the samples.
    pub fn max_imag(&self) -> f64 {
        self.values.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
    }

    /// Linear combination `sum_i coeffs[i] * funcs[i]` over a common grid.
    pub fn combination(grid: &Arc<QuadratureGrid>, coeffs: &[Complex64], funcs: &[FunctionVector]) -> Result<FunctionVector> {
        let mut out = FunctionVector::zeros(grid);
        for (c, f) in coeffs.iter().zip(funcs) {
            out.axpy(*c, f)?;
        }
        Ok(out)
    }
}

fn check_mode(n: usize, m: usize) -> Result<()> {
    if n < 1 || m < 1 {
        return Err(MorError::Domain(format!("mode indices must be >= 1, got ({n},{m})")));
    }
    Ok(())
}

/// Sine mode `phi_nm(z) = 2 sin(n pi z1) sin(m pi z2)` at a point.
pub fn sine_mode(n: usize, m: usize, x: f64, y: f64) -> f64 {
    2.0 * (n as f64 * PI * x).sin() * (m as f64 * PI * y).sin()
}

/// `phi_nm` sampled on the grid nodes.
pub fn restrict_mode(n: usize, m: usize, grid: &Arc<QuadratureGrid>) -> Result<FunctionVector> {
    check_mode(n, m)?;
    Ok(FunctionVector::from_fn(grid, |x, y| Complex64::new(sine_mode(n, m, x, y), 0.0)))
}

/// `<1_K p, phi_nm>_{L2(Omega)}`, computed on the patch `K` that carries `p`.
pub fn mode_patch_coefficient(p: &FunctionVector, n: usize, m: usize) -> Result<Complex64> {
    let phi = restrict_mode(n, m, p.grid())?;
    p.inner(&phi)
}
