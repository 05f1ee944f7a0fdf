//! Reduced-order models `G_r(s) = C_r (s E_r - A_r)^{-1} B_r` and their
//! pole-residue form `sum_i <., b_i> c_i / (s - lambda_i)`.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::expint;
use crate::funcspace::{FunctionVector, QuadratureGrid};
use crate::linalg::{self, CMatrix, CVector};
use crate::system::TransferFunction;
use crate::timeseries::TimeSeries;

/// Relative eigenvalue separation below which a pencil counts as defective.
pub const POLE_SEPARATION: f64 = 1e-8;

pub type Provenance = BTreeMap<String, serde_json::Value>;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

fn check_family(what: &str, fs: &[FunctionVector]) -> Result<()> {
    if let Some(first) = fs.first() {
        if fs.iter().any(|f| !f.grid().same_as(first.grid())) {
            return Err(MorError::Dimension(format!("{what} live on different grids")));
        }
    }
    Ok(())
}

/// `<f, g_k>` for each `k`.
fn pairings(f: &FunctionVector, gs: &[FunctionVector]) -> Result<CVector> {
    let v = gs.iter().map(|g| f.inner(g)).collect::<Result<Vec<_>>>()?;
    Ok(CVector::from_vec(v))
}

/// `sum_k x_k f_k`
fn combine(grid: &Arc<QuadratureGrid>, x: &[Complex64], fs: &[FunctionVector]) -> Result<FunctionVector> {
    FunctionVector::combination(grid, x, fs)
}

/// Hermitian Gram matrix `G_ab = <f_b, f_a>`.
pub(crate) fn gram(fs: &[FunctionVector]) -> Result<CMatrix> {
    let r = fs.len();
    let mut g = CMatrix::zeros(r, r);
    for a in 0..r {
        for b in 0..r {
            g[(a, b)] = fs[b].inner(&fs[a])?;
        }
    }
    Ok(g)
}

/// Reduced pencil with Riesz representers `b_rows` (so `B_r[p]_i = <p, b_i>`)
/// and output functions `c_cols`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel {
    e: CMatrix,
    a: CMatrix,
    b_rows: Vec<FunctionVector>,
    c_cols: Vec<FunctionVector>,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct RomRepr {
    r: usize,
    #[serde(rename = "E")]
    e: Vec<Vec<Complex64>>,
    #[serde(rename = "A")]
    a: Vec<Vec<Complex64>>,
    b_rows: Vec<FunctionVector>,
    c_cols: Vec<FunctionVector>,
    #[serde(default)]
    provenance: Provenance,
}

fn to_rows(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().cloned().collect()).collect()
}

fn from_rows(name: &str, r: usize, rows: &[Vec<Complex64>]) -> Result<CMatrix> {
    if rows.len() != r || rows.iter().any(|row| row.len() != r) {
        return Err(MorError::Validation(format!("{name} must be {r}x{r}")));
    }
    Ok(CMatrix::from_fn(r, r, |i, j| rows[i][j]))
}

impl Serialize for ReducedModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RomRepr {
            r: self.r(),
            e: to_rows(&self.e),
            a: to_rows(&self.a),
            b_rows: self.b_rows.clone(),
            c_cols: self.c_cols.clone(),
            provenance: self.provenance.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ReducedModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RomRepr::deserialize(d)?;
        let build = || -> Result<ReducedModel> {
            let e = from_rows("E", r.r, &r.e)?;
            let a = from_rows("A", r.r, &r.a)?;
            Ok(ReducedModel::new(e, a, r.b_rows, r.c_cols)?.with_provenance(r.provenance))
        };
        build().map_err(serde::de::Error::custom)
    }
}

impl ReducedModel {
    pub fn new(e: CMatrix, a: CMatrix, b_rows: Vec<FunctionVector>, c_cols: Vec<FunctionVector>) -> Result<Self> {
        let r = e.nrows();
        if r == 0 {
            return Err(MorError::Dimension("reduced order must be at least 1".into()));
        }
        if e.ncols() != r || a.nrows() != r || a.ncols() != r || b_rows.len() != r || c_cols.len() != r {
            return Err(MorError::Dimension(format!(
                "inconsistent sizes: E {}x{}, A {}x{}, {} b rows, {} c columns",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols(),
                b_rows.len(),
                c_cols.len()
            )));
        }
        if e.iter().chain(a.iter()).any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(MorError::Validation("E and A must be finite".into()));
        }
        check_family("b rows", &b_rows)?;
        check_family("c columns", &c_cols)?;
        Ok(ReducedModel { e, a, b_rows, c_cols, provenance: Provenance::new() })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn r(&self) -> usize {
        self.e.nrows()
    }

    pub fn e(&self) -> &CMatrix {
        &self.e
    }

    pub fn a(&self) -> &CMatrix {
        &self.a
    }

    pub fn b_rows(&self) -> &[FunctionVector] {
        &self.b_rows
    }

    pub fn c_cols(&self) -> &[FunctionVector] {
        &self.c_cols
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    /// Replaces one entry of `E`; used to build deliberately broken models.
    pub fn set_e_entry(&mut self, i: usize, j: usize, value: Complex64) {
        self.e[(i, j)] = value;
    }

    pub fn e_condition(&self) -> f64 {
        linalg::condition_number(&self.e)
    }

    fn pencil(&self, s: Complex64) -> CMatrix {
        self.e.map(|z| z * s) - &self.a
    }

    fn solve_pencil(&self, s: Complex64, rhs: &CVector) -> Result<CVector> {
        linalg::solve_vec(&self.pencil(s), rhs).ok_or(MorError::SingularPencil { s })
    }

    fn solve_pencil_adjoint(&self, s: Complex64, rhs: &CVector) -> Result<CVector> {
        linalg::solve_vec(&self.pencil(s).adjoint(), rhs).ok_or(MorError::SingularPencil { s })
    }

    /// `C_r (s E - A)^{-1} B_r[p]`
    pub fn eval_tf(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        let rhs = pairings(p, &self.b_rows)?;
        let x = self.solve_pencil(s, &rhs)?;
        combine(self.c_cols[0].grid(), x.as_slice(), &self.c_cols)
    }

    /// `B_r^dagger (s E - A)^{-*} C_r^dagger[q]`
    pub fn eval_tf_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        let rhs = pairings(q, &self.c_cols)?;
        let z = self.solve_pencil_adjoint(s, &rhs)?;
        combine(self.b_rows[0].grid(), z.as_slice(), &self.b_rows)
    }

    /// `-C_r (s E - A)^{-1} E (s E - A)^{-1} B_r[p]`
    pub fn eval_tf_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        let rhs = pairings(p, &self.b_rows)?;
        let x = self.solve_pencil(s, &rhs)?;
        let x = self.solve_pencil(s, &(&self.e * x))?;
        let x: Vec<Complex64> = x.iter().map(|v| -v).collect();
        combine(self.c_cols[0].grid(), &x, &self.c_cols)
    }

    /// `trace(M G_b M^* G_c)` with `M = (s E - A)^{-1}`.
    pub fn hs_norm_squared(&self, s: Complex64) -> Result<f64> {
        let r = self.r();
        let m = linalg::solve(&self.pencil(s), &CMatrix::identity(r, r)).ok_or(MorError::SingularPencil { s })?;
        let gb = gram(&self.b_rows)?;
        let gc = gram(&self.c_cols)?;
        let core = &m * gb * m.adjoint() * gc;
        Ok(core.trace().re.max(0.0))
    }

    /// Semi-simple eigendecomposition of the pencil, normalized so `y_i^* E x_i = 1`.
    pub fn pole_residue(&self) -> Result<PoleResidue> {
        let r = self.r();
        let cond = self.e_condition();
        if !cond.is_finite() || cond > crate::loewner::CONDITION_REJECT {
            return Err(MorError::Conditioning { estimate: cond });
        }
        let e_inv = linalg::solve(&self.e, &CMatrix::identity(r, r)).ok_or(MorError::Conditioning { estimate: cond })?;
        let m = &e_inv * &self.a;
        let (poles, x) = linalg::eig_semisimple(&m, POLE_SEPARATION)?;
        let x_inv = linalg::solve(&x, &CMatrix::identity(r, r))
            .ok_or_else(|| MorError::SemiSimplicity("eigenvector matrix is singular".into()))?;
        let y_star = x_inv * e_inv;
        let u = self.b_rows[0].grid();
        let y = self.c_cols[0].grid();
        let mut b_dirs = Vec::with_capacity(r);
        let mut c_dirs = Vec::with_capacity(r);
        for i in 0..r {
            let cx: Vec<Complex64> = (0..r).map(|j| x[(j, i)]).collect();
            c_dirs.push(combine(y, &cx, &self.c_cols)?);
            let bx: Vec<Complex64> = (0..r).map(|k| y_star[(i, k)].conj()).collect();
            b_dirs.push(combine(u, &bx, &self.b_rows)?);
        }
        PoleResidue::new(poles, b_dirs, c_dirs)
    }

    /// `(max Re(lambda) < 0, -max Re(lambda))`
    pub fn is_stable(&self) -> Result<(bool, f64)> {
        Ok(self.pole_residue()?.stability())
    }

    /// Zero-state response through the diagonalized pencil. Unstable models
    /// are simulated with a warning.
    pub fn simulate(&self, u: &TimeSeries, horizon: f64) -> Result<TimeSeries> {
        self.pole_residue()?.simulate(u, horizon)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

impl TransferFunction for ReducedModel {
    fn input_grid(&self) -> &Arc<QuadratureGrid> {
        self.b_rows[0].grid()
    }

    fn output_grid(&self) -> &Arc<QuadratureGrid> {
        self.c_cols[0].grid()
    }

    fn apply(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.eval_tf(s, p)
    }

    fn apply_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        self.eval_tf_adjoint(s, q)
    }

    fn apply_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.eval_tf_derivative(s, p)
    }

    fn hs_norm_squared(&self, s: Complex64) -> Result<f64> {
        ReducedModel::hs_norm_squared(self, s)
    }

    fn h2_norm_squared_closed(&self) -> Result<f64> {
        self.pole_residue()?.h2_norm_squared_closed()
    }

    fn frequency_scale(&self) -> f64 {
        self.pole_residue().map(|pr| pr.frequency_scale()).unwrap_or(1.0)
    }
}

/// `sum_i <., b_i> c_i / (s - lambda_i)` with pairwise distinct poles.
#[derive(Debug, Clone, PartialEq)]
pub struct PoleResidue {
    poles: Vec<Complex64>,
    b_dirs: Vec<FunctionVector>,
    c_dirs: Vec<FunctionVector>,
}

impl PoleResidue {
    pub fn new(poles: Vec<Complex64>, b_dirs: Vec<FunctionVector>, c_dirs: Vec<FunctionVector>) -> Result<Self> {
        let r = poles.len();
        if r == 0 || b_dirs.len() != r || c_dirs.len() != r {
            return Err(MorError::Dimension(format!(
                "{} poles, {} b directions, {} c directions",
                r,
                b_dirs.len(),
                c_dirs.len()
            )));
        }
        check_family("b directions", &b_dirs)?;
        check_family("c directions", &c_dirs)?;
        let radius = poles.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let tol = POLE_SEPARATION * radius.max(f64::MIN_POSITIVE);
        for i in 0..r {
            for j in i + 1..r {
                if (poles[i] - poles[j]).norm() < tol {
                    return Err(MorError::SemiSimplicity(format!("poles {} and {} coincide", poles[i], poles[j])));
                }
            }
        }
        Ok(PoleResidue { poles, b_dirs, c_dirs })
    }

    /// Rank-1 system `<., p> q / (s - lambda)`.
    pub fn rank_one(lambda: Complex64, p: FunctionVector, q: FunctionVector) -> Result<Self> {
        PoleResidue::new(vec![lambda], vec![p], vec![q])
    }

    pub fn r(&self) -> usize {
        self.poles.len()
    }

    pub fn poles(&self) -> &[Complex64] {
        &self.poles
    }

    pub fn b_dirs(&self) -> &[FunctionVector] {
        &self.b_dirs
    }

    pub fn c_dirs(&self) -> &[FunctionVector] {
        &self.c_dirs
    }

    pub fn max_real_part(&self) -> f64 {
        self.poles.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn stability(&self) -> (bool, f64) {
        let m = self.max_real_part();
        (m < 0.0, -m)
    }

    pub fn require_stable(&self) -> Result<()> {
        let m = self.max_real_part();
        if m < 0.0 {
            Ok(())
        } else {
            Err(MorError::Unstable { max_real_part: m })
        }
    }

    /// Diagonal realization `E = I`, `A = diag(lambda)`.
    pub fn to_reduced_model(&self) -> Result<ReducedModel> {
        let r = self.r();
        let a = CMatrix::from_diagonal(&CVector::from_vec(self.poles.clone()));
        ReducedModel::new(CMatrix::identity(r, r), a, self.b_dirs.clone(), self.c_dirs.clone())
    }

    fn check_pole(&self, s: Complex64) -> Result<()> {
        if self.poles.iter().any(|&l| (s - l).norm() == 0.0) {
            return Err(MorError::SingularPencil { s });
        }
        Ok(())
    }

    pub fn eval(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.check_pole(s)?;
        let x = self
            .b_dirs
            .iter()
            .zip(&self.poles)
            .map(|(b, &l)| Ok(p.inner(b)? / (s - l)))
            .collect::<Result<Vec<_>>>()?;
        combine(self.c_dirs[0].grid(), &x, &self.c_dirs)
    }

    pub fn eval_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        self.check_pole(s)?;
        let x = self
            .c_dirs
            .iter()
            .zip(&self.poles)
            .map(|(c, &l)| Ok(q.inner(c)? * (Complex64::new(1.0, 0.0) / (s - l)).conj()))
            .collect::<Result<Vec<_>>>()?;
        combine(self.b_dirs[0].grid(), &x, &self.b_dirs)
    }

    pub fn eval_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.check_pole(s)?;
        let x = self
            .b_dirs
            .iter()
            .zip(&self.poles)
            .map(|(b, &l)| Ok(-p.inner(b)? / ((s - l) * (s - l))))
            .collect::<Result<Vec<_>>>()?;
        combine(self.c_dirs[0].grid(), &x, &self.c_dirs)
    }

    /// `sum_ij <c_i, c_j> <b_j, b_i> / (-(lambda_i + conj(lambda_j)))`
    pub fn h2_norm_squared_closed(&self) -> Result<f64> {
        self.require_stable()?;
        let gb = gram(&self.b_dirs)?;
        let gc = gram(&self.c_dirs)?;
        let r = self.r();
        let mut acc = ZERO;
        for i in 0..r {
            for j in 0..r {
                // gc[(j, i)] = <c_i, c_j>, gb[(i, j)] = <b_j, b_i>
                acc += gc[(j, i)] * gb[(i, j)] / (-(self.poles[i] + self.poles[j].conj()));
            }
        }
        Ok(acc.re)
    }

    pub fn frequency_scale(&self) -> f64 {
        let mean = self.poles.iter().map(|l| l.norm()).sum::<f64>() / self.r() as f64;
        if mean > 0.0 {
            mean
        } else {
            1.0
        }
    }

    pub fn simulate(&self, u: &TimeSeries, horizon: f64) -> Result<TimeSeries> {
        if !u.grid().same_as(self.b_dirs[0].grid()) {
            return Err(MorError::Dimension("input series is not on the model's input grid".into()));
        }
        let (stable, margin) = self.stability();
        if !stable {
            log::warn!("simulating an unstable reduced model (margin {margin:.3e})");
        }
        let steps = u.steps_for(horizon)?;
        let forcing = u.samples()[..=steps]
            .iter()
            .map(|f| self.b_dirs.iter().map(|b| f.inner(b)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        let states = expint::integrate(&self.poles, u.dt(), &forcing);
        let grid = self.c_dirs[0].grid();
        let outputs = states.iter().map(|x| combine(grid, x, &self.c_dirs)).collect::<Result<Vec<_>>>()?;
        TimeSeries::new(u.dt(), outputs)
    }
}

impl TransferFunction for PoleResidue {
    fn input_grid(&self) -> &Arc<QuadratureGrid> {
        self.b_dirs[0].grid()
    }

    fn output_grid(&self) -> &Arc<QuadratureGrid> {
        self.c_dirs[0].grid()
    }

    fn apply(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.eval(s, p)
    }

    fn apply_adjoint(&self, s: Complex64, q: &FunctionVector) -> Result<FunctionVector> {
        self.eval_adjoint(s, q)
    }

    fn apply_derivative(&self, s: Complex64, p: &FunctionVector) -> Result<FunctionVector> {
        self.eval_derivative(s, p)
    }

    /// `sum_ij conj(d_i) d_j <c_j, c_i> <b_i, b_j>` with `d_i = 1/(s - lambda_i)`.
    fn hs_norm_squared(&self, s: Complex64) -> Result<f64> {
        self.check_pole(s)?;
        let gb = gram(&self.b_dirs)?;
        let gc = gram(&self.c_dirs)?;
        let d: Vec<Complex64> = self.poles.iter().map(|&l| Complex64::new(1.0, 0.0) / (s - l)).collect();
        let r = self.r();
        let mut acc = ZERO;
        for i in 0..r {
            for j in 0..r {
                acc += d[i].conj() * d[j] * gc[(i, j)] * gb[(j, i)];
            }
        }
        Ok(acc.re.max(0.0))
    }

    fn h2_norm_squared_closed(&self) -> Result<f64> {
        PoleResidue::h2_norm_squared_closed(self)
    }

    fn frequency_scale(&self) -> f64 {
        PoleResidue::frequency_scale(self)
    }
}
