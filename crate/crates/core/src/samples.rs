//! Tangential interpolation data: the only input the Loewner construction sees.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MorError, Result};
use crate::funcspace::{restrict_mode, FunctionVector, QuadratureGrid};
use crate::system::TransferFunction;

/// Left and right points closer than this are treated as one point.
pub const COINCIDENCE_TOL: f64 = 1e-10;

/// Points this close but not coincident trigger a conditioning warning.
pub const NEAR_COINCIDENCE: f64 = 1e-6;

fn default_tol() -> f64 {
    COINCIDENCE_TOL
}

/// `(sigma, p, G(sigma)[p])`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RightSample {
    pub sigma: Complex64,
    pub p: FunctionVector,
    pub value: FunctionVector,
}

/// `(rho, q, G(rho)^dagger[q])`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeftSample {
    pub rho: Complex64,
    pub q: FunctionVector,
    pub value: FunctionVector,
}

/// `<dG/ds(sigma_j)[p_j], q_i>` for a coincident pair; `i` indexes lefts, `j` rights, from 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HermiteSample {
    pub i: usize,
    pub j: usize,
    pub value: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TangentialDataset {
    r: usize,
    rights: Vec<RightSample>,
    lefts: Vec<LeftSample>,
    hermites: Vec<HermiteSample>,
    coincidence_tol: f64,
}

#[derive(Deserialize)]
struct DatasetRepr {
    r: usize,
    rights: Vec<RightSample>,
    lefts: Vec<LeftSample>,
    #[serde(default)]
    hermites: Vec<HermiteSample>,
    #[serde(default = "default_tol")]
    coincidence_tol: f64,
}

impl<'de> Deserialize<'de> for TangentialDataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = DatasetRepr::deserialize(d)?;
        TangentialDataset::new(r.r, r.rights, r.lefts, r.hermites, r.coincidence_tol).map_err(serde::de::Error::custom)
    }
}

impl TangentialDataset {
    /// Validates counts, grids, directions and Hermite coverage.
    pub fn new(
        r: usize,
        rights: Vec<RightSample>,
        lefts: Vec<LeftSample>,
        mut hermites: Vec<HermiteSample>,
        coincidence_tol: f64,
    ) -> Result<Self> {
        if !(coincidence_tol > 0.0) {
            return Err(MorError::Validation(format!("coincidence tolerance must be positive, got {coincidence_tol}")));
        }
        if rights.len() != r {
            return Err(MorError::Validation(format!(
                "expected {r} right samples, found {}; right sample at index {} is missing",
                rights.len(),
                rights.len().min(r)
            )));
        }
        if lefts.len() != r {
            return Err(MorError::Validation(format!(
                "expected {r} left samples, found {}; left sample at index {} is missing",
                lefts.len(),
                lefts.len().min(r)
            )));
        }
        if r > 0 {
            let u = rights[0].p.grid().clone();
            let y = rights[0].value.grid().clone();
            for (j, s) in rights.iter().enumerate() {
                if s.p.is_zero() {
                    return Err(MorError::Validation(format!("right direction {j} is zero")));
                }
                if !s.p.grid().same_as(&u) || !s.value.grid().same_as(&y) {
                    return Err(MorError::Validation(format!("right sample {j} is on an inconsistent grid")));
                }
            }
            for (i, s) in lefts.iter().enumerate() {
                if s.q.is_zero() {
                    return Err(MorError::Validation(format!("left direction {i} is zero")));
                }
                if !s.q.grid().same_as(&y) || !s.value.grid().same_as(&u) {
                    return Err(MorError::Validation(format!("left sample {i} is on an inconsistent grid")));
                }
            }
        }
        hermites.sort_by_key(|h| (h.i, h.j));
        for w in hermites.windows(2) {
            if (w[0].i, w[0].j) == (w[1].i, w[1].j) {
                return Err(MorError::Validation(format!("duplicate Hermite sample at ({}, {})", w[0].i, w[0].j)));
            }
        }
        for h in &hermites {
            if h.i >= r || h.j >= r {
                return Err(MorError::Validation(format!("Hermite sample ({}, {}) is out of range for r = {r}", h.i, h.j)));
            }
            if (lefts[h.i].rho - rights[h.j].sigma).norm() >= coincidence_tol {
                return Err(MorError::Validation(format!(
                    "Hermite sample ({}, {}) given for non-coincident points",
                    h.i, h.j
                )));
            }
        }
        let ds = TangentialDataset { r, rights, lefts, hermites, coincidence_tol };
        for (i, j) in ds.coincident_pairs() {
            if ds.hermite(i, j).is_none() {
                return Err(MorError::Validation(format!("missing Hermite sample for coincident pair ({i}, {j})")));
            }
        }
        Ok(ds)
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn rights(&self) -> &[RightSample] {
        &self.rights
    }

    pub fn lefts(&self) -> &[LeftSample] {
        &self.lefts
    }

    pub fn hermites(&self) -> &[HermiteSample] {
        &self.hermites
    }

    pub fn coincidence_tol(&self) -> f64 {
        self.coincidence_tol
    }

    pub fn is_coincident(&self, i: usize, j: usize) -> bool {
        (self.lefts[i].rho - self.rights[j].sigma).norm() < self.coincidence_tol
    }

    /// `(i, j)` with `|rho_i - sigma_j| < tol`, in row-major order.
    pub fn coincident_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.r {
            for j in 0..self.r {
                if self.is_coincident(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn hermite(&self, i: usize, j: usize) -> Option<Complex64> {
        self.hermites
            .binary_search_by_key(&(i, j), |h| (h.i, h.j))
            .ok()
            .map(|k| self.hermites[k].value)
    }

    pub fn sigmas(&self) -> Vec<Complex64> {
        self.rights.iter().map(|s| s.sigma).collect()
    }

    pub fn rhos(&self) -> Vec<Complex64> {
        self.lefts.iter().map(|s| s.rho).collect()
    }

    pub fn right_dirs(&self) -> Vec<FunctionVector> {
        self.rights.iter().map(|s| s.p.clone()).collect()
    }

    pub fn left_dirs(&self) -> Vec<FunctionVector> {
        self.lefts.iter().map(|s| s.q.clone()).collect()
    }

    /// Smallest `|rho_i - sigma_j|` over non-coincident pairs, and smallest
    /// separation within each point set.
    pub fn min_separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.r {
            for j in 0..self.r {
                if !self.is_coincident(i, j) {
                    min = min.min((self.lefts[i].rho - self.rights[j].sigma).norm());
                }
                if i < j {
                    min = min.min((self.rights[i].sigma - self.rights[j].sigma).norm());
                    min = min.min((self.lefts[i].rho - self.lefts[j].rho).norm());
                }
            }
        }
        min
    }

    /// Errors unless every right (left) sample has a partner at the conjugate
    /// point with the conjugated direction.
    pub fn check_conjugate_closure(&self, tol: f64) -> Result<()> {
        let points: Vec<Complex64> = self.sigmas();
        let dirs = self.right_dirs();
        check_closure("right", &points, &dirs, tol)?;
        check_closure("left", &self.rhos(), &self.left_dirs(), tol)
    }

    /// Errors when the dataset's grids differ from the model's.
    pub fn check_compatible(&self, model: &dyn TransferFunction) -> Result<()> {
        if self.r == 0 {
            return Ok(());
        }
        let u = self.rights[0].p.grid();
        let y = self.rights[0].value.grid();
        let describe = |g: &QuadratureGrid| format!("{:?} at order {}", g.patch(), g.order());
        if !u.same_as(model.input_grid()) {
            return Err(MorError::Dimension(format!(
                "dataset input grid {} differs from model input grid {}",
                describe(u),
                describe(model.input_grid())
            )));
        }
        if !y.same_as(model.output_grid()) {
            return Err(MorError::Dimension(format!(
                "dataset output grid {} differs from model output grid {}",
                describe(y),
                describe(model.output_grid())
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            if e.is_data() && e.to_string().contains("validation error") {
                MorError::Validation(e.to_string())
            } else {
                MorError::Parse(e)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_json()?.as_bytes())))
    }
}

fn check_closure(side: &str, points: &[Complex64], dirs: &[FunctionVector], tol: f64) -> Result<()> {
    for (k, (z, d)) in points.iter().zip(dirs).enumerate() {
        let found = points.iter().zip(dirs).any(|(w, e)| {
            (w - z.conj()).norm() <= tol * (1.0 + z.norm())
                && e.sub(&d.conj()).map(|diff| diff.norm() <= tol * d.norm()).unwrap_or(false)
        });
        if !found {
            return Err(MorError::Validation(format!("{side} sample {k} at {z} has no conjugate partner")));
        }
    }
    Ok(())
}

/// Direction given in configuration: `"mode:n,m"`, `"const"` or `"random:seed"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DirectionSpec {
    Mode(usize, usize),
    Const,
    Random(u64),
}

impl DirectionSpec {
    pub fn realize(&self, grid: &std::sync::Arc<QuadratureGrid>) -> Result<FunctionVector> {
        match *self {
            DirectionSpec::Mode(n, m) => restrict_mode(n, m, grid),
            DirectionSpec::Const => Ok(FunctionVector::constant(grid, Complex64::new(1.0, 0.0))),
            DirectionSpec::Random(seed) => Ok(FunctionVector::random(grid, seed)),
        }
    }
}

impl FromStr for DirectionSpec {
    type Err = MorError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "const" {
            return Ok(DirectionSpec::Const);
        }
        let bad = || MorError::Validation(format!("bad direction spec {s:?}; expected \"mode:n,m\", \"const\" or \"random:seed\""));
        if let Some(rest) = s.strip_prefix("mode:") {
            let (n, m) = rest.split_once(',').ok_or_else(bad)?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            let m: usize = m.trim().parse().map_err(|_| bad())?;
            if n < 1 || m < 1 {
                return Err(MorError::Domain(format!("mode indices must be >= 1 in {s:?}")));
            }
            return Ok(DirectionSpec::Mode(n, m));
        }
        if let Some(rest) = s.strip_prefix("random:") {
            return Ok(DirectionSpec::Random(rest.trim().parse().map_err(|_| bad())?));
        }
        Err(bad())
    }
}

impl TryFrom<String> for DirectionSpec {
    type Error = MorError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<DirectionSpec> for String {
    fn from(d: DirectionSpec) -> String {
        d.to_string()
    }
}

impl fmt::Display for DirectionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DirectionSpec::Mode(n, m) => write!(f, "mode:{n},{m}"),
            DirectionSpec::Const => write!(f, "const"),
            DirectionSpec::Random(seed) => write!(f, "random:{seed}"),
        }
    }
}

/// Evaluates the system at the given points and directions.
///
/// Hermite scalars are added for every pair closer than [`COINCIDENCE_TOL`].
pub fn collect(
    model: &dyn TransferFunction,
    sigmas: &[Complex64],
    ps: &[FunctionVector],
    rhos: &[Complex64],
    qs: &[FunctionVector],
) -> Result<TangentialDataset> {
    collect_with_tol(model, sigmas, ps, rhos, qs, COINCIDENCE_TOL)
}

pub fn collect_with_tol(
    model: &dyn TransferFunction,
    sigmas: &[Complex64],
    ps: &[FunctionVector],
    rhos: &[Complex64],
    qs: &[FunctionVector],
    coincidence_tol: f64,
) -> Result<TangentialDataset> {
    let r = sigmas.len();
    if ps.len() != r || rhos.len() != r || qs.len() != r {
        return Err(MorError::Dimension(format!(
            "need equal counts, got {} right points, {} right directions, {} left points, {} left directions",
            r,
            ps.len(),
            rhos.len(),
            qs.len()
        )));
    }
    for (j, p) in ps.iter().enumerate() {
        if p.is_zero() {
            return Err(MorError::Validation(format!("right direction {j} is zero")));
        }
    }
    for (i, q) in qs.iter().enumerate() {
        if q.is_zero() {
            return Err(MorError::Validation(format!("left direction {i} is zero")));
        }
    }
    let rights = sigmas
        .par_iter()
        .zip(ps)
        .map(|(&sigma, p)| Ok(RightSample { sigma, p: p.clone(), value: model.apply(sigma, p)? }))
        .collect::<Result<Vec<_>>>()?;
    let lefts = rhos
        .par_iter()
        .zip(qs)
        .map(|(&rho, q)| Ok(LeftSample { rho, q: q.clone(), value: model.apply_adjoint(rho, q)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut hermites = Vec::new();
    for i in 0..r {
        for j in 0..r {
            let gap = (rhos[i] - sigmas[j]).norm();
            if gap < coincidence_tol {
                let d = model.apply_derivative(sigmas[j], &ps[j])?;
                hermites.push(HermiteSample { i, j, value: d.inner(&qs[i])? });
            } else if gap < NEAR_COINCIDENCE {
                log::warn!("left point {i} and right point {j} are {gap:.3e} apart but not coincident; expect ill-conditioning");
            }
        }
    }
    TangentialDataset::new(r, rights, lefts, hermites, coincidence_tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heat2d::{FullModel, HeatConfig};

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    fn model() -> FullModel {
        FullModel::new(&HeatConfig { quad_order: Some(12), ..HeatConfig::with_modes(4) }).unwrap()
    }

    fn dirs(m: &FullModel, r: usize) -> (Vec<FunctionVector>, Vec<FunctionVector>) {
        let ps = (0..r).map(|k| FunctionVector::random(m.con_grid(), k as u64)).collect();
        let qs = (0..r).map(|k| FunctionVector::random(m.obs_grid(), 100 + k as u64)).collect();
        (ps, qs)
    }

    #[test]
    fn distinct_points_have_no_hermite_data() {
        let m = model();
        let (ps, qs) = dirs(&m, 2);
        let d = collect(&m, &[c(1.0), c(2.0)], &ps, &[c(3.0), c(4.0)], &qs).unwrap();
        assert_eq!(d.r(), 2);
        assert!(d.hermites().is_empty());
        assert_eq!(d.rights()[1].value, m.apply_tf(c(2.0), &ps[1]).unwrap());
        assert_eq!(d.lefts()[0].value, m.apply_tf_adjoint(c(3.0), &qs[0]).unwrap());
    }

    #[test]
    fn coincident_pair_gets_one_hermite_entry() {
        let m = model();
        let (ps, qs) = dirs(&m, 2);
        let d = collect(&m, &[c(1.0), c(2.0)], &ps, &[c(1.0), c(4.0)], &qs).unwrap();
        assert_eq!(d.hermites().len(), 1);
        let h = d.hermites()[0];
        assert_eq!((h.i, h.j), (0, 0));
        let expect = m.apply_tf_derivative(c(1.0), &ps[0]).unwrap().inner(&qs[0]).unwrap();
        assert_eq!(h.value, expect);
    }

    #[test]
    fn zero_direction_is_rejected() {
        let m = model();
        let (mut ps, qs) = dirs(&m, 2);
        ps[1] = FunctionVector::zeros(m.con_grid());
        assert!(collect(&m, &[c(1.0), c(2.0)], &ps, &[c(3.0), c(4.0)], &qs).is_err());
    }

    #[test]
    fn point_on_spectrum_is_rejected() {
        let m = model();
        let (ps, qs) = dirs(&m, 1);
        let l = m.eigenvalues()[0];
        assert!(matches!(
            collect(&m, &[c(l)], &ps, &[c(3.0)], &qs),
            Err(MorError::PoleProximity { .. })
        ));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let m = model();
        let (ps, qs) = dirs(&m, 3);
        let s = [Complex64::new(1.0, 0.3), c(2.0), Complex64::new(1.0, -0.3)];
        let d = collect(&m, &s, &ps, &[c(2.0), c(7.0), c(1.0 / 3.0)], &qs).unwrap();
        let text = d.to_json().unwrap();
        let back = TangentialDataset::from_json(&text).unwrap();
        assert_eq!(back, d);
        assert_eq!(back.hash().unwrap(), d.hash().unwrap());
        assert!(text.contains("\"sigma\":[1.0,0.3]"));
    }

    #[test]
    fn missing_left_sample_names_index() {
        let m = model();
        let (ps, qs) = dirs(&m, 2);
        let d = collect(&m, &[c(1.0), c(2.0)], &ps, &[c(3.0), c(4.0)], &qs).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&d.to_json().unwrap()).unwrap();
        v["lefts"].as_array_mut().unwrap().pop();
        let err = TangentialDataset::from_json(&v.to_string()).unwrap_err();
        assert!(matches!(err, MorError::Validation(_)));
        assert!(err.to_string().contains("index 1"), "{err}");
    }

    #[test]
    fn malformed_json_reports_line() {
        let err = TangentialDataset::from_json("{\n \"r\": 1,\n \"rights\": [oops]\n}").unwrap_err();
        assert!(matches!(err, MorError::Parse(_)));
        assert!(err.to_string().contains("line 3"), "{err}");
    }

    #[test]
    fn missing_hermite_is_a_validation_error() {
        let m = model();
        let (ps, qs) = dirs(&m, 1);
        let d = collect(&m, &[c(1.0)], &ps, &[c(1.0)], &qs).unwrap();
        let err = TangentialDataset::new(1, d.rights().to_vec(), d.lefts().to_vec(), vec![], COINCIDENCE_TOL);
        assert!(err.is_err());
    }

    #[test]
    fn direction_specs_parse() {
        assert_eq!("mode:2,3".parse::<DirectionSpec>().unwrap(), DirectionSpec::Mode(2, 3));
        assert_eq!("const".parse::<DirectionSpec>().unwrap(), DirectionSpec::Const);
        assert_eq!("random:42".parse::<DirectionSpec>().unwrap(), DirectionSpec::Random(42));
        assert!("mode:0,1".parse::<DirectionSpec>().is_err());
        assert!("bogus".parse::<DirectionSpec>().is_err());
        let m = model();
        let a = DirectionSpec::Random(7).realize(m.con_grid()).unwrap();
        let b = DirectionSpec::Random(7).realize(m.con_grid()).unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-14);
        let s: String = DirectionSpec::Mode(1, 2).into();
        assert_eq!(s, "mode:1,2");
    }

    #[test]
    fn conjugate_closure_check() {
        let m = model();
        let p = FunctionVector::random(m.con_grid(), 1);
        let q = FunctionVector::random(m.obs_grid(), 2);
        let z = Complex64::new(2.0, 1.0);
        let closed = collect(&m, &[z, z.conj()], &[p.clone(), p.conj()], &[z + 1.0, z.conj() + 1.0], &[q.clone(), q.conj()], ).unwrap();
        assert!(closed.check_conjugate_closure(1e-12).is_ok());
        let open = collect(&m, &[z, z.conj()], &[p.clone(), p.clone()], &[z + 1.0, z.conj() + 1.0], &[q.clone(), q.conj()]).unwrap();
        assert!(open.check_conjugate_closure(1e-12).is_err());
    }

    #[test]
    fn grid_mismatch_reported_on_use() {
        let m = model();
        let (ps, qs) = dirs(&m, 1);
        let d = collect(&m, &[c(1.0)], &ps, &[c(2.0)], &qs).unwrap();
        let other = FullModel::new(&HeatConfig { quad_order: Some(14), ..HeatConfig::with_modes(4) }).unwrap();
        let back = TangentialDataset::from_json(&d.to_json().unwrap()).unwrap();
        assert!(back.check_compatible(&m).is_ok());
        assert!(matches!(back.check_compatible(&other), Err(MorError::Dimension(_))));
    }
}
