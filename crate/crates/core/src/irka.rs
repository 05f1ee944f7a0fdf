//! Fixed-point iteration toward the tangential H2 optimality conditions:
//! interpolate at the mirror images `-conj(lambda_i)` of the current reduced
//! poles along the current residue directions until the points stop moving.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{MorError, Result};
use crate::funcspace::FunctionVector;
use crate::h2;
use crate::loewner;
use crate::rom::{PoleResidue, ReducedModel};
use crate::samples::{self, DirectionSpec};
use crate::system::TransferFunction;

/// Largest order for which point matching tries every permutation.
pub const EXHAUSTIVE_MATCH_MAX: usize = 7;

/// `converged` promises `max optimality residual < CERTIFICATE_FACTOR * point_tol`.
pub const CERTIFICATE_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrkaConfig {
    pub r: usize,
    #[serde(default)]
    pub init_points: Vec<Complex64>,
    #[serde(default)]
    pub init_right_dirs: Vec<DirectionSpec>,
    #[serde(default)]
    pub init_left_dirs: Vec<DirectionSpec>,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_point_tol")]
    pub point_tol: f64,
    #[serde(default)]
    pub stability_reflection: bool,
}

fn default_max_iter() -> usize {
    50
}

fn default_point_tol() -> f64 {
    1e-8
}

/// The `r` lowest modes in order of `n^2 + m^2`, ties broken by `n`.
pub fn lowest_modes(r: usize) -> Vec<(usize, usize)> {
    let k = r + 1;
    let mut all: Vec<(usize, usize)> = (1..=k).flat_map(|n| (1..=k).map(move |m| (n, m))).collect();
    all.sort_by_key(|&(n, m)| (n * n + m * m, n));
    all.truncate(r);
    all
}

/// `r` points log-spaced on `[lo, hi]` of the positive real axis.
pub fn logspace(r: usize, lo: f64, hi: f64) -> Vec<Complex64> {
    if r == 1 {
        return vec![Complex64::new(lo, 0.0)];
    }
    (0..r)
        .map(|k| Complex64::new(lo * (hi / lo).powf(k as f64 / (r - 1) as f64), 0.0))
        .collect()
}

/// Parses `"logspace:lo,hi"` or a comma-separated list of real points.
pub fn parse_points(spec: &str, r: usize) -> Result<Vec<Complex64>> {
    let bad = |why: &str| MorError::Validation(format!("bad point spec {spec:?}: {why}"));
    if let Some(rest) = spec.strip_prefix("logspace:") {
        let (lo, hi) = rest.split_once(',').ok_or_else(|| bad("expected logspace:lo,hi"))?;
        let lo: f64 = lo.trim().parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad("hi is not a number"))?;
        if !(lo > 0.0 && hi >= lo) {
            return Err(bad("need 0 < lo <= hi"));
        }
        return Ok(logspace(r, lo, hi));
    }
    let pts = spec
        .split(',')
        .map(|t| t.trim().parse::<f64>().map(|x| Complex64::new(x, 0.0)).map_err(|_| bad("not a number")))
        .collect::<Result<Vec<_>>>()?;
    if pts.len() != r {
        return Err(bad(&format!("{} points for order {r}", pts.len())));
    }
    Ok(pts)
}

impl IrkaConfig {
    /// Log-spaced points on `[1, 10 |lambda_11|]`, lowest modes as directions.
    pub fn with_defaults(r: usize, stability_margin: f64) -> Self {
        let modes: Vec<DirectionSpec> = lowest_modes(r).into_iter().map(|(n, m)| DirectionSpec::Mode(n, m)).collect();
        IrkaConfig {
            r,
            init_points: logspace(r, 1.0, 10.0 * stability_margin),
            init_right_dirs: modes.clone(),
            init_left_dirs: modes,
            max_iter: default_max_iter(),
            point_tol: default_point_tol(),
            stability_reflection: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 {
            return Err(MorError::Validation("order r must be at least 1".into()));
        }
        if !(self.point_tol > 0.0) {
            return Err(MorError::Validation(format!("point_tol must be positive, got {}", self.point_tol)));
        }
        if self.init_points.len() != self.r || self.init_right_dirs.len() != self.r || self.init_left_dirs.len() != self.r {
            return Err(MorError::Validation(format!(
                "order {} needs {0} initial points and directions, got {}, {}, {}",
                self.r,
                self.init_points.len(),
                self.init_right_dirs.len(),
                self.init_left_dirs.len()
            )));
        }
        if let Some(z) = self.init_points.iter().find(|z| !(z.re > 0.0)) {
            return Err(MorError::Validation(format!("initial point {z} is not in the right half-plane")));
        }
        Ok(())
    }

    /// Fills missing points and directions from the defaults.
    pub fn completed(mut self, stability_margin: f64) -> Self {
        let d = IrkaConfig::with_defaults(self.r, stability_margin);
        if self.init_points.is_empty() {
            self.init_points = d.init_points;
        }
        if self.init_right_dirs.is_empty() {
            self.init_right_dirs = d.init_right_dirs;
        }
        if self.init_left_dirs.is_empty() {
            self.init_left_dirs = d.init_left_dirs;
        }
        self
    }
}

/// Rotates `(b, c)` jointly so the largest-modulus value of `b` is real positive;
/// the rank-1 term `<., b> c` is unchanged.
fn canonical_phase(b: &FunctionVector, c: &FunctionVector) -> (FunctionVector, FunctionVector) {
    let pivot = b
        .values()
        .iter()
        .fold(Complex64::new(0.0, 0.0), |best, v| if v.norm() > best.norm() { *v } else { best });
    if pivot.norm() == 0.0 {
        return (b.clone(), c.clone());
    }
    let phase = (pivot / pivot.norm()).conj();
    (b.scaled(phase), c.scaled(phase))
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub rom: ReducedModel,
    pub pole_residue: PoleResidue,
    pub next_points: Vec<Complex64>,
    pub next_right_dirs: Vec<FunctionVector>,
    pub next_left_dirs: Vec<FunctionVector>,
    /// `||b_i|| ||c_i||`, the residue magnitude removed by normalization.
    pub residue_scales: Vec<f64>,
}

/// One interpolation-and-mirroring update.
pub fn step(
    full: &dyn TransferFunction,
    points: &[Complex64],
    right_dirs: &[FunctionVector],
    left_dirs: &[FunctionVector],
    stability_reflection: bool,
) -> Result<StepOutput> {
    let data = samples::collect(full, points, right_dirs, points, left_dirs)?;
    let rom = loewner::assemble(&data)?;
    let pr = rom.pole_residue()?;
    let mut next_points = Vec::with_capacity(pr.r());
    let mut next_right_dirs = Vec::with_capacity(pr.r());
    let mut next_left_dirs = Vec::with_capacity(pr.r());
    let mut residue_scales = Vec::with_capacity(pr.r());
    for ((&l, b), c) in pr.poles().iter().zip(pr.b_dirs()).zip(pr.c_dirs()) {
        let l = if stability_reflection && l.re >= 0.0 { -l.conj() } else { l };
        next_points.push(-l.conj());
        residue_scales.push(b.norm() * c.norm());
        let (b, c) = canonical_phase(&b.normalized()?, &c.normalized()?);
        next_right_dirs.push(b);
        next_left_dirs.push(c);
    }
    Ok(StepOutput { rom, pole_residue: pr, next_points, next_right_dirs, next_left_dirs, residue_scales })
}

/// Permutation `perm` minimizing `sum_i |new[perm[i]] - old[i]|`.
///
/// Exhaustive for `r <= EXHAUSTIVE_MATCH_MAX`, first minimum in lexicographic
/// permutation order. Otherwise greedy over pairs sorted by distance, then by
/// the old point's real and imaginary parts.
pub fn match_points(old: &[Complex64], new: &[Complex64]) -> Vec<usize> {
    let r = old.len();
    if r <= EXHAUSTIVE_MATCH_MAX {
        let mut perm: Vec<usize> = (0..r).collect();
        let mut best = perm.clone();
        let mut best_cost = f64::INFINITY;
        loop {
            let cost: f64 = (0..r).map(|i| (new[perm[i]] - old[i]).norm()).sum();
            if cost < best_cost {
                best_cost = cost;
                best = perm.clone();
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        return best;
    }
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(r * r);
    for i in 0..r {
        for j in 0..r {
            pairs.push(((new[j] - old[i]).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(old[a.1].re.total_cmp(&old[b.1].re))
            .then(old[a.1].im.total_cmp(&old[b.1].im))
            .then(a.2.cmp(&b.2))
    });
    let mut perm = vec![usize::MAX; r];
    let mut used = vec![false; r];
    for (_, i, j) in pairs {
        if perm[i] == usize::MAX && !used[j] {
            perm[i] = j;
            used[j] = true;
        }
    }
    perm
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

/// `max_i |new_i - old_i| / max(|old_i|, 1)` after matching.
pub fn point_movement(old: &[Complex64], new: &[Complex64]) -> f64 {
    old.iter().zip(new).map(|(a, b)| (b - a).norm() / a.norm().max(1.0)).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub iterations: usize,
    pub points: Vec<Vec<Complex64>>,
    pub movement: Vec<f64>,
    /// `None` when the iterate was unstable.
    pub max_residual: Vec<Option<f64>>,
    pub h2_error: Vec<Option<f64>>,
    pub converged: bool,
    pub final_residuals: Option<h2::OptimalityReport>,
    pub point_tol: f64,
}

#[derive(Debug, Clone)]
pub struct IrkaOutcome {
    /// Last iterate when converged, otherwise the iterate with the smallest H2 error.
    pub rom: Option<ReducedModel>,
    pub report: ConvergenceReport,
}

pub fn run(full: &dyn TransferFunction, config: &IrkaConfig) -> Result<IrkaOutcome> {
    config.validate()?;
    let mut points = config.init_points.clone();
    let mut right = config
        .init_right_dirs
        .iter()
        .map(|d| d.realize(full.input_grid()))
        .collect::<Result<Vec<_>>>()?;
    let mut left = config
        .init_left_dirs
        .iter()
        .map(|d| d.realize(full.output_grid()))
        .collect::<Result<Vec<_>>>()?;
    let mut report = ConvergenceReport {
        iterations: 0,
        points: Vec::new(),
        movement: Vec::new(),
        max_residual: Vec::new(),
        h2_error: Vec::new(),
        converged: false,
        final_residuals: None,
        point_tol: config.point_tol,
    };
    let mut last: Option<ReducedModel> = None;
    let mut best: Option<(f64, ReducedModel)> = None;
    for it in 0..config.max_iter {
        let out = step(full, &points, &right, &left, config.stability_reflection)
            .map_err(|e| MorError::Iteration { iteration: it + 1, source: Box::new(e) })?;
        let perm = match_points(&points, &out.next_points);
        let next: Vec<Complex64> = perm.iter().map(|&j| out.next_points[j]).collect();
        right = perm.iter().map(|&j| out.next_right_dirs[j].clone()).collect();
        left = perm.iter().map(|&j| out.next_left_dirs[j].clone()).collect();
        let movement = point_movement(&points, &next);
        let stable = out.pole_residue.stability().0;
        let err = if stable { h2::h2_error_pole_residue(full, &out.pole_residue).ok() } else { None };
        let res = if stable {
            h2::optimality_residuals_pole_residue(full, &out.pole_residue).ok().map(|r| r.max)
        } else {
            None
        };
        log::info!("iteration {}: movement {movement:.3e}, residual {res:?}, h2 error {err:?}", it + 1);
        report.iterations = it + 1;
        report.points.push(next.clone());
        report.movement.push(movement);
        report.max_residual.push(res);
        report.h2_error.push(err);
        if let Some(e) = err {
            if best.as_ref().is_none_or(|(b, _)| e < *b) {
                best = Some((e, out.rom.clone()));
            }
        }
        last = Some(out.rom);
        points = next;
        if movement < config.point_tol {
            report.converged = true;
            break;
        }
    }
    let rom = if report.converged { last } else { best.map(|(_, r)| r).or(last) };
    if let Some(rom) = &rom {
        report.final_residuals = rom
            .pole_residue()
            .ok()
            .filter(|pr| pr.stability().0)
            .and_then(|pr| h2::optimality_residuals_pole_residue(full, &pr).ok());
    }
    Ok(IrkaOutcome { rom, report })
}

impl ConvergenceReport {
    /// Rows `(iteration, movement, residual, h2_error)` for plotting.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "movement", "residual", "h2_error"])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for k in 0..self.iterations {
            w.write_record([
                (k + 1).to_string(),
                format!("{:e}", self.movement[k]),
                opt(self.max_residual[k]),
                opt(self.h2_error[k]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::{Patch, QuadratureGrid};
    use crate::heat2d::{FullModel, HeatConfig};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn toy() -> PoleResidue {
        let u = QuadratureGrid::new(Patch::square(0.1, 0.3).unwrap(), 5).unwrap();
        let y = QuadratureGrid::new(Patch::square(0.6, 0.8).unwrap(), 5).unwrap();
        PoleResidue::rank_one(c(-1.0, 0.0), FunctionVector::random(&u, 1), FunctionVector::random(&y, 2)).unwrap()
    }

    #[test]
    fn lowest_mode_order() {
        assert_eq!(lowest_modes(4), vec![(1, 1), (1, 2), (2, 1), (2, 2)]);
        assert_eq!(lowest_modes(6)[4..], [(1, 3), (3, 1)]);
    }

    #[test]
    fn logspace_endpoints() {
        let p = logspace(3, 1.0, 100.0);
        assert!((p[1].re - 10.0).abs() < 1e-12 && (p[2].re - 100.0).abs() < 1e-12);
        assert_eq!(parse_points("1, 10", 2).unwrap(), vec![c(1.0, 0.0), c(10.0, 0.0)]);
        assert_eq!(parse_points("logspace:1,100", 3).unwrap().len(), 3);
        assert!(parse_points("1,2", 3).is_err());
    }

    #[test]
    fn matching_recovers_permutation() {
        let old = [c(1.0, 0.0), c(5.0, 1.0), c(5.0, -1.0), c(20.0, 0.0)];
        let new = [c(5.1, -1.0), c(19.0, 0.0), c(1.1, 0.0), c(5.1, 1.0)];
        assert_eq!(match_points(&old, &new), vec![2, 3, 0, 1]);
        let big: Vec<Complex64> = (0..9).map(|k| c(k as f64 + 1.0, 0.0)).collect();
        let shuffled: Vec<Complex64> = [3, 0, 8, 1, 2, 7, 6, 5, 4].iter().map(|&k| big[k] + 0.01).collect();
        let perm = match_points(&big, &shuffled);
        for (i, &j) in perm.iter().enumerate() {
            assert!((shuffled[j] - big[i]).norm() < 0.02);
        }
    }

    #[test]
    fn rank_one_toy_converges_to_mirror_point() {
        let g = toy();
        let cfg = IrkaConfig {
            r: 1,
            init_points: vec![c(1.0, 0.0)],
            init_right_dirs: vec![DirectionSpec::Const],
            init_left_dirs: vec![DirectionSpec::Const],
            max_iter: 10,
            point_tol: 1e-10,
            stability_reflection: false,
        };
        let out = run(&g, &cfg).unwrap();
        assert!(out.report.converged);
        assert!(out.report.iterations <= 10);
        assert!((out.report.points.last().unwrap()[0] - 1.0).norm() < 1e-9);
        let err = h2::h2_error(&g, out.rom.as_ref().unwrap()).unwrap();
        assert!(err < 1e-10);
    }

    #[test]
    fn zero_iterations() {
        let g = toy();
        let cfg = IrkaConfig { max_iter: 0, ..IrkaConfig::with_defaults(1, 1.0) };
        let out = run(&g, &cfg).unwrap();
        assert_eq!(out.report.iterations, 0);
        assert!(!out.report.converged);
        assert!(out.rom.is_none());
    }

    #[test]
    fn point_on_spectrum_fails_at_collection() {
        let m = FullModel::new(&HeatConfig { quad_order: Some(12), ..HeatConfig::with_modes(3) }).unwrap();
        let p = vec![DirectionSpec::Mode(1, 1).realize(m.con_grid()).unwrap()];
        let q = vec![DirectionSpec::Mode(1, 1).realize(m.obs_grid()).unwrap()];
        let lambda = c(m.eigenvalues()[0], 0.0);
        assert!(matches!(step(&m, &[lambda], &p, &q, false), Err(MorError::PoleProximity { .. })));
    }

    #[test]
    fn fixed_point_is_reproduced() {
        let m = FullModel::new(&HeatConfig::with_modes(6)).unwrap();
        // Linear contraction: the stopping movement bounds the distance to the fixed point only up to a constant.
        let cfg = IrkaConfig {
            init_points: vec![c(1.0, 0.0), c(10.0, 0.0)],
            point_tol: 1e-12,
            max_iter: 100,
            ..IrkaConfig::with_defaults(2, m.stability_margin())
        };
        let out = run(&m, &cfg).unwrap();
        assert!(out.report.converged);
        let pr = out.rom.unwrap().pole_residue().unwrap();
        let points: Vec<Complex64> = pr.poles().iter().map(|l| -l.conj()).collect();
        let b: Vec<_> = pr.b_dirs().iter().map(|f| f.normalized().unwrap()).collect();
        let cc: Vec<_> = pr.c_dirs().iter().map(|f| f.normalized().unwrap()).collect();
        let again = step(&m, &points, &b, &cc, false).unwrap();
        let perm = match_points(&points, &again.next_points);
        for (i, &j) in perm.iter().enumerate() {
            assert!((again.next_points[j] - points[i]).norm() <= 1e-9 * points[i].norm().max(1.0));
        }
    }

    #[test]
    fn conjugate_closure_is_preserved() {
        let m = FullModel::new(&HeatConfig::with_modes(6)).unwrap();
        let cfg = IrkaConfig {
            init_points: vec![c(2.0, 0.0), c(20.0, 10.0), c(20.0, -10.0)],
            max_iter: 8,
            ..IrkaConfig::with_defaults(3, m.stability_margin())
        };
        let out = run(&m, &cfg).unwrap();
        for pts in &out.report.points {
            for z in pts {
                let partner = pts.iter().map(|w| (w - z.conj()).norm()).fold(f64::INFINITY, f64::min);
                assert!(partner <= 1e-10 * z.norm().max(1.0), "{pts:?}");
            }
        }
    }

    #[test]
    fn config_json_defaults() {
        let cfg: IrkaConfig = serde_json::from_str(r#"{"r": 2, "init_right_dirs": ["mode:1,1", "const"]}"#).unwrap();
        assert_eq!(cfg.max_iter, 50);
        assert_eq!(cfg.init_right_dirs[1], DirectionSpec::Const);
        let full = cfg.completed(20.0);
        assert_eq!(full.init_points.len(), 2);
        assert_eq!(full.init_left_dirs, vec![DirectionSpec::Mode(1, 1), DirectionSpec::Mode(1, 2)]);
        assert!(full.validate().is_ok());
        let bad = IrkaConfig { point_tol: 0.0, ..full };
        assert!(bad.validate().is_err());
    }
}
