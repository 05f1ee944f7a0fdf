//! Shared fixtures for the pipeline benchmarks.

use mor_core::samples::{self, DirectionSpec};
use mor_core::{Complex64, FullModel, FunctionVector, HeatConfig, TangentialDataset};

pub const SIGMAS: [Complex64; 4] = [c(1.0, 0.0), c(2.0, 0.0), c(5.0, 1.0), c(5.0, -1.0)];
pub const RHOS: [Complex64; 4] = [c(1.5, 0.0), c(3.0, 0.0), c(6.0, 2.0), c(6.0, -2.0)];
const MODES: [(usize, usize); 4] = [(1, 1), (1, 2), (2, 1), (2, 2)];

const fn c(re: f64, im: f64) -> Complex64 {
    Complex64 { re, im }
}

pub fn model(n_modes: usize) -> FullModel {
    FullModel::new(&HeatConfig::with_modes(n_modes)).expect("default patches are valid")
}

/// Lowest-mode directions on both patches.
pub fn directions(m: &FullModel) -> (Vec<FunctionVector>, Vec<FunctionVector>) {
    let realize = |grid| MODES.iter().map(|&(a, b)| DirectionSpec::Mode(a, b).realize(grid).expect("valid mode")).collect();
    (realize(m.con_grid()), realize(m.obs_grid()))
}

pub fn dataset(m: &FullModel) -> TangentialDataset {
    let (ps, qs) = directions(m);
    samples::collect(m, &SIGMAS, &ps, &RHOS, &qs).expect("points are off the spectrum")
}
