use std::path::Path;

use mor_core::heat2d::HeatConfig;
use mor_core::irka::{self, IrkaConfig};
use mor_core::samples::DirectionSpec;
use mor_core::{Complex64, MorError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const TOP_LEVEL_KEYS: &[&str] = &["con_patch", "obs_patch", "n_modes", "quad_order", "sample", "irka", "h2", "simulate"];

/// Model description plus optional per-task blocks.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub model: HeatConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irka: Option<IrkaBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h2: Option<H2Block>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateBlock>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleBlock {
    pub sigmas: Vec<Complex64>,
    pub rhos: Vec<Complex64>,
    pub right_dirs: Vec<DirectionSpec>,
    pub left_dirs: Vec<DirectionSpec>,
    #[serde(default = "default_coincidence_tol")]
    pub coincidence_tol: f64,
}

fn default_coincidence_tol() -> f64 {
    mor_core::samples::COINCIDENCE_TOL
}

/// Either `"logspace:lo,hi"` / `"1,10"` or an explicit list of complex points.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitPoints {
    Spec(String),
    Points(Vec<Complex64>),
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IrkaBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<InitPoints>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub init_right_dirs: Vec<DirectionSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub init_left_dirs: Vec<DirectionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub point_tol: Option<f64>,
    #[serde(default)]
    pub stability_reflection: bool,
    /// Random initial directions from this seed when no directions are given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct H2Block {
    #[serde(default = "default_omega_min")]
    pub omega_min: f64,
    #[serde(default = "default_omega_max")]
    pub omega_max: f64,
    #[serde(default = "default_omega_points")]
    pub omega_points: usize,
}

impl Default for H2Block {
    fn default() -> Self {
        H2Block { omega_min: default_omega_min(), omega_max: default_omega_max(), omega_points: default_omega_points() }
    }
}

fn default_omega_min() -> f64 {
    1e-2
}

fn default_omega_max() -> f64 {
    1e4
}

fn default_omega_points() -> usize {
    121
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_direction")]
    pub direction: DirectionSpec,
    /// `"step"`, `"sine:omega"` or `"exp:rate"`.
    #[serde(default = "default_signal")]
    pub signal: String,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock { dt: default_dt(), horizon: default_horizon(), direction: default_direction(), signal: default_signal() }
    }
}

fn default_dt() -> f64 {
    0.01
}

fn default_horizon() -> f64 {
    2.0
}

fn default_direction() -> DirectionSpec {
    DirectionSpec::Mode(1, 1)
}

fn default_signal() -> String {
    "step".into()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Signal {
    Step,
    Sine(f64),
    Exp(f64),
}

impl Signal {
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || MorError::Validation(format!("bad signal {s:?}; expected \"step\", \"sine:omega\" or \"exp:rate\""));
        if s == "step" {
            return Ok(Signal::Step);
        }
        let (kind, arg) = s.split_once(':').ok_or_else(bad)?;
        let x: f64 = arg.trim().parse().map_err(|_| bad())?;
        match kind {
            "sine" => Ok(Signal::Sine(x)),
            "exp" => Ok(Signal::Exp(x)),
            _ => Err(bad()),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Signal::Step => 1.0,
            Signal::Sine(w) => (w * t).sin(),
            Signal::Exp(a) => (-a * t).exp(),
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(MorError::Validation(format!("{name} must be positive, got {x}")))
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value.as_object().ok_or_else(|| MorError::Validation("config must be a JSON object".into()))?;
        if let Some(k) = obj.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
            return Err(MorError::Validation(format!("unknown config key {k:?}")));
        }
        let cfg: RunConfig = serde_json::from_value(value)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| MorError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.n_modes < 1 {
            return Err(MorError::Validation("n_modes must be at least 1".into()));
        }
        if let Some(s) = &self.sample {
            positive("sample.coincidence_tol", s.coincidence_tol)?;
        }
        if let Some(b) = &self.irka {
            if let Some(t) = b.point_tol {
                positive("irka.point_tol", t)?;
            }
        }
        if let Some(h) = &self.h2 {
            positive("h2.omega_min", h.omega_min)?;
            if !(h.omega_max >= h.omega_min) || h.omega_points < 2 {
                return Err(MorError::Validation("h2 needs omega_min <= omega_max and at least 2 points".into()));
            }
        }
        if let Some(s) = &self.simulate {
            positive("simulate.dt", s.dt)?;
            positive("simulate.horizon", s.horizon)?;
            Signal::parse(&s.signal)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical serialization of the effective configuration.
    pub fn hash(&self) -> Result<String> {
        let text = serde_json::to_string(self)?;
        Ok(hex::encode(Sha256::digest(text.as_bytes())))
    }

    pub fn require_sample(&self) -> Result<&SampleBlock> {
        self.sample.as_ref().ok_or_else(|| MorError::Validation("config has no \"sample\" block".into()))
    }
}

impl IrkaBlock {
    pub fn to_config(&self, stability_margin: f64) -> Result<IrkaConfig> {
        let r = self.r.ok_or_else(|| MorError::Validation("IRKA order r is not set (use --order or irka.r)".into()))?;
        let init_points = match &self.init {
            None => Vec::new(),
            Some(InitPoints::Spec(s)) => irka::parse_points(s, r)?,
            Some(InitPoints::Points(p)) => p.clone(),
        };
        let seeded = |offset: u64| -> Vec<DirectionSpec> {
            match self.seed {
                Some(seed) => (0..r as u64).map(|k| DirectionSpec::Random(seed.wrapping_add(2 * k + offset))).collect(),
                None => Vec::new(),
            }
        };
        let init_right_dirs = if self.init_right_dirs.is_empty() { seeded(0) } else { self.init_right_dirs.clone() };
        let init_left_dirs = if self.init_left_dirs.is_empty() { seeded(1) } else { self.init_left_dirs.clone() };
        let defaults = IrkaConfig::with_defaults(r, stability_margin);
        let cfg = IrkaConfig {
            r,
            init_points,
            init_right_dirs,
            init_left_dirs,
            max_iter: self.max_iter.unwrap_or(defaults.max_iter),
            point_tol: self.point_tol.unwrap_or(defaults.point_tol),
            stability_reflection: self.stability_reflection,
        }
        .completed(stability_margin);
        cfg.validate()?;
        Ok(cfg)
    }
}
