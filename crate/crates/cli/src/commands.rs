use std::io::Write;
use std::path::Path;

use mor_core::h2::{self, OptimalityReport};
use mor_core::irka;
use mor_core::loewner;
use mor_core::projection_oracle;
use mor_core::samples::{self, TangentialDataset};
use mor_core::{Complex64, FullModel, FunctionVector, MorError, ReducedModel, Result, TimeSeries};
use serde::Serialize;
use serde_json::json;

use crate::config::{H2Block, InitPoints, RunConfig, Signal};
use crate::report::{emit, sha256_hex, Header};
use crate::{Command, ModelArgs};

struct Setup {
    config: RunConfig,
    model: FullModel,
    hash: String,
}

fn setup(args: &ModelArgs, edit: impl FnOnce(&mut RunConfig)) -> Result<Setup> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(n) = args.n_modes {
        config.model.n_modes = n;
    }
    if let Some(k) = args.quad_order {
        config.model.quad_order = Some(k);
    }
    edit(&mut config);
    config.validate()?;
    let model = FullModel::new(&config.model)?;
    let hash = config.hash()?;
    Ok(Setup { config, model, hash })
}

fn stamp(rom: &mut ReducedModel, hash: &str) {
    let p = rom.provenance_mut();
    p.insert("config_sha256".into(), json!(hash));
    p.insert("tool_version".into(), json!(env!("CARGO_PKG_VERSION")));
}

pub fn dispatch(command: Command) -> Result<bool> {
    match command {
        Command::Sample { model, out } => sample(&model, &out),
        Command::Reduce { model, data, out, method } => reduce(&model, &data, &out, &method),
        Command::Validate { model, rom, data, tol, out } => validate(&model, &rom, data.as_deref(), tol, out.as_deref()),
        Command::H2 { model, rom, out, csv } => h2_report(&model, rom.as_deref(), out.as_deref(), csv.as_deref()),
        Command::Irka { model, order, init, tol, max_iter, seed, out, report, csv } => {
            let flags = IrkaFlags { order, init, tol, max_iter, seed };
            irka_run(&model, flags, &out, report.as_deref(), csv.as_deref())
        }
        Command::Simulate { model, rom, input, out, full_csv, rom_csv } => {
            simulate(&model, &rom, input.as_deref(), out.as_deref(), full_csv.as_deref(), rom_csv.as_deref())
        }
    }
}

fn collect_from_config(s: &Setup) -> Result<TangentialDataset> {
    let block = s.config.require_sample()?;
    let ps = block.right_dirs.iter().map(|d| d.realize(s.model.con_grid())).collect::<Result<Vec<_>>>()?;
    let qs = block.left_dirs.iter().map(|d| d.realize(s.model.obs_grid())).collect::<Result<Vec<_>>>()?;
    samples::collect_with_tol(&s.model, &block.sigmas, &ps, &block.rhos, &qs, block.coincidence_tol)
}

fn sample(args: &ModelArgs, out: &Path) -> Result<bool> {
    let s = setup(args, |_| {})?;
    let data = collect_from_config(&s)?;
    data.save(out)?;
    let body = json!({
        "dataset_sha256": data.hash()?,
        "r": data.r(),
        "min_separation": data.min_separation(),
        "coincident_pairs": data.coincident_pairs(),
    });
    emit(&Header::new("sample", s.hash), body, None)?;
    Ok(true)
}

fn load_dataset(path: &Path, model: &FullModel) -> Result<TangentialDataset> {
    let data = TangentialDataset::load(path)?;
    data.check_compatible(model)?;
    Ok(data)
}

fn reduce(args: &ModelArgs, data: &Path, out: &Path, method: &str) -> Result<bool> {
    let s = setup(args, |_| {})?;
    let data = load_dataset(data, &s.model)?;
    let mut rom = match method {
        "loewner" => loewner::assemble(&data)?,
        "projection" => {
            let (v, w) = projection_oracle::build_bases(&s.model, &data.sigmas(), &data.right_dirs(), &data.rhos(), &data.left_dirs())?;
            let mut rom = projection_oracle::project_explicit(&s.model, &v, &w)?;
            rom.provenance_mut().insert("dataset_sha256".into(), json!(data.hash()?));
            rom
        }
        other => return Err(MorError::Validation(format!("unknown method {other:?}; expected loewner or projection"))),
    };
    stamp(&mut rom, &s.hash);
    rom.save(out)?;
    let body = json!({ "method": method, "r": rom.r(), "e_condition": rom.e_condition() });
    emit(&Header::new("reduce", s.hash), body, None)?;
    Ok(true)
}

#[derive(Serialize)]
struct Check {
    index: Vec<usize>,
    point: Complex64,
    residual: f64,
    pass: bool,
}

#[derive(Serialize)]
struct ValidationBody {
    rom_sha256: String,
    dataset_sha256: String,
    tol: f64,
    right: Vec<Check>,
    left: Vec<Check>,
    hermite: Vec<Check>,
    max_residual: f64,
    all_pass: bool,
}

fn relative(diff: f64, reference: f64) -> f64 {
    if reference > 0.0 {
        diff / reference
    } else {
        diff
    }
}

fn interpolation_checks(rom: &ReducedModel, data: &TangentialDataset, tol: f64) -> Result<(Vec<Check>, Vec<Check>, Vec<Check>)> {
    let check = |index: Vec<usize>, point, residual: f64| Check { index, point, residual, pass: residual <= tol };
    let mut right = Vec::new();
    for (j, smp) in data.rights().iter().enumerate() {
        let g = rom.eval_tf(smp.sigma, &smp.p)?;
        right.push(check(vec![j], smp.sigma, relative(smp.value.sub(&g)?.norm(), smp.value.norm())));
    }
    let mut left = Vec::new();
    for (i, smp) in data.lefts().iter().enumerate() {
        let g = rom.eval_tf_adjoint(smp.rho, &smp.q)?;
        left.push(check(vec![i], smp.rho, relative(smp.value.sub(&g)?.norm(), smp.value.norm())));
    }
    let mut hermite = Vec::new();
    for h in data.hermites() {
        let smp = &data.rights()[h.j];
        let d = rom.eval_tf_derivative(smp.sigma, &smp.p)?.inner(&data.lefts()[h.i].q)?;
        hermite.push(check(vec![h.i, h.j], smp.sigma, relative((d - h.value).norm(), h.value.norm())));
    }
    Ok((right, left, hermite))
}

fn validate(args: &ModelArgs, rom_path: &Path, data: Option<&Path>, tol: f64, out: Option<&Path>) -> Result<bool> {
    if !(tol > 0.0) {
        return Err(MorError::Validation(format!("--tol must be positive, got {tol}")));
    }
    let s = setup(args, |_| {})?;
    let rom = ReducedModel::load(rom_path)?;
    let data = match data {
        Some(p) => load_dataset(p, &s.model)?,
        None => collect_from_config(&s)?,
    };
    if data.r() != rom.r() {
        return Err(MorError::Dimension(format!("dataset has r = {}, reduced model has r = {}", data.r(), rom.r())));
    }
    let (right, left, hermite) = interpolation_checks(&rom, &data, tol)?;
    let max_residual = right.iter().chain(&left).chain(&hermite).map(|c| c.residual).fold(0.0, f64::max);
    let all_pass = right.iter().chain(&left).chain(&hermite).all(|c| c.pass);
    let body = ValidationBody {
        rom_sha256: sha256_hex(&rom.to_json()?),
        dataset_sha256: data.hash()?,
        tol,
        right,
        left,
        hermite,
        max_residual,
        all_pass,
    };
    emit(&Header::new("validate", s.hash), body, out)?;
    if !all_pass {
        log::error!("interpolation residual {max_residual:.3e} exceeds tolerance {tol:.3e}");
    }
    Ok(all_pass)
}

#[derive(Serialize)]
struct H2Body {
    norm_quadrature: f64,
    norm_closed: f64,
    quadrature_nodes: usize,
    relative_difference: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    rom_sha256: Option<String>,
    /// Squared H2 error from the pole-residue formula.
    #[serde(skip_serializing_if = "Option::is_none")]
    h2_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h2_error_quadrature: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h2_error_relative: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residuals: Option<OptimalityReport>,
}

fn log_grid(block: &H2Block) -> Vec<f64> {
    let n = block.omega_points;
    let ratio = block.omega_max / block.omega_min;
    (0..n).map(|k| block.omega_min * ratio.powf(k as f64 / (n - 1) as f64)).collect()
}

fn h2_report(args: &ModelArgs, rom_path: Option<&Path>, out: Option<&Path>, csv: Option<&Path>) -> Result<bool> {
    let s = setup(args, |_| {})?;
    let norm = h2::h2_norm(&s.model)?;
    let mut body = H2Body {
        norm_quadrature: norm.quadrature,
        norm_closed: norm.closed,
        quadrature_nodes: norm.nodes,
        relative_difference: norm.relative_difference,
        rom_sha256: None,
        h2_error: None,
        h2_error_quadrature: None,
        h2_error_relative: None,
        residuals: None,
    };
    let rom = rom_path.map(ReducedModel::load).transpose()?;
    if let Some(rom) = &rom {
        let pr = rom.pole_residue()?;
        pr.require_stable()?;
        let err = h2::h2_error_pole_residue(&s.model, &pr)?;
        body.rom_sha256 = Some(sha256_hex(&rom.to_json()?));
        body.h2_error = Some(err);
        body.h2_error_quadrature = Some(h2::h2_error_quadrature(&s.model, &pr)?.value.re);
        body.h2_error_relative = Some(err.sqrt() / norm.closed);
        body.residuals = Some(h2::optimality_residuals_pole_residue(&s.model, &pr)?);
    }
    if let Some(path) = csv {
        let omegas = log_grid(&s.config.h2.clone().unwrap_or_default());
        let full = h2::hs_profile(&s.model, &omegas)?;
        let reduced = rom.as_ref().map(|r| h2::hs_profile(r, &omegas)).transpose()?;
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "{}", if reduced.is_some() { "omega,hs_full,hs_rom" } else { "omega,hs_full" })?;
        for (k, w0) in omegas.iter().enumerate() {
            match &reduced {
                Some(r) => writeln!(w, "{w0:e},{:e},{:e}", full[k], r[k])?,
                None => writeln!(w, "{w0:e},{:e}", full[k])?,
            }
        }
        w.flush()?;
    }
    emit(&Header::new("h2", s.hash), body, out)?;
    Ok(true)
}

struct IrkaFlags {
    order: Option<usize>,
    init: Option<String>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    seed: Option<u64>,
}

fn irka_run(args: &ModelArgs, flags: IrkaFlags, out: &Path, report: Option<&Path>, csv: Option<&Path>) -> Result<bool> {
    let s = setup(args, |c| {
        let b = c.irka.get_or_insert_with(Default::default);
        if flags.order.is_some() {
            b.r = flags.order;
        }
        if let Some(i) = flags.init {
            b.init = Some(InitPoints::Spec(i));
        }
        if flags.tol.is_some() {
            b.point_tol = flags.tol;
        }
        if flags.max_iter.is_some() {
            b.max_iter = flags.max_iter;
        }
        if flags.seed.is_some() {
            b.seed = flags.seed;
        }
    })?;
    let block = s.config.irka.clone().unwrap_or_default();
    let cfg = block.to_config(s.model.stability_margin())?;
    let outcome = irka::run(&s.model, &cfg)?;
    let converged = outcome.report.converged;
    if let Some(mut rom) = outcome.rom {
        let p = rom.provenance_mut();
        p.insert("method".into(), json!("irka"));
        p.insert("irka_converged".into(), json!(converged));
        p.insert("irka_iterations".into(), json!(outcome.report.iterations));
        stamp(&mut rom, &s.hash);
        rom.save(out)?;
    } else {
        log::warn!("no iterate produced; {} not written", out.display());
    }
    if let Some(path) = csv {
        outcome.report.write_csv(std::fs::File::create(path)?)?;
    }
    emit(&Header::new("irka", s.hash), json!({ "irka": cfg, "report": outcome.report }), report)?;
    Ok(converged)
}

fn default_input(s: &Setup) -> Result<(TimeSeries, f64)> {
    let block = s.config.simulate.clone().unwrap_or_default();
    let signal = Signal::parse(&block.signal)?;
    let dir: FunctionVector = block.direction.realize(s.model.con_grid())?;
    let u = TimeSeries::sample(block.dt, block.horizon, |t| dir.scaled(Complex64::new(signal.at(t), 0.0)))?;
    Ok((u, block.horizon))
}

fn simulate(
    args: &ModelArgs,
    rom_path: &Path,
    input: Option<&Path>,
    out: Option<&Path>,
    full_csv: Option<&Path>,
    rom_csv: Option<&Path>,
) -> Result<bool> {
    let s = setup(args, |_| {})?;
    let rom = ReducedModel::load(rom_path)?;
    let (u, horizon) = match input {
        Some(p) => {
            let u = TimeSeries::read_csv(std::fs::File::open(p)?, s.model.con_grid())?;
            let horizon = u.time(u.len() - 1);
            (u, horizon)
        }
        None => default_input(&s)?,
    };
    let y = s.model.simulate(&u, horizon)?;
    let yr = rom.simulate(&u, horizon)?;
    let mut max_error = 0.0f64;
    for (a, b) in y.samples().iter().zip(yr.samples()) {
        max_error = max_error.max(a.sub(b)?.norm());
    }
    let h2_error = rom.pole_residue().ok().filter(|pr| pr.stability().0).map(|pr| h2::h2_error_pole_residue(&s.model, &pr)).transpose()?;
    let u_l2 = u.l2_norm();
    let bound = h2_error.map(|e| e.sqrt() * u_l2);
    for (path, ts) in [(full_csv, &y), (rom_csv, &yr)] {
        if let Some(p) = path {
            ts.write_csv(std::fs::File::create(p)?)?;
        }
    }
    let body = json!({
        "rom_sha256": sha256_hex(&rom.to_json()?),
        "dt": u.dt(),
        "steps": u.len(),
        "input_l2": u_l2,
        "max_output_error": max_error,
        "h2_error": h2_error,
        "bound": bound,
        "within_bound": bound.map(|b| max_error <= b),
    });
    emit(&Header::new("simulate", s.hash), body, out)?;
    Ok(true)
}
