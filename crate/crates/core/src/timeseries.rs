//! Uniformly sampled function-valued signals and their CSV form.
//!
//! CSV layout: column 0 is time, the remaining columns hold the real part of
//! the value at each grid node (`node_0`, `node_1`, ...).

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{MorError, Result};
use crate::funcspace::{FunctionVector, QuadratureGrid};

/// Samples `f(t_k)` at `t_k = k * dt`.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    dt: f64,
    samples: Vec<FunctionVector>,
}

impl TimeSeries {
    pub fn new(dt: f64, samples: Vec<FunctionVector>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(MorError::Domain(format!("time step must be positive, got {dt}")));
        }
        if samples.is_empty() {
            return Err(MorError::Domain("time series needs at least one sample".into()));
        }
        let grid = samples[0].grid().clone();
        if samples.iter().any(|s| !s.grid().same_as(&grid)) {
            return Err(MorError::Dimension("time series samples live on different grids".into()));
        }
        Ok(TimeSeries { dt, samples })
    }

    /// Samples `f` on `[0, horizon]`.
    pub fn sample(dt: f64, horizon: f64, f: impl Fn(f64) -> FunctionVector) -> Result<Self> {
        if !(dt > 0.0) || !(horizon >= 0.0) {
            return Err(MorError::Domain(format!("need dt > 0 and horizon >= 0, got dt={dt}, horizon={horizon}")));
        }
        let steps = (horizon / dt).round() as usize;
        let samples = (0..=steps).map(|k| f(k as f64 * dt)).collect();
        TimeSeries::new(dt, samples)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[FunctionVector] {
        &self.samples
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        self.samples[0].grid()
    }

    /// Number of steps needed to reach `horizon`, checked against the sample count.
    pub(crate) fn steps_for(&self, horizon: f64) -> Result<usize> {
        if !(horizon >= 0.0) {
            return Err(MorError::Domain(format!("horizon must be non-negative, got {horizon}")));
        }
        let steps = (horizon / self.dt).round() as usize;
        if steps + 1 > self.samples.len() {
            return Err(MorError::Domain(format!(
                "input covers {} samples but horizon {horizon} needs {}",
                self.samples.len(),
                steps + 1
            )));
        }
        Ok(steps)
    }

    /// `(int_0^T ||u(t)||^2 dt)^(1/2)` of the piecewise-linear interpolant.
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0;
        for w in self.samples.windows(2) {
            let a = w[0].norm_squared();
            let b = w[1].norm_squared();
            let ab = w[0].inner(&w[1]).map(|c| c.re).unwrap_or(0.0);
            acc += self.dt * (a + ab + b) / 3.0;
        }
        acc.sqrt()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let nodes = self.grid().len();
        let mut header = Vec::with_capacity(nodes + 1);
        header.push("t".to_string());
        header.extend((0..nodes).map(|k| format!("node_{k}")));
        wtr.write_record(&header)?;
        for (k, s) in self.samples.iter().enumerate() {
            let mut row = Vec::with_capacity(nodes + 1);
            row.push(format!("{:e}", self.time(k)));
            row.extend(s.values().iter().map(|v| format!("{:e}", v.re)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Reads a series on `grid`; times must be uniformly spaced from zero.
    pub fn read_csv<R: Read>(input: R, grid: &Arc<QuadratureGrid>) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let headers = rdr.headers()?.clone();
        if headers.len() != grid.len() + 1 {
            return Err(MorError::Dimension(format!(
                "csv has {} value columns, grid has {} nodes",
                headers.len().saturating_sub(1),
                grid.len()
            )));
        }
        let mut times = Vec::new();
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| MorError::Data(format!("csv row {}: bad number {s:?}: {e}", line + 2)))
            };
            times.push(parse(&rec[0])?);
            let values = rec.iter().skip(1).map(|s| parse(s).map(|v| Complex64::new(v, 0.0))).collect::<Result<Vec<_>>>()?;
            samples.push(FunctionVector::new(grid.clone(), values)?);
        }
        if times.len() < 2 {
            return Err(MorError::Data("csv needs at least two time samples".into()));
        }
        let dt = times[1] - times[0];
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * dt).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(MorError::Data(format!("csv row {}: time {t} breaks uniform spacing {dt}", k + 2)));
            }
        }
        TimeSeries::new(dt, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::funcspace::Patch;

    #[test]
    fn csv_round_trip_real_values() {
        let g = QuadratureGrid::new(Patch::square(0.1, 0.3).unwrap(), 3).unwrap();
        let ts = TimeSeries::sample(0.5, 1.0, |t| FunctionVector::from_fn(&g, |x, y| Complex64::new(t + x * y, 0.0))).unwrap();
        let mut buf = Vec::new();
        ts.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,node_0,node_1"));
        let back = TimeSeries::read_csv(&buf[..], &g).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back.dt(), 0.5);
        for (a, b) in ts.samples().iter().zip(back.samples()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let g = QuadratureGrid::new(Patch::unit(), 2).unwrap();
        assert!(TimeSeries::new(0.0, vec![FunctionVector::zeros(&g)]).is_err());
        assert!(TimeSeries::new(0.1, vec![]).is_err());
        let bad = "t,node_0,node_1,node_2,node_3\n0,1,2,3,4\n0.1,1,2,3\n";
        assert!(TimeSeries::read_csv(bad.as_bytes(), &g).is_err());
    }

    #[test]
    fn l2_norm_of_constant_signal() {
        let g = QuadratureGrid::new(Patch::unit(), 4).unwrap();
        let one = FunctionVector::constant(&g, Complex64::new(2.0, 0.0));
        let ts = TimeSeries::sample(0.1, 2.0, |_| one.clone()).unwrap();
        assert!((ts.l2_norm() - (4.0f64 * 2.0).sqrt()).abs() < 1e-12);
    }
}
