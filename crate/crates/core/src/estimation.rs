//! Diffusion coefficient from logged distance samples.
//!
//! With the bearing held at zero and the known drift removed, each residual
//! `x1(t_{j+1}) - x1(t_j) - v(t_j) dt` is `c1 * dW_j`, so its variance is
//! `c1^2 dt`.

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct IncrementSeries {
    /// Distances `x1(t_j)`, m.
    pub samples: Vec<f64>,
    /// Applied translational input `v(t_j)`, m/s.
    pub inputs: Vec<f64>,
    pub dt: f64,
}

#[derive(Debug, Deserialize)]
struct Row {
    t: f64,
    x1: f64,
    v: f64,
}

impl IncrementSeries {
    pub fn new(samples: Vec<f64>, inputs: Vec<f64>, dt: f64) -> Result<Self> {
        if samples.len() != inputs.len() {
            return Err(Error::InvalidParams(format!(
                "{} samples but {} inputs",
                samples.len(),
                inputs.len()
            )));
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt must be > 0, got {dt}")));
        }
        Ok(Self {
            samples,
            inputs,
            dt,
        })
    }

    /// Reads a `t,x1,v` CSV. Without an explicit `dt` the sampling interval
    /// is taken from the time column, which must then be uniform.
    pub fn from_csv(path: &Path, dt: Option<f64>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| Error::format(path, e))?;
        let mut t = Vec::new();
        let mut samples = Vec::new();
        let mut inputs = Vec::new();
        for row in reader.deserialize::<Row>() {
            let row = row.map_err(|e| Error::format(path, e))?;
            t.push(row.t);
            samples.push(row.x1);
            inputs.push(row.v);
        }
        let dt = match dt {
            Some(dt) => dt,
            None => uniform_spacing(&t).ok_or_else(|| {
                Error::format(
                    path,
                    "time column is not uniformly spaced; pass dt explicitly",
                )
            })?,
        };
        Self::new(samples, inputs, dt)
    }

    /// Drift-compensated increments `x1(t_{j+1}) - x1(t_j) - v(t_j) dt`.
    pub fn residuals(&self) -> Vec<f64> {
        self.samples
            .windows(2)
            .zip(&self.inputs)
            .map(|(w, v)| w[1] - w[0] - v * self.dt)
            .collect()
    }
}

fn uniform_spacing(t: &[f64]) -> Option<f64> {
    if t.len() < 2 {
        return None;
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-6 * dt.abs());
    (uniform && dt > 0.0).then_some(dt)
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InsufficientData(xs.len()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0))
}

/// `c1` from the variance of drift-compensated increments and the step.
pub fn c1_from_variance(variance: f64, dt: f64) -> f64 {
    (variance / dt).sqrt()
}

pub fn estimate_c1(series: &IncrementSeries) -> Result<f64> {
    let variance = sample_variance(&series.residuals())?;
    Ok(c1_from_variance(variance, series.dt))
}

#[cfg(test)]
mod tests {
    use std::io::Write;

    use proptest::prelude::*;

    use super::*;
    use crate::dynamics::wiener_increments;

    fn synthetic(c1: f64, n: usize, dt: f64, seed: u64, v: f64) -> IncrementSeries {
        let dw = wiener_increments(seed, n, dt);
        let mut x = vec![0.4];
        for w in &dw {
            let last = *x.last().unwrap();
            x.push(last + v * dt + c1 * w);
        }
        IncrementSeries::new(x, vec![v; n + 1], dt).unwrap()
    }

    #[test]
    fn reported_variance_gives_reported_coefficient() {
        let c1 = c1_from_variance(0.00012, 0.1);
        assert!((c1 - 0.0012f64.sqrt()).abs() < 1e-15);
        assert!((c1 - 0.0346).abs() < 1e-4);
        assert_eq!((c1 * 1000.0).round() / 1000.0, 0.035);
    }

    #[test]
    fn constant_series_is_noise_free() {
        let s = IncrementSeries::new(vec![0.4; 10], vec![0.0; 10], 0.1).unwrap();
        assert_eq!(estimate_c1(&s).unwrap(), 0.0);
    }

    #[test]
    fn too_few_increments() {
        let s = IncrementSeries::new(vec![0.4, 0.41], vec![0.0; 2], 0.1).unwrap();
        assert!(matches!(estimate_c1(&s), Err(Error::InsufficientData(1))));
        let s = IncrementSeries::new(vec![], vec![], 0.1).unwrap();
        assert!(matches!(estimate_c1(&s), Err(Error::InsufficientData(0))));
    }

    #[test]
    fn mismatched_columns() {
        assert!(IncrementSeries::new(vec![0.4; 3], vec![0.0; 2], 0.1).is_err());
        assert!(IncrementSeries::new(vec![0.4; 3], vec![0.0; 3], 0.0).is_err());
    }

    #[test]
    fn recovers_synthetic_coefficient() {
        let s = synthetic(0.035, 10_000, 0.1, 11, 0.0);
        let c1 = estimate_c1(&s).unwrap();
        assert!((c1 - 0.035).abs() < 0.05 * 0.035, "{c1}");
    }

    #[test]
    fn known_drift_is_removed() {
        let still = estimate_c1(&synthetic(0.035, 2000, 0.1, 5, 0.0)).unwrap();
        let moving = estimate_c1(&synthetic(0.035, 2000, 0.1, 5, 0.2)).unwrap();
        assert!((still - moving).abs() < 1e-12);
    }

    #[test]
    fn reads_csv() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,x1,v").unwrap();
        for (j, x) in [0.40, 0.41, 0.39, 0.40, 0.42].iter().enumerate() {
            writeln!(f, "{},{},0", j as f64 * 0.1, x).unwrap();
        }
        let s = IncrementSeries::from_csv(f.path(), None).unwrap();
        assert!((s.dt - 0.1).abs() < 1e-12);
        assert_eq!(s.samples.len(), 5);
        let explicit = IncrementSeries::from_csv(f.path(), Some(0.2)).unwrap();
        assert_eq!(explicit.dt, 0.2);
        assert!(estimate_c1(&s).unwrap() > 0.0);
    }

    #[test]
    fn csv_errors_carry_path() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "t,x1,v\n0,0.4,0\n0.1,abc,0").unwrap();
        let err = IncrementSeries::from_csv(f.path(), None).unwrap_err();
        assert!(err.to_string().contains(&f.path().display().to_string()));
    }

    proptest! {
        #[test]
        fn scale_equivariance(seed in 0u64..1000, scale in 0.1f64..10.0) {
            let s = synthetic(0.035, 200, 0.1, seed, 0.0);
            let scaled = IncrementSeries::new(
                s.samples.iter().map(|x| x * scale).collect(),
                s.inputs.clone(),
                s.dt,
            ).unwrap();
            let a = estimate_c1(&s).unwrap();
            let b = estimate_c1(&scaled).unwrap();
            prop_assert!((b - scale * a).abs() < 1e-9 * a.max(1e-12) * scale);
        }
    }
}
