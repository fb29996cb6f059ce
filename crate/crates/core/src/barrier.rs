//! Reciprocal barrier over a LiDAR scan.
//!
//! Each point contributes `B_i = 1 / (x1 - alpha_c(x2))`; the barrier is the
//! sum over all returns. Alongside the value we need the input-direction
//! gradient `L_g B` (one entry per input channel `v`, `w`) and the Itô
//! correction `1/2 tr[sigma sigma^T Hess B]` for the diffusion
//! `sigma_i = [c1, c2]^T` shared by every point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    allowable_distance, allowable_distance_d1, allowable_distance_d2, RawScanPoint, ScanPoint,
    VehicleParams,
};

/// Axle-relative scan. Beams without a return are absent.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scan {
    pub points: Vec<ScanPoint>,
    pub beam_index: Vec<usize>,
}

impl Scan {
    pub fn new(points: Vec<ScanPoint>, beam_index: Vec<usize>) -> Result<Self> {
        if points.len() != beam_index.len() {
            return Err(Error::InvalidParams(format!(
                "{} points but {} beam indices",
                points.len(),
                beam_index.len()
            )));
        }
        let mut seen = beam_index.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("duplicate beam index".into()));
        }
        Ok(Self { points, beam_index })
    }

    /// Builds a scan with beam indices `0..points.len()`.
    pub fn from_points(points: Vec<ScanPoint>) -> Self {
        let beam_index = (0..points.len()).collect();
        Self { points, beam_index }
    }

    /// Converts sensor-frame returns, keeping their beam indices.
    pub fn from_raw(returns: &[(usize, RawScanPoint)], params: &VehicleParams) -> Result<Self> {
        let mut points = Vec::with_capacity(returns.len());
        let mut beam_index = Vec::with_capacity(returns.len());
        for &(beam, raw) in returns {
            points.push(crate::geometry::sensor_to_axle(raw, params)?);
            beam_index.push(beam);
        }
        Self::new(points, beam_index)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Smallest margin and the position (into `points`) attaining it.
    pub fn min_margin(&self, params: &VehicleParams) -> Option<(usize, f64)> {
        self.points
            .iter()
            .map(|p| p.margin(params))
            .enumerate()
            .fold(None, |best, (i, m)| match best {
                Some((_, bm)) if bm <= m => best,
                _ => Some((i, m)),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Diffusion on the distance channel, m/sqrt(s).
    pub c1: f64,
    /// Diffusion on the bearing channel, rad/sqrt(s).
    pub c2: f64,
}

impl NoiseParams {
    pub const ZERO: NoiseParams = NoiseParams { c1: 0.0, c2: 0.0 };

    pub fn new(c1: f64, c2: f64) -> Result<Self> {
        let noise = Self { c1, c2 };
        noise.validate()?;
        Ok(noise)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c1.is_finite() && self.c1 >= 0.0 && self.c2.is_finite() && self.c2 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "diffusion coefficients must be >= 0, got ({}, {})",
                self.c1, self.c2
            )));
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.c1 == 0.0 && self.c2 == 0.0
    }
}

/// Coefficient used for the bearing-bearing entry of the Itô quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItoForm {
    /// `alpha'^2 + (x1 - alpha_c) alpha'' / 2`, the exact Hessian entry.
    #[default]
    HessianExact,
    /// `alpha' (alpha' + (x1 - alpha_c) alpha'' / 2)`, with `alpha'`
    /// factored out of both terms. Kept for comparison only.
    FactoredBeta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierEval {
    /// `B(x)`, 1/m.
    pub b: f64,
    /// `L_g B(x)` along the `v` and `w` channels.
    pub lgb: [f64; 2],
    /// Itô correction, 1/s.
    pub ito: f64,
    pub min_margin: f64,
    /// Position in the scan of the point with the smallest margin.
    pub i_star: usize,
}

impl BarrierEval {
    pub fn lgb_norm_sq(&self) -> f64 {
        self.lgb[0] * self.lgb[0] + self.lgb[1] * self.lgb[1]
    }
}

struct PointTerms {
    inv_margin: f64,
    d1: f64,
    d2: f64,
}

fn point_terms(index: usize, p: &ScanPoint, params: &VehicleParams) -> Result<PointTerms> {
    let margin = p.x1 - allowable_distance(p.x2, params);
    if !(margin > 0.0) {
        return Err(Error::OutsideSafeSet { index, margin });
    }
    Ok(PointTerms {
        inv_margin: 1.0 / margin,
        d1: allowable_distance_d1(p.x2, params),
        d2: allowable_distance_d2(p.x2, params),
    })
}

fn gradient_term(p: &ScanPoint, t: &PointTerms) -> [f64; 2] {
    let w = t.inv_margin * t.inv_margin;
    let (s, c) = p.x2.sin_cos();
    [w * (c + s / p.x1 * t.d1), -w * t.d1]
}

fn ito_term(t: &PointTerms, noise: &NoiseParams, form: ItoForm) -> f64 {
    let margin = 1.0 / t.inv_margin;
    let beta = match form {
        ItoForm::HessianExact => t.d1 * t.d1 + 0.5 * margin * t.d2,
        ItoForm::FactoredBeta => t.d1 * (t.d1 + 0.5 * margin * t.d2),
    };
    let (c1, c2) = (noise.c1, noise.c2);
    let quad = c1 * c1 - 2.0 * t.d1 * c1 * c2 + beta * c2 * c2;
    // 1/2 * (2 / m^3) * quad
    t.inv_margin * t.inv_margin * t.inv_margin * quad
}

pub fn barrier_value(scan: &Scan, params: &VehicleParams) -> Result<f64> {
    scan.points.iter().enumerate().try_fold(0.0, |acc, (i, p)| {
        Ok(acc + point_terms(i, p, params)?.inv_margin)
    })
}

pub fn barrier_gradient(scan: &Scan, params: &VehicleParams) -> Result<[f64; 2]> {
    let mut lgb = [0.0; 2];
    for (i, p) in scan.points.iter().enumerate() {
        let g = gradient_term(p, &point_terms(i, p, params)?);
        lgb[0] += g[0];
        lgb[1] += g[1];
    }
    Ok(lgb)
}

pub fn ito_correction(
    scan: &Scan,
    params: &VehicleParams,
    noise: &NoiseParams,
    form: ItoForm,
) -> Result<f64> {
    scan.points.iter().enumerate().try_fold(0.0, |acc, (i, p)| {
        Ok(acc + ito_term(&point_terms(i, p, params)?, noise, form))
    })
}

/// Evaluates value, gradient and Itô correction in one pass, summing in scan
/// order.
pub fn evaluate(
    scan: &Scan,
    params: &VehicleParams,
    noise: &NoiseParams,
    form: ItoForm,
) -> Result<BarrierEval> {
    let mut eval = BarrierEval {
        b: 0.0,
        lgb: [0.0; 2],
        ito: 0.0,
        min_margin: f64::INFINITY,
        i_star: 0,
    };
    for (i, p) in scan.points.iter().enumerate() {
        let t = point_terms(i, p, params)?;
        eval.b += t.inv_margin;
        let g = gradient_term(p, &t);
        eval.lgb[0] += g[0];
        eval.lgb[1] += g[1];
        eval.ito += ito_term(&t, noise, form);
        let margin = 1.0 / t.inv_margin;
        if margin < eval.min_margin {
            eval.min_margin = margin;
            eval.i_star = i;
        }
    }
    Ok(eval)
}

/// `sum 1/margin` without the safe-set check. Used only to log the barrier
/// at the instant of a breach.
pub fn raw_barrier_sum(scan: &Scan, params: &VehicleParams) -> f64 {
    scan.points.iter().map(|p| 1.0 / p.margin(params)).sum()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_3;

    use super::*;

    fn params() -> VehicleParams {
        VehicleParams::new(0.07, 0.025, 0.3, 279).unwrap()
    }

    fn single(x1: f64, x2: f64) -> Scan {
        Scan::from_points(vec![ScanPoint::new(x1, x2).unwrap()])
    }

    #[test]
    fn value_single_point() {
        let b = barrier_value(&single(0.4, 0.0), &params()).unwrap();
        assert!((b - 8.0).abs() < 1e-12);
    }

    #[test]
    fn value_is_additive() {
        let p = ScanPoint::new(0.4, 0.0).unwrap();
        let scan = Scan::from_points(vec![p, p]);
        assert!((barrier_value(&scan, &params()).unwrap() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn far_point_is_negligible() {
        let x1 = allowable_distance(0.3, &params()) + 1e6;
        let b = barrier_value(&single(x1, 0.3), &params()).unwrap();
        assert!((b - 1e-6).abs() < 1e-12);
    }

    #[test]
    fn empty_scan_is_zero() {
        let eval = evaluate(
            &Scan::default(),
            &params(),
            &NoiseParams::ZERO,
            ItoForm::default(),
        )
        .unwrap();
        assert_eq!(eval.b, 0.0);
        assert_eq!(eval.lgb, [0.0, 0.0]);
        assert_eq!(eval.min_margin, f64::INFINITY);
    }

    #[test]
    fn outside_safe_set_is_reported() {
        let scan = Scan::from_points(vec![
            ScanPoint::new(1.0, 0.0).unwrap(),
            ScanPoint::new(0.27, 0.0).unwrap(),
        ]);
        match barrier_value(&scan, &params()) {
            Err(Error::OutsideSafeSet { index, margin }) => {
                assert_eq!(index, 1);
                assert!((margin + 0.005).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(barrier_gradient(&scan, &params()).is_err());
        assert!(ito_correction(&scan, &params(), &NoiseParams::ZERO, ItoForm::default()).is_err());
        // exactly on the boundary is outside too
        let on = single(allowable_distance(0.0, &params()), 0.0);
        assert!(barrier_value(&on, &params()).is_err());
    }

    #[test]
    fn gradient_head_on() {
        let lgb = barrier_gradient(&single(0.4, 0.0), &params()).unwrap();
        assert!((lgb[0] - 64.0).abs() < 1e-10);
        assert_eq!(lgb[1], 0.0);
    }

    #[test]
    fn gradient_symmetric_pair_cancels_rotation() {
        let scan = Scan::from_points(vec![
            ScanPoint::new(0.5, FRAC_PI_3).unwrap(),
            ScanPoint::new(0.5, -FRAC_PI_3).unwrap(),
        ]);
        let lgb = barrier_gradient(&scan, &params()).unwrap();
        assert!(lgb[1].abs() < 1e-12, "{}", lgb[1]);
        assert!(lgb[0] > 0.0);
    }

    #[test]
    fn ito_zero_noise() {
        let ito = ito_correction(
            &single(0.4, 1.0),
            &params(),
            &NoiseParams::ZERO,
            ItoForm::default(),
        )
        .unwrap();
        assert_eq!(ito, 0.0);
    }

    #[test]
    fn ito_head_on_distance_noise() {
        let noise = NoiseParams::new(0.035, 0.0).unwrap();
        let ito = ito_correction(&single(0.4, 0.0), &params(), &noise, ItoForm::default()).unwrap();
        assert!((ito - 0.6272).abs() < 1e-12, "{ito}");
    }

    #[test]
    fn ito_positive_with_distance_noise_only() {
        let noise = NoiseParams::new(0.035, 0.0).unwrap();
        for x2 in [-3.0, -1.5, -0.2, 0.0, 0.7, 2.9] {
            let ito =
                ito_correction(&single(0.45, x2), &params(), &noise, ItoForm::default()).unwrap();
            assert!(ito > 0.0);
        }
    }

    #[test]
    fn ito_forms_agree_without_bearing_noise() {
        let noise = NoiseParams::new(0.035, 0.0).unwrap();
        let scan = single(0.45, 1.1);
        let exact = ito_correction(&scan, &params(), &noise, ItoForm::HessianExact).unwrap();
        let factored = ito_correction(&scan, &params(), &noise, ItoForm::FactoredBeta).unwrap();
        assert_eq!(exact, factored);
    }

    #[test]
    fn ito_forms_differ_with_bearing_noise() {
        let noise = NoiseParams::new(0.0, 0.2).unwrap();
        let scan = single(0.45, 1.1);
        let exact = ito_correction(&scan, &params(), &noise, ItoForm::HessianExact).unwrap();
        let factored = ito_correction(&scan, &params(), &noise, ItoForm::FactoredBeta).unwrap();
        assert!((exact - factored).abs() > 1e-6);
    }

    #[test]
    fn evaluate_matches_individual_functions() {
        let scan = Scan::from_points(vec![
            ScanPoint::new(0.5, 0.9).unwrap(),
            ScanPoint::new(0.42, 0.6).unwrap(),
            ScanPoint::new(1.3, -2.0).unwrap(),
        ]);
        let noise = NoiseParams::new(0.035, 0.01).unwrap();
        let eval = evaluate(&scan, &params(), &noise, ItoForm::default()).unwrap();
        assert_eq!(eval.b, barrier_value(&scan, &params()).unwrap());
        assert_eq!(eval.lgb, barrier_gradient(&scan, &params()).unwrap());
        assert_eq!(
            eval.ito,
            ito_correction(&scan, &params(), &noise, ItoForm::default()).unwrap()
        );
        let (i, m) = scan.min_margin(&params()).unwrap();
        assert_eq!(eval.i_star, i);
        assert!((eval.min_margin - m).abs() < 1e-15);
        assert_eq!(eval.i_star, 1);
    }

    #[test]
    fn scan_rejects_duplicate_beams() {
        let p = ScanPoint::new(1.0, 0.0).unwrap();
        assert!(Scan::new(vec![p, p], vec![3, 3]).is_err());
        assert!(Scan::new(vec![p], vec![3, 4]).is_err());
    }

    #[test]
    fn noise_validation() {
        assert!(NoiseParams::new(-0.1, 0.0).is_err());
        assert!(NoiseParams::new(0.0, f64::NAN).is_err());
    }
}
