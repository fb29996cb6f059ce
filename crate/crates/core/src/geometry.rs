//! Vehicle geometry: sensor-to-axle conversion and the bearing-dependent
//! allowable distance around the axle center.
//!
//! Three reference points sit on the vehicle's forward axis, `O` and `S`
//! both behind the axle center:
//!
//! ```text
//!   O (vehicle center) --e--> B (axle center)
//!   S (LiDAR center)   --d--> B (axle center)
//! ```
//!
//! Obstacles must stay farther than `alpha` from `O`. Expressed in polar
//! coordinates around `B`, that circle becomes the curve `x1 = alpha_c(x2)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axle distances below this are treated as degenerate (the point dynamics
/// divide by `x1`).
pub const DISTANCE_FLOOR: f64 = 1e-6;

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let mut wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    // rem_euclid may round up to exactly 2*pi
    if wrapped >= PI {
        wrapped -= 2.0 * PI;
    }
    wrapped
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleParams {
    /// Sensor-to-axle distance, m.
    pub d: f64,
    /// Vehicle-center-to-axle distance, m.
    pub e: f64,
    /// Required clearance around the vehicle center, m.
    pub alpha: f64,
    pub n_beams: usize,
}

impl VehicleParams {
    pub fn new(d: f64, e: f64, alpha: f64, n_beams: usize) -> Result<Self> {
        let params = Self {
            d,
            e,
            alpha,
            n_beams,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d.is_finite() && self.d >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "d must be >= 0, got {}",
                self.d
            )));
        }
        if !(self.e.is_finite() && self.e > 0.0) {
            return Err(Error::InvalidParams(format!(
                "e must be > 0, got {}",
                self.e
            )));
        }
        if !(self.alpha.is_finite() && self.alpha > self.e) {
            return Err(Error::InvalidParams(format!(
                "alpha must exceed e ({} <= {})",
                self.alpha, self.e
            )));
        }
        if self.n_beams == 0 {
            return Err(Error::InvalidParams("n_beams must be >= 1".into()));
        }
        Ok(())
    }
}

/// A LiDAR return in sensor-centered polar coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawScanPoint {
    /// Range from the sensor, m.
    pub x_s1: f64,
    /// Bearing in the sensor frame, rad.
    pub x_s2: f64,
}

/// An obstacle point in axle-centered polar coordinates. This is the state
/// of one point of the point-cloud system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanPoint {
    pub x1: f64,
    pub x2: f64,
}

impl ScanPoint {
    pub fn new(x1: f64, x2: f64) -> Result<Self> {
        if !x1.is_finite() || x1 <= DISTANCE_FLOOR {
            return Err(Error::DegeneratePoint { distance: x1 });
        }
        Ok(Self {
            x1,
            x2: wrap_angle(x2),
        })
    }

    pub fn margin(&self, params: &VehicleParams) -> f64 {
        self.x1 - allowable_distance(self.x2, params)
    }
}

/// Re-expresses a sensor return relative to the axle center.
///
/// The bearing uses a two-argument arctangent so points on the right side of
/// the vehicle come out with negative bearings.
pub fn sensor_to_axle(raw: RawScanPoint, params: &VehicleParams) -> Result<ScanPoint> {
    let forward = raw.x_s1 * raw.x_s2.cos() - params.d;
    let lateral = raw.x_s1 * raw.x_s2.sin();
    let x1 = forward.hypot(lateral);
    if !x1.is_finite() || x1 < DISTANCE_FLOOR {
        return Err(Error::DegeneratePoint { distance: x1 });
    }
    Ok(ScanPoint {
        x1,
        x2: wrap_angle(lateral.atan2(forward)),
    })
}

fn radicand(x2: f64, params: &VehicleParams) -> f64 {
    let s = x2.sin();
    params.alpha * params.alpha - params.e * params.e * s * s
}

/// Distance from the axle center to the clearance circle along bearing `x2`.
pub fn allowable_distance(x2: f64, params: &VehicleParams) -> f64 {
    -params.e * x2.cos() + radicand(x2, params).sqrt()
}

/// First derivative of [`allowable_distance`] with respect to the bearing.
pub fn allowable_distance_d1(x2: f64, params: &VehicleParams) -> f64 {
    let (s, c) = x2.sin_cos();
    let e = params.e;
    e * s - e * e * s * c / radicand(x2, params).sqrt()
}

/// Second derivative of [`allowable_distance`] with respect to the bearing.
pub fn allowable_distance_d2(x2: f64, params: &VehicleParams) -> f64 {
    let (s, c) = x2.sin_cos();
    let e = params.e;
    let root = radicand(x2, params).sqrt();
    let e2 = e * e;
    e * c - e2 * (c * c - s * s) / root - e2 * e2 * s * s * c * c / (root * root * root)
}
