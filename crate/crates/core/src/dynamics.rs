//! Vehicle kinematics and the stochastic point-cloud system.
//!
//! The pose obeys the unicycle model. Each obstacle point, seen from the
//! axle center, obeys
//!
//! ```text
//! dx1 = -cos(x2) V dt                 + c1 dW
//! dx2 = (sin(x2) / x1) V dt - W dt    + c2 dW
//! ```
//!
//! with `V = v_o + v`, `W = w_o + w` and a single scalar Wiener process `W_t`
//! shared by every point. The diffusion is additive, so Euler–Maruyama is
//! also the Milstein scheme here.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::barrier::{NoiseParams, Scan};
use crate::controller::ControlInput;
use crate::error::{Error, Result};
use crate::geometry::{
    allowable_distance, allowable_distance_d1, allowable_distance_d2, wrap_angle, ScanPoint,
    VehicleParams, DISTANCE_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub p1: f64,
    pub p2: f64,
    /// Heading, rad in `[-pi, pi)`.
    pub p3: f64,
}

impl Pose {
    pub fn new(p1: f64, p2: f64, p3: f64) -> Self {
        Self {
            p1,
            p2,
            p3: wrap_angle(p3),
        }
    }

    /// World coordinates of an axle-relative point.
    pub fn to_world(&self, point: &ScanPoint) -> [f64; 2] {
        let bearing = point.x2 + self.p3;
        [
            self.p1 + point.x1 * bearing.cos(),
            self.p2 + point.x1 * bearing.sin(),
        ]
    }

    /// Axle-relative polar coordinates of a world point.
    pub fn to_relative(&self, world: [f64; 2]) -> Result<ScanPoint> {
        let dx = world[0] - self.p1;
        let dy = world[1] - self.p2;
        ScanPoint::new(dx.hypot(dy), dy.atan2(dx) - self.p3)
    }
}

/// How the feedback is sampled while integrating one control interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feedback {
    /// The input computed at the start of the interval is held for
    /// `substeps` fixed Euler–Maruyama steps.
    Held,
    /// The input is recomputed before every step and the step length
    /// shrinks with the squared margin, so a single Gaussian increment
    /// cannot carry a point across the boundary.
    #[default]
    Continuous,
    /// Each step of at most `dt / substeps` applies the input the
    /// compensator produces at the end of the step, found by Newton
    /// iteration. The margins move affinely in the input and the barrier is
    /// convex in the margins, so an accepted step grows `B` by at most
    /// `1 / (1 - K h)` in the noise-free case. Steps are halved (splitting
    /// the Wiener increment by its bridge) when no solution is found, and
    /// the margin-squared noise bound of [`Feedback::Continuous`] still
    /// applies.
    Implicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SdeConfig {
    /// Control and recording interval, s.
    pub dt: f64,
    /// Fixed inner steps per interval for [`Feedback::Held`].
    pub substeps: usize,
    pub seed: u64,
    pub feedback: Feedback,
    /// Step bound `h <= noise_fraction * m^2 / s^2` for margin `m` and
    /// margin diffusion `s`.
    pub noise_fraction: f64,
    /// Step bound `h <= drift_fraction * m / |dm/dt|` for points moving
    /// towards the boundary.
    pub drift_fraction: f64,
    pub min_step: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            substeps: 10,
            seed: 0,
            feedback: Feedback::Continuous,
            noise_fraction: 0.01,
            drift_fraction: 0.1,
            min_step: 1e-9,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidParams(format!(
                "dt must be > 0, got {}",
                self.dt
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidParams("substeps must be >= 1".into()));
        }
        let frac_ok = |x: f64| x.is_finite() && x > 0.0;
        if !(frac_ok(self.noise_fraction) && frac_ok(self.drift_fraction)) {
            return Err(Error::InvalidParams("step fractions must be > 0".into()));
        }
        if !(frac_ok(self.min_step) && self.min_step <= self.dt) {
            return Err(Error::InvalidParams("min_step must be in (0, dt]".into()));
        }
        Ok(())
    }
}

/// Explicit Euler step of the unicycle model.
pub fn pose_step(pose: Pose, applied: ControlInput, dt: f64) -> Pose {
    let (s, c) = pose.p3.sin_cos();
    Pose {
        p1: pose.p1 + applied.v * c * dt,
        p2: pose.p2 + applied.v * s * dt,
        p3: wrap_angle(pose.p3 + applied.w * dt),
    }
}

/// Drift of one point under the applied input, `(dx1/dt, dx2/dt)`.
pub fn point_drift(point: &ScanPoint, applied: ControlInput) -> [f64; 2] {
    let (s, c) = point.x2.sin_cos();
    [-c * applied.v, s / point.x1 * applied.v - applied.w]
}

/// One Euler–Maruyama step for a single point. `dw` is the Wiener increment
/// over `dt` (variance `dt`).
///
/// Returns [`Error::DegeneratePoint`] when the step drives the distance
/// through the axle center.
pub fn point_step(
    point: &ScanPoint,
    applied: ControlInput,
    noise: &NoiseParams,
    dt: f64,
    dw: f64,
) -> Result<ScanPoint> {
    let [d1, d2] = point_drift(point, applied);
    let x1 = point.x1 + d1 * dt + noise.c1 * dw;
    if !x1.is_finite() || x1 <= DISTANCE_FLOOR {
        return Err(Error::DegeneratePoint { distance: x1 });
    }
    Ok(ScanPoint {
        x1,
        x2: wrap_angle(point.x2 + d2 * dt + noise.c2 * dw),
    })
}

/// Drift of the margin `x1 - alpha_c(x2)` of one point, including the Itô
/// term `-alpha''(x2) c2^2 / 2`.
pub fn margin_drift(
    point: &ScanPoint,
    applied: ControlInput,
    noise: &NoiseParams,
    params: &VehicleParams,
) -> f64 {
    let [d1, d2] = point_drift(point, applied);
    let ito = 0.5 * allowable_distance_d2(point.x2, params) * noise.c2 * noise.c2;
    d1 - allowable_distance_d1(point.x2, params) * d2 - ito
}

/// One Euler–Maruyama step of the same SDE written in the coordinates
/// `(x1 - alpha_c(x2), x2)`.
///
/// The margin is then advanced linearly, so the step error is measured
/// against the margin itself rather than against the curvature of the
/// clearance curve. Safety-critical runs drive margins far below the
/// second-order error of [`point_step`].
///
/// No distance floor is applied: a point driven past the boundary comes back
/// with a non-positive margin.
pub fn margin_step(
    point: &ScanPoint,
    applied: ControlInput,
    noise: &NoiseParams,
    params: &VehicleParams,
    dt: f64,
    dw: f64,
) -> ScanPoint {
    let margin = point.margin(params);
    let diffusion = noise.c1 - allowable_distance_d1(point.x2, params) * noise.c2;
    let margin = margin + margin_drift(point, applied, noise, params) * dt + diffusion * dw;
    let [_, d2] = point_drift(point, applied);
    let x2 = wrap_angle(point.x2 + d2 * dt + noise.c2 * dw);
    ScanPoint {
        x1: margin + allowable_distance(x2, params),
        x2,
    }
}

/// Steps every point of a scan with the same increment.
pub fn scan_step(
    scan: &mut Scan,
    applied: ControlInput,
    noise: &NoiseParams,
    dt: f64,
    dw: f64,
) -> Result<()> {
    for p in scan.points.iter_mut() {
        *p = point_step(p, applied, noise, dt, dw)?;
    }
    Ok(())
}

/// Longest step with `h <= noise_fraction * m^2 / s^2` for every point,
/// where `s` is the diffusion of its margin. Infinite without noise.
pub fn noise_step_bound(
    scan: &Scan,
    noise: &NoiseParams,
    params: &VehicleParams,
    cfg: &SdeConfig,
) -> f64 {
    let mut h = f64::INFINITY;
    if noise.is_zero() {
        return h;
    }
    for p in &scan.points {
        let margin = p.margin(params);
        let diffusion = noise.c1 - allowable_distance_d1(p.x2, params) * noise.c2;
        if diffusion != 0.0 {
            h = h.min(cfg.noise_fraction * margin * margin / (diffusion * diffusion));
        }
    }
    h
}

/// Longest step allowed by the margin-based bounds of `cfg`, clipped to
/// `[cfg.min_step, remaining]`.
pub fn adaptive_step(
    scan: &Scan,
    applied: ControlInput,
    noise: &NoiseParams,
    params: &VehicleParams,
    cfg: &SdeConfig,
    remaining: f64,
) -> f64 {
    let mut h = remaining.min(noise_step_bound(scan, noise, params, cfg));
    for p in &scan.points {
        let margin = p.margin(params);
        let approach = margin_drift(p, applied, noise, params);
        if approach < 0.0 {
            h = h.min(cfg.drift_fraction * margin / -approach);
        }
    }
    h.max(cfg.min_step).min(remaining)
}

/// Seed of trial `index` in a campaign with the given master seed.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    master ^ index
}

/// Scalar standard Wiener process sampled on an arbitrary grid.
#[derive(Debug, Clone)]
pub struct WienerProcess {
    rng: ChaCha8Rng,
}

impl WienerProcess {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Increment over a step of length `dt`.
    pub fn increment(&mut self, dt: f64) -> f64 {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        z * dt.sqrt()
    }

    /// Splits an increment `dw` over `dt` into its two halves by sampling
    /// the Brownian bridge at the midpoint.
    pub fn split(&mut self, dw: f64, dt: f64) -> (f64, f64) {
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let first = 0.5 * dw + 0.5 * dt.sqrt() * z;
        (first, dw - first)
    }
}

/// `count` i.i.d. `N(0, dt)` increments, reproducible from `seed`.
pub fn wiener_increments(seed: u64, count: usize, dt: f64) -> Vec<f64> {
    let mut w = WienerProcess::new(seed);
    (0..count).map(|_| w.increment(dt)).collect()
}

/// Angle between two bearings, folded into `[0, pi]`.
pub fn bearing_gap(a: f64, b: f64) -> f64 {
    let d = wrap_angle(a - b).abs();
    d.min(2.0 * PI - d)
}
