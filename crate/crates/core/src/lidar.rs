//! Virtual 2D LiDAR over a planar map of wall segments and circular posts.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::dynamics::Pose;
use crate::error::{Error, Result};
use crate::geometry::{RawScanPoint, VehicleParams};

const PARALLEL_TOL: f64 = 1e-12;
const EMBED_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub a: [f64; 2],
    pub b: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Environment {
    #[serde(default)]
    pub segments: Vec<Segment>,
    #[serde(default)]
    pub circles: Vec<Circle>,
    #[serde(default = "default_max_range")]
    pub max_range: f64,
}

fn default_max_range() -> f64 {
    8.0
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            segments: Vec::new(),
            circles: Vec::new(),
            max_range: default_max_range(),
        }
    }
}

impl Environment {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_range.is_finite() && self.max_range > 0.0) {
            return Err(Error::InvalidParams("max_range must be > 0".into()));
        }
        if self.circles.iter().any(|c| !(c.radius > 0.0)) {
            return Err(Error::InvalidParams("circle radii must be > 0".into()));
        }
        Ok(())
    }

    /// Nearest hit distance along the ray, if any, over every primitive.
    /// Segments come first in primitive order, then circles; on exact ties
    /// the lower index wins.
    pub fn cast(&self, origin: [f64; 2], dir: [f64; 2]) -> Option<f64> {
        let mut best: Option<f64> = None;
        let hits = self
            .segments
            .iter()
            .map(|s| ray_segment(origin, dir, s))
            .chain(self.circles.iter().map(|c| ray_circle(origin, dir, c)));
        for t in hits.flatten() {
            if best.is_none_or(|b| t < b) {
                best = Some(t);
            }
        }
        best.filter(|&t| t <= self.max_range)
    }

    fn check_clear(&self, p: [f64; 2]) -> Result<()> {
        for (i, s) in self.segments.iter().enumerate() {
            if point_segment_distance(p, s) < EMBED_TOL {
                return Err(Error::SensorEmbedded { primitive: i });
            }
        }
        for (i, c) in self.circles.iter().enumerate() {
            let d = (p[0] - c.center[0]).hypot(p[1] - c.center[1]);
            if d <= c.radius {
                return Err(Error::SensorEmbedded {
                    primitive: self.segments.len() + i,
                });
            }
        }
        Ok(())
    }
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn ray_segment(origin: [f64; 2], dir: [f64; 2], seg: &Segment) -> Option<f64> {
    let edge = sub(seg.b, seg.a);
    let denom = cross(dir, edge);
    let len = edge[0].hypot(edge[1]);
    if denom.abs() <= PARALLEL_TOL * len {
        return None;
    }
    let rel = sub(seg.a, origin);
    let t = cross(rel, edge) / denom;
    let s = cross(rel, dir) / denom;
    (t > 0.0 && (0.0..=1.0).contains(&s)).then_some(t)
}

fn ray_circle(origin: [f64; 2], dir: [f64; 2], circle: &Circle) -> Option<f64> {
    let f = sub(origin, circle.center);
    let b = f[0] * dir[0] + f[1] * dir[1];
    let c = f[0] * f[0] + f[1] * f[1] - circle.radius * circle.radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let t = -b - disc.sqrt();
    (t > 0.0).then_some(t)
}

fn point_segment_distance(p: [f64; 2], seg: &Segment) -> f64 {
    let edge = sub(seg.b, seg.a);
    let rel = sub(p, seg.a);
    let len_sq = edge[0] * edge[0] + edge[1] * edge[1];
    let s = if len_sq > 0.0 {
        ((rel[0] * edge[0] + rel[1] * edge[1]) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (rel[0] - s * edge[0]).hypot(rel[1] - s * edge[1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorPose {
    pub position: [f64; 2],
    pub heading: f64,
}

/// The sensor sits `d` behind the axle center along the heading, so that
/// [`sensor_to_axle`](crate::geometry::sensor_to_axle) maps its returns onto
/// axle-relative coordinates.
pub fn sensor_pose_from(pose: &Pose, params: &VehicleParams) -> SensorPose {
    let (s, c) = pose.p3.sin_cos();
    SensorPose {
        position: [pose.p1 - params.d * c, pose.p2 - params.d * s],
        heading: pose.p3,
    }
}

/// Body-frame bearing of beam `j` out of `n_beams`.
pub fn beam_bearing(j: usize, n_beams: usize) -> f64 {
    -PI + 2.0 * PI * j as f64 / n_beams as f64
}

/// Casts `n_beams` evenly spaced beams. Beams with no return within range
/// are omitted; each return carries its beam index.
pub fn raycast(
    env: &Environment,
    sensor: &SensorPose,
    n_beams: usize,
) -> Result<Vec<(usize, RawScanPoint)>> {
    if n_beams == 0 {
        return Err(Error::InvalidParams("n_beams must be >= 1".into()));
    }
    env.check_clear(sensor.position)?;
    let mut returns = Vec::new();
    for j in 0..n_beams {
        let bearing = beam_bearing(j, n_beams);
        let (s, c) = (bearing + sensor.heading).sin_cos();
        if let Some(t) = env.cast(sensor.position, [c, s]) {
            returns.push((
                j,
                RawScanPoint {
                    x_s1: t,
                    x_s2: bearing,
                },
            ));
        }
    }
    Ok(returns)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, SQRT_2};

    use super::*;

    fn wall_x(x: f64) -> Environment {
        Environment {
            segments: vec![Segment {
                a: [x, -100.0],
                b: [x, 100.0],
            }],
            ..Environment::default()
        }
    }

    fn origin() -> SensorPose {
        SensorPose {
            position: [0.0, 0.0],
            heading: 0.0,
        }
    }

    fn lookup(returns: &[(usize, RawScanPoint)], beam: usize) -> Option<f64> {
        returns
            .iter()
            .find(|(j, _)| *j == beam)
            .map(|(_, r)| r.x_s1)
    }

    #[test]
    fn sensor_pose_cases() {
        let p = VehicleParams::new(0.07, 0.025, 0.3, 279).unwrap();
        let s = sensor_pose_from(&Pose::default(), &p);
        assert_eq!(s.position, [-0.07, 0.0]);
        assert_eq!(s.heading, 0.0);

        let s = sensor_pose_from(&Pose::new(0.0, 0.0, FRAC_PI_2), &p);
        assert!(s.position[0].abs() < 1e-16);
        assert!((s.position[1] + 0.07).abs() < 1e-16);

        let s = sensor_pose_from(&Pose::new(1.0, 1.0, FRAC_PI_4), &p);
        let off = 0.07 / SQRT_2;
        assert!((s.position[0] - (1.0 - off)).abs() < 1e-15);
        assert!((s.position[1] - (1.0 - off)).abs() < 1e-15);
    }

    #[test]
    fn scan_through_sensor_matches_world_geometry() {
        let p = VehicleParams::new(0.07, 0.025, 0.3, 72).unwrap();
        let pose = Pose::new(0.3, -0.2, 0.7);
        let env = Environment {
            segments: vec![Segment {
                a: [1.0, -3.0],
                b: [1.0, 3.0],
            }],
            circles: vec![Circle {
                center: [-0.5, 0.6],
                radius: 0.2,
            }],
            max_range: 8.0,
        };
        let returns = raycast(&env, &sensor_pose_from(&pose, &p), p.n_beams).unwrap();
        assert!(returns.len() > 10);
        let sensor = sensor_pose_from(&pose, &p);
        for (j, raw) in returns {
            let bearing = beam_bearing(j, p.n_beams) + pose.p3;
            let world = [
                sensor.position[0] + raw.x_s1 * bearing.cos(),
                sensor.position[1] + raw.x_s1 * bearing.sin(),
            ];
            let expected = pose.to_relative(world).unwrap();
            let got = crate::geometry::sensor_to_axle(raw, &p).unwrap();
            assert!(
                (got.x1 - expected.x1).abs() < 1e-12,
                "{got:?} vs {expected:?}"
            );
            assert!(crate::dynamics::bearing_gap(got.x2, expected.x2).abs() < 1e-12);
        }
    }

    #[test]
    fn axis_aligned_wall() {
        // 8 beams: bearings -pi, -3pi/4, ..., 3pi/4
        let r = raycast(&wall_x(0.5), &origin(), 8).unwrap();
        assert_eq!(lookup(&r, 4), Some(0.5));
        assert_eq!(lookup(&r, 0), None);
        let diag = lookup(&r, 5).unwrap();
        assert!((diag - 0.5 * SQRT_2).abs() < 1e-12);
        // beams at +-pi/2 run parallel to the wall
        assert_eq!(lookup(&r, 2), None);
        assert_eq!(lookup(&r, 6), None);
    }

    #[test]
    fn diagonal_beam_matches_sampling_oracle() {
        let r = raycast(&wall_x(0.5), &origin(), 8).unwrap();
        let hit = lookup(&r, 5).unwrap();
        // densely sample the wall, keep samples within a hair of the beam
        let dir = [FRAC_PI_4.cos(), FRAC_PI_4.sin()];
        let mut best = f64::INFINITY;
        for k in 0..200_001 {
            let y = -1.0 + 2.0 * k as f64 / 200_000.0;
            let off = cross(dir, [0.5, y]).abs();
            if off < 1e-5 {
                best = best.min(0.5f64.hypot(y));
            }
        }
        assert!((hit - best).abs() < 1e-4, "{hit} vs {best}");
    }

    #[test]
    fn empty_environment() {
        let r = raycast(&Environment::default(), &origin(), 279).unwrap();
        assert!(r.is_empty());
    }

    #[test]
    fn max_range_cuts_returns() {
        let env = Environment {
            max_range: 0.4,
            ..wall_x(0.5)
        };
        assert!(raycast(&env, &origin(), 8).unwrap().is_empty());
    }

    #[test]
    fn circle_obstacle() {
        let env = Environment {
            circles: vec![Circle {
                center: [1.0, 0.0],
                radius: 0.25,
            }],
            ..Environment::default()
        };
        let r = raycast(&env, &origin(), 4).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].0, 2);
        assert!((r[0].1.x_s1 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn nearest_primitive_wins() {
        let mut env = wall_x(2.0);
        env.circles.push(Circle {
            center: [1.0, 0.0],
            radius: 0.25,
        });
        env.segments.push(Segment {
            a: [1.5, -1.0],
            b: [1.5, 1.0],
        });
        let r = raycast(&env, &origin(), 4).unwrap();
        assert!((lookup(&r, 2).unwrap() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn embedded_sensor() {
        let env = Environment {
            circles: vec![Circle {
                center: [0.0, 0.0],
                radius: 0.25,
            }],
            ..Environment::default()
        };
        assert!(matches!(
            raycast(&env, &origin(), 8),
            Err(Error::SensorEmbedded { primitive: 0 })
        ));
        let on_wall = SensorPose {
            position: [0.5, 3.0],
            heading: 0.0,
        };
        assert!(matches!(
            raycast(&wall_x(0.5), &on_wall, 8),
            Err(Error::SensorEmbedded { primitive: 0 })
        ));
    }
}
