//! Collision avoidance for a two-wheeled vehicle with a 2D LiDAR, driven by
//! a reciprocal control barrier function that stays finite with probability
//! one under white-noise vibration.
//!
//! The crate is organized bottom-up:
//!
//! * [`geometry`]: sensor-to-axle conversion and the allowable distance
//!   `alpha_c(x2)`;
//! * [`barrier`]: `B(x)`, `L_g B(x)` and the Itô correction over a scan;
//! * [`controller`]: the deterministic and almost-sure compensators;
//! * [`dynamics`]: unicycle kinematics, the point-cloud SDE and the Wiener
//!   process;
//! * [`lidar`]: a virtual LiDAR over segments and circles;
//! * [`estimation`]: the diffusion coefficient from logged increments;
//! * [`harness`]: scenarios, trials, campaigns and CSV output.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod controller;
pub mod dynamics;
mod error;
pub mod estimation;
pub mod geometry;
pub mod harness;
pub mod lidar;

pub use barrier::{BarrierEval, ItoForm, NoiseParams, Scan};
pub use controller::{ControlInput, ControllerConfig, ControllerMode, PreInput, PsiForm};
pub use dynamics::{Feedback, Pose, SdeConfig};
pub use error::{Error, Result};
pub use geometry::{RawScanPoint, ScanPoint, VehicleParams};
pub use harness::{Scenario, SimulationMode, TrialRecord};
pub use lidar::Environment;
