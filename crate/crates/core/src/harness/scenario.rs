use std::f64::consts::FRAC_PI_4;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::barrier::{ItoForm, NoiseParams, Scan};
use crate::controller::{ControllerConfig, ControllerMode, PreInput};
use crate::dynamics::{Feedback, Pose, SdeConfig};
use crate::error::{Error, Result};
use crate::geometry::{allowable_distance_d1, ScanPoint, VehicleParams};
use crate::lidar::{raycast, sensor_pose_from, Environment, Segment};

/// Names accepted by [`builtin_scenario`].
pub const BUILTIN_NAMES: [&str; 4] = ["exp1d", "exp1n", "exp2d", "exp2n"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    /// Integrate the point-cloud SDE directly.
    #[default]
    PointCloud,
    /// Integrate the vehicle pose and re-scan the map every control tick.
    Pose,
}

/// Preinput held constant or tabulated as `[t, v_o, w_o]` rows (each row
/// applies from its time until the next).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PreInputSchedule {
    Constant(PreInput),
    Table { table: Vec<[f64; 3]> },
}

impl PreInputSchedule {
    pub fn at(&self, t: f64) -> PreInput {
        match self {
            PreInputSchedule::Constant(pre) => *pre,
            PreInputSchedule::Table { table } => {
                let row = table
                    .iter()
                    .take_while(|r| r[0] <= t)
                    .last()
                    .or(table.first())
                    .copied()
                    .unwrap_or([0.0; 3]);
                PreInput {
                    v_o: row[1],
                    w_o: row[2],
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let PreInputSchedule::Table { table } = self {
            if table.is_empty() {
                return Err(Error::InvalidParams("preinput table is empty".into()));
            }
            if table.windows(2).any(|w| w[1][0] <= w[0][0]) {
                return Err(Error::InvalidParams(
                    "preinput table times must increase".into(),
                ));
            }
            if table.iter().flatten().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParams("preinput table must be finite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Pose(Pose),
    /// Axle-relative `[x1, x2]` pairs; point-cloud mode only.
    Scan {
        points: Vec<[f64; 2]>,
    },
}

/// Optional actuator limits. Clamping voids the safety guarantee, so every
/// clamped tick is counted in the trial record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputLimit {
    pub v_max: f64,
    pub w_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// Simulated time, s.
    pub horizon: f64,
    pub trials: usize,
    #[serde(default)]
    pub mode: SimulationMode,
    #[serde(default)]
    pub ito_form: ItoForm,
    pub vehicle: VehicleParams,
    pub controller: ControllerConfig,
    /// Diffusion acting on the plant.
    pub noise: NoiseParams,
    /// Diffusion assumed by the stochastic law when it differs from the
    /// plant's (a vibration-aware controller on a still floor).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design_noise: Option<NoiseParams>,
    pub preinput: PreInputSchedule,
    pub initial: InitialState,
    #[serde(default)]
    pub sde: SdeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_limit: Option<InputLimit>,
    #[serde(default)]
    pub environment: Environment,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.vehicle.validate()?;
        self.controller.validate()?;
        self.noise.validate()?;
        if let Some(noise) = &self.design_noise {
            noise.validate()?;
        }
        self.preinput.validate()?;
        self.sde.validate()?;
        self.environment.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParams("horizon must be > 0".into()));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be >= 1".into()));
        }
        if let Some(limit) = self.input_limit {
            if !(limit.v_max > 0.0 && limit.w_max > 0.0) {
                return Err(Error::InvalidParams("input limits must be > 0".into()));
            }
        }
        if self.mode == SimulationMode::Pose && !matches!(self.initial, InitialState::Pose(_)) {
            return Err(Error::InvalidParams(
                "pose mode needs an initial pose".into(),
            ));
        }
        Ok(())
    }

    /// Noise model used inside the compensator and its audit.
    pub fn controller_noise(&self) -> NoiseParams {
        self.design_noise.unwrap_or(self.noise)
    }

    /// Number of control ticks after `t = 0`.
    pub fn ticks(&self) -> usize {
        (self.horizon / self.sde.dt).round() as usize
    }

    /// Axle-relative scan at `t = 0`.
    pub fn initial_scan(&self) -> Result<Scan> {
        match &self.initial {
            InitialState::Pose(pose) => {
                let sensor = sensor_pose_from(pose, &self.vehicle);
                let returns = raycast(&self.environment, &sensor, self.vehicle.n_beams)?;
                Scan::from_raw(&returns, &self.vehicle)
            }
            InitialState::Scan { points } => {
                let points = points
                    .iter()
                    .map(|&[x1, x2]| ScanPoint::new(x1, x2))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Scan::from_points(points))
            }
        }
    }

    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| e.to_string())?;
        scenario.validate().map_err(|e| e.to_string())?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|msg| Error::format(path, msg))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }
}

/// Straight wall whose closest point in the margin sense, seen from the
/// axle center at the origin with heading 0, sits at `(x1, x2)`.
///
/// The wall runs perpendicular to the gradient of `x1 - alpha_c(x2)` at that
/// point, which makes the point a stationary point of the margin along the
/// wall.
pub fn tangent_wall(x1: f64, x2: f64, params: &VehicleParams, half_length: f64) -> Segment {
    let (s, c) = x2.sin_cos();
    let anchor = [x1 * c, x1 * s];
    let slope = allowable_distance_d1(x2, params) / x1;
    // radial unit vector minus slope times tangential unit vector
    let grad = [c + slope * s, s - slope * c];
    let norm = grad[0].hypot(grad[1]);
    let along = [-grad[1] / norm, grad[0] / norm];
    Segment {
        a: [
            anchor[0] - half_length * along[0],
            anchor[1] - half_length * along[1],
        ],
        b: [
            anchor[0] + half_length * along[0],
            anchor[1] + half_length * along[1],
        ],
    }
}

/// The four desk-scale experiments: a single wall met at 0.4 m, 45 degrees
/// to the left, with and without vibration, under either compensator.
pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    let (mode, c1) = match name {
        "exp1d" => (ControllerMode::Deterministic, 0.0),
        "exp1n" => (ControllerMode::Stochastic, 0.035),
        "exp2d" => (ControllerMode::Deterministic, 0.035),
        "exp2n" => (ControllerMode::Stochastic, 0.035),
        other => return Err(Error::UnknownScenario(other.to_string())),
    };
    // The exp1 scenarios run on a still floor: the stochastic law keeps c1
    // in its design but the plant itself is noise-free.
    let plant_noise = if name.starts_with("exp1") { 0.0 } else { c1 };
    let design_noise = (plant_noise != c1).then_some(NoiseParams { c1, c2: 0.0 });
    let vehicle = VehicleParams::new(0.07, 0.025, 0.3, 279)?;
    // Without vibration the vehicle settles against the wall, where the
    // closed loop is too stiff for explicit steps.
    let sde = SdeConfig {
        feedback: if plant_noise == 0.0 {
            Feedback::Implicit
        } else {
            Feedback::Continuous
        },
        ..SdeConfig::default()
    };
    let environment = Environment {
        segments: vec![tangent_wall(0.4, FRAC_PI_4, &vehicle, 20.0)],
        circles: Vec::new(),
        max_range: 8.0,
    };
    Ok(Scenario {
        name: name.to_string(),
        horizon: 30.0,
        trials: 100,
        mode: SimulationMode::PointCloud,
        ito_form: ItoForm::HessianExact,
        vehicle,
        controller: ControllerConfig {
            gamma: 0.5,
            k: 0.5,
            c: 0.0,
            mode,
            ..ControllerConfig::default()
        },
        noise: NoiseParams {
            c1: plant_noise,
            c2: 0.0,
        },
        design_noise,
        preinput: PreInputSchedule::Constant(PreInput { v_o: 0.2, w_o: 0.2 }),
        initial: InitialState::Pose(Pose::default()),
        sde,
        input_limit: None,
        environment,
    })
}
