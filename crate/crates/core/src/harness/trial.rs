//! One closed-loop run.

use crate::barrier::{evaluate, raw_barrier_sum, BarrierEval, NoiseParams, Scan};
use crate::controller::{applied_input, generator, ControlInput, ControllerMode};
use crate::dynamics::{
    adaptive_step, margin_drift, margin_step, noise_step_bound, pose_step, trial_seed, Feedback,
    Pose, WienerProcess,
};
use crate::error::{Error, Result};
use crate::geometry::{allowable_distance, wrap_angle, VehicleParams};
use crate::lidar::{raycast, sensor_pose_from};

use super::scenario::{InitialState, Scenario, SimulationMode};

/// One recorded control tick. The last row of a breached trial is the
/// breach itself; its barrier terms past `b` are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRow {
    pub t: f64,
    pub x1_istar: f64,
    pub alpha_ci_istar: f64,
    pub x2_istar: f64,
    pub v_applied: f64,
    pub w_applied: f64,
    pub b: f64,
    pub margin: f64,
    pub lgb: [f64; 2],
    pub ito: f64,
    pub gamma_b: f64,
}

impl TickRow {
    /// Realized generator `L_g B (u_o + u) + L_sigma^I B`.
    pub fn generator(&self) -> f64 {
        self.lgb[0] * self.v_applied + self.lgb[1] * self.w_applied + self.ito
    }

    pub fn is_breach(&self) -> bool {
        !(self.margin > 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Outcome {
    Safe,
    Breached { t: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial_index: u64,
    pub seed: u64,
    pub rows: Vec<TickRow>,
    pub outcome: Outcome,
    /// Total variation of the applied inputs over the recorded ticks.
    pub chatter: f64,
    /// Largest `generator - gamma B` over every controller evaluation,
    /// including those between recorded ticks.
    pub max_generator_excess: f64,
    /// Integration steps taken.
    pub steps: usize,
    /// Controller evaluations whose output was clamped by the input limit.
    pub clamped: usize,
}

impl TrialRecord {
    pub fn is_safe(&self) -> bool {
        self.outcome == Outcome::Safe
    }

    pub fn min_margin(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.margin)
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest barrier value over the rows inside the safe set.
    pub fn b_max(&self) -> f64 {
        self.rows
            .iter()
            .filter(|r| !r.is_breach())
            .map(|r| r.b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fraction of input sign flips that happen with the active point within
    /// `window` rad of the right-hand side (bearing -pi/2). `None` without
    /// any flips.
    pub fn flips_near_side(&self, window: f64) -> Option<f64> {
        let mut flips = 0usize;
        let mut near = 0usize;
        for w in self.rows.windows(2) {
            let flipped =
                w[0].v_applied * w[1].v_applied < 0.0 || w[0].w_applied * w[1].w_applied < 0.0;
            if flipped {
                flips += 1;
                if (wrap_angle(w[1].x2_istar + std::f64::consts::FRAC_PI_2)).abs() <= window {
                    near += 1;
                }
            }
        }
        (flips > 0).then(|| near as f64 / flips as f64)
    }
}

fn chatter(rows: &[TickRow]) -> f64 {
    rows.windows(2)
        .map(|w| (w[1].v_applied - w[0].v_applied).abs() + (w[1].w_applied - w[0].w_applied).abs())
        .sum()
}

struct Loop<'a> {
    scenario: &'a Scenario,
    design_noise: NoiseParams,
    gamma: f64,
    rows: Vec<TickRow>,
    max_excess: f64,
    steps: usize,
    clamped: usize,
}

/// Controller output at one evaluation.
struct Decision {
    eval: BarrierEval,
    applied: ControlInput,
}

impl<'a> Loop<'a> {
    /// Controller output at `t` without bookkeeping. The flag reports
    /// whether the input limit clamped it.
    fn control(&self, scan: &Scan, t: f64) -> Result<(Decision, bool)> {
        let s = self.scenario;
        let eval = evaluate(scan, &s.vehicle, &self.design_noise, s.ito_form)?;
        let pre = s.preinput.at(t);
        let u = s.controller.compensate(&eval, pre)?;
        let mut applied = applied_input(pre, u);
        let mut clamped = false;
        if let Some(limit) = s.input_limit {
            let limited = ControlInput {
                v: applied.v.clamp(-limit.v_max, limit.v_max),
                w: applied.w.clamp(-limit.w_max, limit.w_max),
            };
            clamped = limited != applied;
            applied = limited;
        }
        Ok((Decision { eval, applied }, clamped))
    }

    /// Counts a decision that is actually applied.
    fn account(&mut self, decision: &Decision, clamped: bool) {
        if clamped {
            self.clamped += 1;
        }
        let excess = generator(&decision.eval, decision.applied) - self.gamma * decision.eval.b;
        self.max_excess = self.max_excess.max(excess);
    }

    fn decide(&mut self, scan: &Scan, t: f64) -> Result<Decision> {
        let (decision, clamped) = self.control(scan, t)?;
        self.account(&decision, clamped);
        Ok(decision)
    }

    fn record(&mut self, scan: &Scan, t: f64, d: &Decision) {
        let p = scan.points.get(d.eval.i_star).copied();
        let (x1, x2) = p.map_or((f64::NAN, f64::NAN), |p| (p.x1, p.x2));
        self.rows.push(TickRow {
            t,
            x1_istar: x1,
            alpha_ci_istar: allowable_distance(x2, &self.scenario.vehicle),
            x2_istar: x2,
            v_applied: d.applied.v,
            w_applied: d.applied.w,
            b: d.eval.b,
            margin: d.eval.min_margin,
            lgb: d.eval.lgb,
            ito: d.eval.ito,
            gamma_b: self.gamma * d.eval.b,
        });
    }

    /// Records the breach row if any point sits on or past the boundary.
    fn check_breach(&mut self, scan: &Scan, t: f64, applied: ControlInput) -> bool {
        let params = &self.scenario.vehicle;
        let Some((i, margin)) = scan.min_margin(params) else {
            return false;
        };
        if margin > 0.0 {
            return false;
        }
        let p = scan.points[i];
        self.rows.push(TickRow {
            t,
            x1_istar: p.x1,
            alpha_ci_istar: allowable_distance(p.x2, params),
            x2_istar: p.x2,
            v_applied: applied.v,
            w_applied: applied.w,
            b: raw_barrier_sum(scan, params),
            margin,
            lgb: [f64::NAN; 2],
            ito: f64::NAN,
            gamma_b: f64::NAN,
        });
        true
    }
}

fn advance(
    scan: &mut Scan,
    applied: ControlInput,
    noise: &NoiseParams,
    params: &VehicleParams,
    h: f64,
    dw: f64,
) {
    for p in scan.points.iter_mut() {
        *p = margin_step(p, applied, noise, params, h, dw);
    }
}

/// Runs trial `trial_index` of the scenario with seed
/// `scenario.sde.seed ^ trial_index`.
pub fn run_trial(scenario: &Scenario, trial_index: u64) -> Result<TrialRecord> {
    scenario.validate()?;
    let seed = trial_seed(scenario.sde.seed, trial_index);
    let mut lp = Loop {
        scenario,
        design_noise: scenario.controller_noise(),
        gamma: match scenario.controller.mode {
            ControllerMode::Stochastic => scenario.controller.gamma,
            ControllerMode::Deterministic => scenario.controller.k,
        },
        rows: Vec::with_capacity(scenario.ticks() + 2),
        max_excess: f64::NEG_INFINITY,
        steps: 0,
        clamped: 0,
    };
    let breached = match scenario.mode {
        SimulationMode::PointCloud => point_cloud_loop(&mut lp, seed)?,
        SimulationMode::Pose => pose_loop(&mut lp, seed)?,
    };
    let outcome = match breached {
        true => Outcome::Breached {
            t: lp.rows.last().map_or(0.0, |r| r.t),
        },
        false => Outcome::Safe,
    };
    Ok(TrialRecord {
        trial_index,
        seed,
        chatter: chatter(&lp.rows),
        rows: lp.rows,
        outcome,
        max_generator_excess: lp.max_excess,
        steps: lp.steps,
        clamped: lp.clamped,
    })
}

fn initial_decision(lp: &mut Loop, scan: &Scan) -> Result<Decision> {
    lp.decide(scan, 0.0).map_err(|e| match e {
        Error::OutsideSafeSet { .. } | Error::DegeneratePoint { .. } => {
            Error::InvalidInitialState(Box::new(e))
        }
        other => other,
    })
}

fn point_cloud_loop(lp: &mut Loop, seed: u64) -> Result<bool> {
    let s = lp.scenario;
    let mut scan = s
        .initial_scan()
        .map_err(|e| Error::InvalidInitialState(Box::new(e)))?;
    let noise = s.noise;
    let dt = s.sde.dt;
    let ticks = s.ticks();
    let mut wiener = WienerProcess::new(seed);

    let mut decision = initial_decision(lp, &scan)?;
    for k in 0..=ticks {
        let t = k as f64 * dt;
        if k > 0 && s.sde.feedback != Feedback::Implicit {
            decision = lp.decide(&scan, t)?;
        }
        lp.record(&scan, t, &decision);
        if k == ticks {
            break;
        }
        let end = t + dt;
        match s.sde.feedback {
            Feedback::Held => {
                let h = dt / s.sde.substeps as f64;
                for j in 0..s.sde.substeps {
                    advance(
                        &mut scan,
                        decision.applied,
                        &noise,
                        &s.vehicle,
                        h,
                        wiener.increment(h),
                    );
                    lp.steps += 1;
                    let tau = t + (j + 1) as f64 * h;
                    if lp.check_breach(&scan, tau, decision.applied) {
                        return Ok(true);
                    }
                }
            }
            Feedback::Continuous => {
                let mut tau = t;
                let mut first = true;
                loop {
                    if !first {
                        decision = lp.decide(&scan, tau)?;
                    }
                    first = false;
                    let remaining = end - tau;
                    let h = adaptive_step(
                        &scan,
                        decision.applied,
                        &noise,
                        &s.vehicle,
                        &s.sde,
                        remaining,
                    );
                    advance(
                        &mut scan,
                        decision.applied,
                        &noise,
                        &s.vehicle,
                        h,
                        wiener.increment(h),
                    );
                    lp.steps += 1;
                    tau += h;
                    if lp.check_breach(&scan, tau, decision.applied) {
                        return Ok(true);
                    }
                    if end - tau <= 1e-9 * dt {
                        break;
                    }
                }
            }
            Feedback::Implicit => {
                let h_cap = dt / s.sde.substeps as f64;
                let mut tau = t;
                while end - tau > 1e-9 * dt {
                    let bound = noise_step_bound(&scan, &noise, &s.vehicle, &s.sde);
                    let mut h = h_cap.min(bound).max(s.sde.min_step);
                    if end - tau < h * (1.0 + 1e-9) {
                        h = end - tau;
                    }
                    let dw = wiener.increment(h);
                    // intervals still to cover, in time order
                    let mut pending = vec![(h, dw)];
                    while let Some((h, dw)) = pending.pop() {
                        let next_t = tau + h;
                        match implicit_step(lp, &scan, decision.applied, next_t, h, dw) {
                            Some((next, next_decision, clamped)) => {
                                lp.account(&next_decision, clamped);
                                scan = next;
                                decision = next_decision;
                                lp.steps += 1;
                                tau = next_t;
                            }
                            None if h >= 2.0 * s.sde.min_step => {
                                let (first, second) = wiener.split(dw, h);
                                pending.push((0.5 * h, second));
                                pending.push((0.5 * h, first));
                            }
                            None => {
                                advance(&mut scan, decision.applied, &noise, &s.vehicle, h, dw);
                                lp.steps += 1;
                                tau = next_t;
                                if lp.check_breach(&scan, tau, decision.applied) {
                                    return Ok(true);
                                }
                                decision = lp.decide(&scan, tau)?;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(false)
}

/// Finds `a = phi(x(a))`, where `x(a)` is the scan after a step of length `h`
/// under input `a` and increment `dw`, by damped Newton iteration from
/// `guess`. Returns the new scan, the decision there and whether it was
/// clamped, or `None` without a solution inside the safe set.
fn implicit_step(
    lp: &Loop,
    scan: &Scan,
    guess: ControlInput,
    t_end: f64,
    h: f64,
    dw: f64,
) -> Option<(Scan, Decision, bool)> {
    let s = lp.scenario;
    let params = &s.vehicle;
    let (_, m_min) = scan.min_margin(params)?;
    // largest sensitivity of any margin to the input over the step
    let gain = scan
        .points
        .iter()
        .map(|p| {
            let zero = margin_drift(p, ControlInput::ZERO, &NoiseParams::ZERO, params);
            let dv = margin_drift(
                p,
                ControlInput { v: 1.0, w: 0.0 },
                &NoiseParams::ZERO,
                params,
            );
            let dw = margin_drift(
                p,
                ControlInput { v: 0.0, w: 1.0 },
                &NoiseParams::ZERO,
                params,
            );
            (dv - zero).abs().max((dw - zero).abs())
        })
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);
    let input_scale = m_min / (h * gain);
    let tol = (1e-6 * input_scale).max(1e-15);
    // rounding in margins near zero puts a floor under the residual; an
    // iterate that stalls within this bound moves no margin by more than 1%
    let stall_tol = 1e-2 * input_scale;
    let delta = (1e-4 * input_scale).min(1e-7);

    let residual = |a: ControlInput| -> Option<(Scan, Decision, bool, [f64; 2])> {
        let mut next = scan.clone();
        for p in next.points.iter_mut() {
            *p = margin_step(p, a, &s.noise, params, h, dw);
        }
        if !(next.min_margin(params)?.1 > 0.0) {
            return None;
        }
        let (decision, clamped) = lp.control(&next, t_end).ok()?;
        let r = [a.v - decision.applied.v, a.w - decision.applied.w];
        Some((next, decision, clamped, r))
    };
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut a = guess;
    let mut current = residual(a)?;
    for _ in 0..40 {
        if norm(current.3) <= tol {
            let (next, decision, clamped, _) = current;
            return Some((next, decision, clamped));
        }
        let r = current.3;
        // columns of the Jacobian, one per input channel
        let mut cols = [[0.0; 2]; 2];
        for (j, col) in cols.iter_mut().enumerate() {
            let mut probe = a;
            let mut step = delta;
            let shifted = loop {
                if j == 0 {
                    probe.v = a.v + step;
                } else {
                    probe.w = a.w + step;
                }
                if let Some(x) = residual(probe) {
                    break x.3;
                }
                if step < 0.0 {
                    return None;
                }
                step = -step;
            };
            *col = [(shifted[0] - r[0]) / step, (shifted[1] - r[1]) / step];
        }
        let jac = [[cols[0][0], cols[1][0]], [cols[0][1], cols[1][1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if !(det.abs() > 0.0) || !det.is_finite() {
            return None;
        }
        let dv = -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det;
        let dw_ = -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det;
        let mut lambda = 1.0;
        loop {
            let trial = ControlInput {
                v: a.v + lambda * dv,
                w: a.w + lambda * dw_,
            };
            if let Some(next) = residual(trial) {
                if norm(next.3) < norm(r) {
                    a = trial;
                    current = next;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-6 {
                if norm(r) <= stall_tol {
                    let (next, decision, clamped, _) = current;
                    return Some((next, decision, clamped));
                }
                return None;
            }
        }
    }
    if norm(current.3) <= stall_tol {
        let (next, decision, clamped, _) = current;
        return Some((next, decision, clamped));
    }
    None
}

/// Pose mode: the vehicle moves through the map and the LiDAR is sampled at
/// every inner step. The vibration enters as a common-mode offset on the
/// measured distances and bearings driven by the same Wiener process, which
/// gives the measured points exactly the diffusion of the point-cloud
/// system. The input is held over each control interval.
fn pose_loop(lp: &mut Loop, seed: u64) -> Result<bool> {
    let s = lp.scenario;
    let InitialState::Pose(start) = s.initial else {
        return Err(Error::InvalidParams(
            "pose mode needs an initial pose".into(),
        ));
    };
    let noise = s.noise;
    let dt = s.sde.dt;
    let ticks = s.ticks();
    let h = dt / s.sde.substeps as f64;
    let mut wiener = WienerProcess::new(seed);
    let mut pose = start;
    let mut offset = [0.0f64; 2];

    let measure = |pose: &Pose, offset: [f64; 2]| -> Result<Scan> {
        let sensor = sensor_pose_from(pose, &s.vehicle);
        let returns = raycast(&s.environment, &sensor, s.vehicle.n_beams)?;
        let mut scan = Scan::from_raw(&returns, &s.vehicle)?;
        for p in scan.points.iter_mut() {
            p.x1 += offset[0];
            p.x2 = wrap_angle(p.x2 + offset[1]);
        }
        Ok(scan)
    };

    let mut scan = measure(&pose, offset).map_err(|e| Error::InvalidInitialState(Box::new(e)))?;
    let mut decision = initial_decision(lp, &scan)?;
    for k in 0..=ticks {
        let t = k as f64 * dt;
        if k > 0 {
            decision = lp.decide(&scan, t)?;
        }
        lp.record(&scan, t, &decision);
        if k == ticks {
            break;
        }
        for j in 0..s.sde.substeps {
            pose = pose_step(pose, decision.applied, h);
            let dw = wiener.increment(h);
            offset[0] += noise.c1 * dw;
            offset[1] += noise.c2 * dw;
            lp.steps += 1;
            let tau = t + (j + 1) as f64 * h;
            scan = match measure(&pose, offset) {
                Ok(scan) => scan,
                Err(Error::SensorEmbedded { .. } | Error::DegeneratePoint { .. }) => {
                    lp.rows.push(TickRow {
                        t: tau,
                        x1_istar: f64::NAN,
                        alpha_ci_istar: f64::NAN,
                        x2_istar: f64::NAN,
                        v_applied: decision.applied.v,
                        w_applied: decision.applied.w,
                        b: f64::NAN,
                        margin: f64::NEG_INFINITY,
                        lgb: [f64::NAN; 2],
                        ito: f64::NAN,
                        gamma_b: f64::NAN,
                    });
                    return Ok(true);
                }
                Err(e) => return Err(e),
            };
            if lp.check_breach(&scan, tau, decision.applied) {
                return Ok(true);
            }
        }
    }
    Ok(false)
}
