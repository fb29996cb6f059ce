//! Closed-form safety compensators.
//!
//! Both laws leave the preinput alone while the barrier condition already
//! holds and otherwise add the smallest correction along `L_g B` (or, for
//! [`PsiForm::FullCancel`], replace the preinput by a move along `L_g B`) so
//! that the condition holds with equality. No drift term appears: the
//! point-cloud system is driftless.

use serde::{Deserialize, Serialize};

use crate::barrier::BarrierEval;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreInput {
    pub v_o: f64,
    pub w_o: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlInput {
    pub v: f64,
    pub w: f64,
}

impl ControlInput {
    pub const ZERO: ControlInput = ControlInput { v: 0.0, w: 0.0 };

    fn along(lgb: [f64; 2], scale: f64) -> Self {
        Self {
            v: scale * lgb[0],
            w: scale * lgb[1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Deterministic,
    #[default]
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PsiForm {
    /// Drop the preinput and move along `L_g B` at the boundary rate.
    #[default]
    FullCancel,
    /// Remove only the component of the preinput that violates the
    /// condition.
    Projection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    /// Stochastic barrier rate, 1/s.
    pub gamma: f64,
    /// Deterministic barrier rate, 1/s.
    pub k: f64,
    /// Deterministic offset, 1/(m s).
    pub c: f64,
    pub mode: ControllerMode,
    pub psi_form: PsiForm,
    /// Gradient-norm floor below which the closed forms are undefined.
    pub eps_g: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            k: 0.5,
            c: 0.0,
            mode: ControllerMode::Stochastic,
            psi_form: PsiForm::FullCancel,
            eps_g: 1e-9,
        }
    }
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !(ok(self.gamma) && ok(self.k) && ok(self.c)) {
            return Err(Error::InvalidParams(
                "gamma, k and c must be finite and >= 0".into(),
            ));
        }
        if !(self.eps_g.is_finite() && self.eps_g > 0.0) {
            return Err(Error::InvalidParams("eps_g must be > 0".into()));
        }
        Ok(())
    }

    /// Dispatches on [`ControllerMode`].
    pub fn compensate(&self, eval: &BarrierEval, pre: PreInput) -> Result<ControlInput> {
        match self.mode {
            ControllerMode::Deterministic => phi_d(eval, pre, self),
            ControllerMode::Stochastic => phi_n(eval, pre, self),
        }
    }
}

/// Relative back-off from the boundary when the filter is active. The
/// condition then holds after the rounding of its own evaluation, whose terms
/// grow like `1/m^3` near the wall.
pub const ROUNDING_GUARD: f64 = 16.0 * f64::EPSILON;

fn dot_pre(lgb: [f64; 2], pre: PreInput) -> f64 {
    lgb[0] * pre.v_o + lgb[1] * pre.w_o
}

fn checked_norm_sq(eval: &BarrierEval, cfg: &ControllerConfig) -> Result<f64> {
    let norm_sq = eval.lgb_norm_sq();
    let norm = norm_sq.sqrt();
    if !(norm >= cfg.eps_g) {
        return Err(Error::GradientDegenerate { norm });
    }
    Ok(norm_sq)
}

/// Deterministic compensator with `I_d = L_g B u_o` and `J_d = K B + C`.
pub fn phi_d(eval: &BarrierEval, pre: PreInput, cfg: &ControllerConfig) -> Result<ControlInput> {
    let i_d = dot_pre(eval.lgb, pre);
    let j_d = cfg.k * eval.b + cfg.c;
    if i_d <= j_d {
        return Ok(ControlInput::ZERO);
    }
    let norm_sq = checked_norm_sq(eval, cfg)?;
    let guard = ROUNDING_GUARD * (i_d.abs() + j_d.abs());
    Ok(ControlInput::along(
        eval.lgb,
        -(i_d - j_d + guard) / norm_sq,
    ))
}

/// Stochastic compensator with `I = L_g B u_o + L_sigma^I B` and
/// `J = gamma B`.
pub fn phi_n(eval: &BarrierEval, pre: PreInput, cfg: &ControllerConfig) -> Result<ControlInput> {
    let dot = dot_pre(eval.lgb, pre);
    let i = dot + eval.ito;
    let j = cfg.gamma * eval.b;
    if i <= j {
        return Ok(ControlInput::ZERO);
    }
    let norm_sq = checked_norm_sq(eval, cfg)?;
    let guard = ROUNDING_GUARD * (dot.abs() + eval.ito.abs() + j.abs());
    let u = match cfg.psi_form {
        PsiForm::Projection => ControlInput::along(eval.lgb, -(i - j + guard) / norm_sq),
        PsiForm::FullCancel => {
            let scale = (j - guard - eval.ito) / norm_sq;
            ControlInput {
                v: -pre.v_o + scale * eval.lgb[0],
                w: -pre.w_o + scale * eval.lgb[1],
            }
        }
    };
    Ok(u)
}

pub fn applied_input(pre: PreInput, u: ControlInput) -> ControlInput {
    ControlInput {
        v: pre.v_o + u.v,
        w: pre.w_o + u.w,
    }
}

/// Itô generator of the barrier along the applied input,
/// `L_g B (u_o + u) + L_sigma^I B`.
pub fn generator(eval: &BarrierEval, applied: ControlInput) -> f64 {
    eval.lgb[0] * applied.v + eval.lgb[1] * applied.w + eval.ito
}
