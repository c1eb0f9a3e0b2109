//! PID with flow-drag feed-forward and a fixed field heading.

use serde::{Deserialize, Serialize};

use super::{ControlContext, ControlOutput, Diagnostics};
use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    /// Diagonals (N/m, N/(m s), N s/m).
    pub kp: Vec2,
    pub ki: Vec2,
    pub kd: Vec2,
    /// Per-axis clamp on the error integral (m s).
    pub integral_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        PidGains::default_for(20.0, false)
    }
}

impl PidGains {
    /// Defaults for the 10 Hz loop, grid-searched on held-out seeds.
    pub fn default_for(_viscosity_cp: f64, flow: bool) -> Self {
        let (kp, ki, kd) = if flow { FLOW_SET } else { STATIC_SET };
        PidGains {
            kp: Vec2::repeat(kp),
            ki: Vec2::repeat(ki),
            kd: Vec2::repeat(kd),
            integral_limit: 5e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self
            .kp
            .iter()
            .chain(self.ki.iter())
            .chain(self.kd.iter())
            .all(|&v| v >= 0.0 && v.is_finite())
            && self.integral_limit >= 0.0;
        if !ok {
            return Err(Error::Config(format!("PID gains must be non-negative: {self:?}")));
        }
        Ok(())
    }
}

/// (Kp, Ki, Kd).
const STATIC_SET: (f64, f64, f64) = (1.0e-3, 1.0e-3, 1.0e-4);
const FLOW_SET: (f64, f64, f64) = (1.5e-3, 3.0e-3, 3.0e-4);

/// Unit field `[sin theta, cos theta]`.
pub fn heading_field(theta: f64) -> Vec2 {
    Vec2::new(theta.sin(), theta.cos())
}

#[derive(Debug, Clone)]
pub struct Pid {
    pub gains: PidGains,
    pub heading: f64,
    pub integral: Vec2,
    prev_error: Option<Vec2>,
}

impl Pid {
    pub fn new(gains: PidGains, heading: f64) -> Self {
        Pid {
            gains,
            heading,
            integral: Vec2::zeros(),
            prev_error: None,
        }
    }

    /// `F = Kp e + Ki int(e) + Kd e_dot - c_t V`, trapezoidal integral clamped
    /// per axis.
    pub fn update(&mut self, e: Vec2, e_dot: Vec2, v_flow: Vec2, c_t: f64, dt: f64) -> ControlOutput {
        let prev = self.prev_error.unwrap_or(e);
        let lim = self.gains.integral_limit;
        self.integral = (self.integral + 0.5 * dt * (e + prev)).map(|v| v.clamp(-lim, lim));
        self.prev_error = Some(e);
        let p = self.gains.kp.component_mul(&e);
        let i = self.gains.ki.component_mul(&self.integral);
        let d = self.gains.kd.component_mul(&e_dot);
        ControlOutput {
            force: p + i + d - c_t * v_flow,
            b_dir: heading_field(self.heading),
            diagnostics: Diagnostics::Pid { p, i, d },
        }
    }

    pub fn step(&mut self, ctx: &ControlContext<'_>) -> ControlOutput {
        let (e, e_dot, _) = ctx.errors();
        self.update(e, e_dot, (ctx.flow)(ctx.position), ctx.c_t, ctx.dt)
    }
}
