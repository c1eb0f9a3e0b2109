//! Sliding-mode control with a two-filter disturbance observer.

use serde::{Deserialize, Serialize};

use super::pid::heading_field;
use super::{ControlContext, ControlOutput, Diagnostics};
use crate::error::{Error, Result};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmcGains {
    pub gamma: f64,
    pub lambda: f64,
    /// Diagonals of K1 (1/s), K2 (1/s^2) and K3 (-).
    pub k1: Vec2,
    pub k2: Vec2,
    pub k3: Vec2,
    /// Switching gain (N).
    pub k4: f64,
    /// Observer filter time constant (s).
    pub eta: f64,
    /// Boundary-layer width (m).
    pub phi: f64,
    pub wp: Vec2,
    pub wr: Vec2,
}

impl Default for SmcGains {
    fn default() -> Self {
        SmcGains::default_for(20.0, false)
    }
}

impl SmcGains {
    /// Defaults for the 10 Hz loop, grid-searched at 20 cP on held-out seeds.
    /// K1..K4 scale with viscosity relative to 20 cP, which keeps the loop
    /// gain relative to the drag coefficient fixed.
    pub fn default_for(viscosity_cp: f64, flow: bool) -> Self {
        let scale = viscosity_cp / 20.0;
        let (k4, eta, phi) = if flow { FLOW_SET } else { STATIC_SET };
        SmcGains {
            gamma: 2.0,
            lambda: 1.0,
            k1: Vec2::repeat(2.0 * scale),
            k2: Vec2::repeat(1.0 * scale),
            k3: Vec2::repeat(1.0 * scale),
            k4: k4 * scale,
            eta,
            phi,
            wp: Vec2::repeat(1.0),
            wr: Vec2::repeat(1.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.gamma, self.lambda, self.k4, self.eta, self.phi]
            .iter()
            .chain(self.k1.iter())
            .chain(self.k2.iter())
            .chain(self.k3.iter())
            .all(|&v| v > 0.0 && v.is_finite());
        let weights = self.wp.iter().chain(self.wr.iter()).all(|&v| v >= 0.0 && v.is_finite());
        if !(positive && weights) {
            return Err(Error::Config(format!("SMC gains must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// (K4 in N, eta in s, phi in m).
const STATIC_SET: (f64, f64, f64) = (4.5e-7, 0.1, 18e-3);
const FLOW_SET: (f64, f64, f64) = (3.6e-6, 0.05, 18e-3);

/// Observer filter states.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DobState {
    /// Low-passed velocity error (m/s).
    pub p: Vec2,
    /// Low-passed applied force (N).
    pub r: Vec2,
    /// Force returned at the previous step (N).
    pub f_prev: Vec2,
}

pub fn sliding_surface(e: Vec2, e_dot: Vec2, gamma: f64, lambda: f64) -> Vec2 {
    gamma * e_dot + lambda * e
}

/// `K4 tanh(s / phi)` per axis.
pub fn switching_term(s: Vec2, k4: f64, phi: f64) -> Vec2 {
    s.map(|si| k4 * (si / phi).tanh())
}

/// Advance both filters exactly over `dt` with inputs held, then form the
/// disturbance estimate `m Wp (p - e_dot) / eta - c_t (v + V) - r`.
#[allow(clippy::too_many_arguments)]
pub fn dob_update(
    dob: &DobState,
    e_dot: Vec2,
    v_robot: Vec2,
    v_flow: Vec2,
    c_t: f64,
    mass: f64,
    gains: &SmcGains,
    dt: f64,
) -> (DobState, Vec2) {
    // fraction of the gap closed over dt: 1 - exp(-w dt / eta)
    let alpha = |w: f64| -(-w * dt / gains.eta).exp_m1();
    let mut next = *dob;
    for i in 0..2 {
        next.p[i] = dob.p[i] + alpha(gains.wp[i]) * (e_dot[i] - dob.p[i]);
        next.r[i] = dob.r[i] + alpha(gains.wr[i]) * (dob.f_prev[i] - dob.r[i]);
    }
    let d_hat = disturbance_estimate(&next, e_dot, v_robot, v_flow, c_t, mass, gains);
    (next, d_hat)
}

fn disturbance_estimate(
    dob: &DobState,
    e_dot: Vec2,
    v_robot: Vec2,
    v_flow: Vec2,
    c_t: f64,
    mass: f64,
    gains: &SmcGains,
) -> Vec2 {
    (mass / gains.eta) * gains.wp.component_mul(&(dob.p - e_dot)) - c_t * (v_robot + v_flow) - dob.r
}

/// Field direction along the path tangent: heading `atan2(t_x, t_y)` fed
/// through `[sin, cos]`.
pub(super) fn tangent_field(tangent: Vec2) -> Vec2 {
    let theta = tangent.x.atan2(tangent.y);
    Vec2::new(theta.sin(), theta.cos())
}

/// Per-tick inputs of the sliding-mode law (SI units).
#[derive(Debug, Clone, Copy)]
pub struct SmcInput {
    pub e: Vec2,
    pub e_dot: Vec2,
    pub velocity: Vec2,
    pub v_flow: Vec2,
    /// Direction the commanded field should point along.
    pub heading: Vec2,
    pub c_t: f64,
    pub mass: f64,
    pub dt: f64,
}

/// `F = -d_hat + u_eq + u_sw`. Without the observer `d_hat` is zero and the
/// filters are left untouched.
pub fn smc_dob_step(
    input: &SmcInput,
    dob: &DobState,
    gains: &SmcGains,
    with_dob: bool,
) -> (ControlOutput, DobState) {
    let SmcInput {
        e,
        e_dot,
        velocity,
        v_flow,
        c_t,
        mass,
        dt,
        ..
    } = *input;
    let s = sliding_surface(e, e_dot, gains.gamma, gains.lambda);
    let (mut next, d_hat) = if with_dob {
        dob_update(dob, e_dot, velocity, v_flow, c_t, mass, gains, dt)
    } else {
        (*dob, Vec2::zeros())
    };
    let shaped = gains.k1.component_mul(&e_dot) + gains.k2.component_mul(&e);
    let u_eq = mass * shaped.component_div(&gains.k3) - c_t * (velocity + v_flow);
    let u_sw = switching_term(s, gains.k4, gains.phi);
    let force = -d_hat + u_eq + u_sw;
    next.f_prev = force;
    let out = ControlOutput {
        force,
        b_dir: tangent_field(input.heading),
        diagnostics: Diagnostics::Smc { s, d_hat, u_eq, u_sw },
    };
    (out, next)
}

#[derive(Debug, Clone)]
pub struct SmcDob {
    pub gains: SmcGains,
    pub dob: DobState,
    pub with_dob: bool,
    /// Fixed field heading (rad from +y, clockwise); `None` tracks the path tangent.
    pub heading: Option<f64>,
}

impl SmcDob {
    pub fn new(gains: SmcGains, with_dob: bool, heading: Option<f64>) -> Self {
        SmcDob {
            gains,
            dob: DobState::default(),
            with_dob,
            heading,
        }
    }

    pub fn step(&mut self, ctx: &ControlContext<'_>) -> ControlOutput {
        let (e, e_dot, tangent) = ctx.errors();
        let input = SmcInput {
            e,
            e_dot,
            velocity: ctx.velocity,
            v_flow: (ctx.flow)(ctx.position),
            heading: self.heading.map_or(tangent, heading_field),
            c_t: ctx.c_t,
            mass: ctx.mass,
            dt: ctx.dt,
        };
        let (out, next) = smc_dob_step(&input, &self.dob, &self.gains, self.with_dob);
        self.dob = next;
        out
    }
}
