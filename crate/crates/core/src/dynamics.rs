//! Planar point-mass dynamics of the capsule in a viscous, moving fluid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// Robot length (m).
pub const ROBOT_LENGTH_M: f64 = 7.40e-3;
/// Robot radius (m), half the 2.80 mm diameter.
pub const ROBOT_RADIUS_M: f64 = 1.40e-3;
/// Dipole moment of the embedded 1 mm N50 disk (A m^2).
pub const ROBOT_DIPOLE_AM2: f64 = 8.60e-4;
/// Capsule mass (kg).
pub const ROBOT_MASS_KG: f64 = 5.0e-5;

/// Converts centipoise to Pa s.
pub fn cp_to_pa_s(cp: f64) -> f64 {
    cp * 1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotParams {
    #[serde(rename = "mass_kg")]
    pub mass: f64,
    #[serde(rename = "length_m")]
    pub length: f64,
    #[serde(rename = "radius_m")]
    pub radius: f64,
    #[serde(rename = "dipole_moment_am2")]
    pub dipole_moment: f64,
    #[serde(default, rename = "c_t_override")]
    pub c_t_override: Option<f64>,
}

impl Default for RobotParams {
    fn default() -> Self {
        RobotParams {
            mass: ROBOT_MASS_KG,
            length: ROBOT_LENGTH_M,
            radius: ROBOT_RADIUS_M,
            dipole_moment: ROBOT_DIPOLE_AM2,
            c_t_override: None,
        }
    }
}

impl RobotParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) {
            return Err(Error::Config("robot mass must be positive".into()));
        }
        if !(self.length > self.radius && self.radius > 0.0) {
            return Err(Error::Config("robot needs length > radius > 0".into()));
        }
        if !(self.dipole_moment > 0.0) {
            return Err(Error::Config("dipole moment must be positive".into()));
        }
        if let Some(c) = self.c_t_override {
            if !(c > 0.0) {
                return Err(Error::Config("c_t override must be positive".into()));
            }
        }
        Ok(())
    }

    /// Damping coefficient in a fluid of the given viscosity (Pa s).
    pub fn c_t(&self, mu: f64) -> Result<f64> {
        match self.c_t_override {
            Some(c) => Ok(c),
            None => drag_coefficient(mu, self.length, self.radius),
        }
    }

    /// Dipole vector for a given heading.
    pub fn dipole(&self, heading: f64) -> Vec2 {
        self.dipole_moment * Vec2::new(heading.cos(), heading.sin())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobotState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub heading: f64,
    pub t: f64,
}

impl RobotState {
    pub fn at_rest(position: Vec2, heading: f64) -> Self {
        RobotState {
            position,
            velocity: Vec2::zeros(),
            heading,
            t: 0.0,
        }
    }
}

/// Translational damping of a slender ellipsoid, `2 pi mu L / ln(L / r)`.
pub fn drag_coefficient(mu: f64, length: f64, radius: f64) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("viscosity must be positive, got {mu}")));
    }
    if !(radius > 0.0 && length > radius) {
        return Err(Error::Domain(format!(
            "need L > r > 0 for a positive log term (L = {length}, r = {radius})"
        )));
    }
    Ok(2.0 * PI * mu * length / (length / radius).ln())
}

/// Drag on the robot; positive along the flow relative to the robot.
#[inline]
pub fn drag_force(c_t: f64, v_robot: Vec2, v_flow: Vec2) -> Vec2 {
    c_t * (v_flow - v_robot)
}

/// Anything that can report the fluid velocity (m/s) at a position (m) and time.
pub trait FlowSource {
    fn velocity(&self, position_m: Vec2, t: f64) -> Vec2;
}

impl<F: Fn(Vec2, f64) -> Vec2> FlowSource for F {
    fn velocity(&self, position_m: Vec2, t: f64) -> Vec2 {
        self(position_m, t)
    }
}

/// Largest internal substep (s).
pub const MAX_SUBSTEP_S: f64 = 1e-3;

pub fn substep_count(dt: f64, mass: f64, c_t: f64) -> usize {
    let h_max = MAX_SUBSTEP_S.min(mass / (10.0 * c_t));
    (dt / h_max * (1.0 - 1e-12)).ceil().max(1.0) as usize
}

/// Advance the robot by `dt` with the applied force held constant.
///
/// Semi-implicit Euler on substeps no longer than `min(1 ms, m / (10 c_t))`.
/// The heading snaps to the applied field direction when the field is nonzero.
pub fn step(
    state: &RobotState,
    force: Vec2,
    field: Vec2,
    flow: &dyn FlowSource,
    mass: f64,
    c_t: f64,
    dt: f64,
) -> RobotState {
    step_with_substeps(state, force, field, flow, mass, c_t, dt, substep_count(dt, mass, c_t))
}

#[allow(clippy::too_many_arguments)]
pub fn step_with_substeps(
    state: &RobotState,
    force: Vec2,
    field: Vec2,
    flow: &dyn FlowSource,
    mass: f64,
    c_t: f64,
    dt: f64,
    substeps: usize,
) -> RobotState {
    let h = dt / substeps as f64;
    let mut x = state.position;
    let mut v = state.velocity;
    for k in 0..substeps {
        let t = state.t + k as f64 * h;
        let v_flow = flow.velocity(x, t);
        v += (h / mass) * (force + drag_force(c_t, v, v_flow));
        x += h * v;
    }
    let heading = if field.norm() > 0.0 {
        field.y.atan2(field.x)
    } else {
        state.heading
    };
    RobotState {
        position: x,
        velocity: v,
        heading,
        t: state.t + dt,
    }
}
