//! Tracking controllers: each maps the measured state and the reference to a
//! desired planar force and a unit field direction.
//!
//! Internally everything is SI (m, m/s, N). Errors follow `e = x_d - x`.

mod mpc;
mod pid;
mod smc;

pub use mpc::{discretize, Discretization, Mpc, MpcConfig, MpcProblem};
pub use pid::{heading_field, Pid, PidGains};
pub use smc::{dob_update, sliding_surface, smc_dob_step, switching_term, DobState, SmcDob, SmcGains, SmcInput};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::planner::ReferenceTrajectory;
use crate::Vec2;

/// What a controller sees at one tick.
pub struct ControlContext<'a> {
    pub t: f64,
    /// Measured position (m).
    pub position: Vec2,
    /// Estimated velocity (m/s).
    pub velocity: Vec2,
    pub reference: &'a ReferenceTrajectory,
    /// Controller-side flow estimate at a position (m -> m/s).
    pub flow: &'a dyn Fn(Vec2) -> Vec2,
    pub c_t: f64,
    pub mass: f64,
    pub dt: f64,
}

impl ControlContext<'_> {
    /// Tracking error and its rate at time `t` (SI).
    pub fn errors(&self) -> (Vec2, Vec2, Vec2) {
        let r = self.reference.sample(self.t);
        let e = r.position_mm * 1e-3 - self.position;
        let e_dot = r.velocity_mm_s * 1e-3 - self.velocity;
        (e, e_dot, r.tangent)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Diagnostics {
    Smc {
        s: Vec2,
        d_hat: Vec2,
        u_eq: Vec2,
        u_sw: Vec2,
    },
    Pid {
        p: Vec2,
        i: Vec2,
        d: Vec2,
    },
    Mpc {
        cost: f64,
    },
    #[default]
    None,
}

impl Diagnostics {
    pub fn s(&self) -> Vec2 {
        match self {
            Diagnostics::Smc { s, .. } => *s,
            _ => Vec2::zeros(),
        }
    }

    pub fn d_hat(&self) -> Vec2 {
        match self {
            Diagnostics::Smc { d_hat, .. } => *d_hat,
            _ => Vec2::zeros(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub force: Vec2,
    /// Unit field heading.
    pub b_dir: Vec2,
    pub diagnostics: Diagnostics,
}

impl ControlOutput {
    pub fn idle(b_dir: Vec2) -> Self {
        ControlOutput {
            force: Vec2::zeros(),
            b_dir,
            diagnostics: Diagnostics::None,
        }
    }
}

/// Scenario-level controller selection; missing gains take the defaults for
/// the scenario's viscosity and flow condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum ControllerConfig {
    #[serde(rename = "PID")]
    Pid {
        #[serde(default)]
        gains: Option<PidGains>,
        #[serde(default = "default_heading_deg")]
        heading_deg: f64,
    },
    #[serde(rename = "MPC")]
    Mpc {
        #[serde(default)]
        gains: Option<MpcConfig>,
        #[serde(default = "default_heading_deg")]
        heading_deg: f64,
    },
    #[serde(rename = "SMC_DOB")]
    SmcDob {
        #[serde(default)]
        gains: Option<SmcGains>,
        #[serde(default = "default_heading_deg")]
        heading_deg: f64,
        /// Follow the local path tangent instead of `heading_deg`.
        #[serde(default)]
        tangent_heading: bool,
    },
    #[serde(rename = "SMC_NO_DOB")]
    SmcNoDob {
        #[serde(default)]
        gains: Option<SmcGains>,
        #[serde(default = "default_heading_deg")]
        heading_deg: f64,
        /// Follow the local path tangent instead of `heading_deg`.
        #[serde(default)]
        tangent_heading: bool,
    },
}

fn default_heading_deg() -> f64 {
    45.0
}

impl ControllerConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerConfig::Pid { .. } => "PID",
            ControllerConfig::Mpc { .. } => "MPC",
            ControllerConfig::SmcDob { .. } => "SMC_DOB",
            ControllerConfig::SmcNoDob { .. } => "SMC_NO_DOB",
        }
    }

    pub fn pid() -> Self {
        ControllerConfig::Pid {
            gains: None,
            heading_deg: default_heading_deg(),
        }
    }

    pub fn mpc() -> Self {
        ControllerConfig::Mpc {
            gains: None,
            heading_deg: default_heading_deg(),
        }
    }

    pub fn smc_dob() -> Self {
        ControllerConfig::SmcDob {
            gains: None,
            heading_deg: default_heading_deg(),
            tangent_heading: false,
        }
    }

    pub fn smc_no_dob() -> Self {
        ControllerConfig::SmcNoDob {
            gains: None,
            heading_deg: default_heading_deg(),
            tangent_heading: false,
        }
    }

    pub fn build(&self, viscosity_cp: f64, flow: bool) -> Result<Controller> {
        Ok(match self {
            ControllerConfig::Pid { gains, heading_deg } => {
                let g = gains.unwrap_or_else(|| PidGains::default_for(viscosity_cp, flow));
                g.validate()?;
                Controller::Pid(Pid::new(g, heading_deg.to_radians()))
            }
            ControllerConfig::Mpc { gains, heading_deg } => {
                let cfg = gains.unwrap_or_else(|| MpcConfig::default_for(flow));
                cfg.validate()?;
                Controller::Mpc(Mpc::new(cfg, heading_deg.to_radians()))
            }
            ControllerConfig::SmcDob {
                gains,
                heading_deg,
                tangent_heading,
            }
            | ControllerConfig::SmcNoDob {
                gains,
                heading_deg,
                tangent_heading,
            } => {
                let g = gains.unwrap_or_else(|| SmcGains::default_for(viscosity_cp, flow));
                g.validate()?;
                let with_dob = matches!(self, ControllerConfig::SmcDob { .. });
                let heading = (!tangent_heading).then(|| heading_deg.to_radians());
                Controller::Smc(SmcDob::new(g, with_dob, heading))
            }
        })
    }
}

/// One controller instance with its internal state.
#[derive(Debug, Clone)]
pub enum Controller {
    Smc(SmcDob),
    Pid(Pid),
    Mpc(Mpc),
}

impl Controller {
    pub fn step(&mut self, ctx: &ControlContext<'_>) -> Result<ControlOutput> {
        match self {
            Controller::Smc(c) => Ok(c.step(ctx)),
            Controller::Pid(c) => Ok(c.step(ctx)),
            Controller::Mpc(c) => c.step(ctx),
        }
    }

    /// Field heading to use before the first valid measurement.
    pub fn initial_b_dir(&self, reference: &ReferenceTrajectory) -> Vec2 {
        match self {
            Controller::Smc(c) => match c.heading {
                Some(h) => heading_field(h),
                None => smc::tangent_field(reference.sample(0.0).tangent),
            },
            Controller::Pid(c) => heading_field(c.heading),
            Controller::Mpc(c) => heading_field(c.heading),
        }
    }

    pub fn smc_gains_mut(&mut self) -> Option<&mut SmcGains> {
        match self {
            Controller::Smc(c) => Some(&mut c.gains),
            _ => None,
        }
    }
}

/// Multipliers applied inside the high-disturbance region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetuneFactors {
    pub i_max: f64,
    pub eta: f64,
    pub phi: f64,
}

impl Default for RetuneFactors {
    fn default() -> Self {
        RetuneFactors {
            i_max: 1.78,
            eta: 1.75,
            phi: 1.5,
        }
    }
}

/// Gains and current limit after the pointwise region check. The region is
/// closed: points on an edge count as inside.
pub fn region_retune(
    position_mm: Vec2,
    gains: &SmcGains,
    i_max: f64,
    region: &[Vec2],
    factors: &RetuneFactors,
) -> (SmcGains, f64) {
    if polygon_contains(region, position_mm) {
        let mut g = *gains;
        g.eta *= factors.eta;
        g.phi *= factors.phi;
        (g, i_max * factors.i_max)
    } else {
        (*gains, i_max)
    }
}

/// Closed point-in-polygon test (even-odd rule, edges inclusive).
pub fn polygon_contains(poly: &[Vec2], p: Vec2) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        let ab = b - a;
        let ap = p - a;
        let cross = ab.x * ap.y - ab.y * ap.x;
        let scale = ab.norm() * ap.norm();
        if cross.abs() <= 1e-12 * scale.max(1e-300) && ap.dot(&ab) >= 0.0 && ap.dot(&ab) <= ab.norm_squared() {
            return true;
        }
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * ab.x;
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}
