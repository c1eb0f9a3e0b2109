//! Simulation testbed for autonomous navigation of a magnetically actuated
//! millirobot through a heart phantom under pulsatile flow.
//!
//! The crate is organised along the signal path of one control tick:
//!
//! * [`sensing`] turns the true robot pose into a noisy, quantized measurement.
//! * [`control`] maps measurement + reference to a desired planar force and
//!   field heading (SMC with disturbance observer, PID, MPC).
//! * [`coilfield`] converts force/field demands into eight coil currents.
//! * [`dynamics`] integrates the point-mass robot through the [`flow`] field.
//! * [`planner`] produces the reference path offline from a canal mask.
//! * [`harness`] wires everything into seeded trials and comparison suites.

// `!(x > 0.0)` is how validation rejects NaN along with the bad range
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coilfield;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod flow;
pub mod harness;
pub mod phantom;
pub mod planner;
pub mod sensing;
pub mod svg;

pub use error::{Error, Result};

pub type Vec2 = nalgebra::Vector2<f64>;
pub type Mat2 = nalgebra::Matrix2<f64>;
