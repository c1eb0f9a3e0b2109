use nalgebra::Vector4;
use serde::{Deserialize, Serialize};

use super::{
    Scenario, World, COMPLETION_TOLERANCE_MM, FAILURE_ERROR_MM, FAILURE_SUSTAIN_S, WORKSPACE_LIMIT_MM,
};
use crate::coilfield::{allocate_currents, assemble_actuation_matrix, force_torque, superpose, Currents};
use crate::control::{region_retune, ControlContext, ControlOutput};
use crate::dynamics::{self, cp_to_pa_s, RobotState};
use crate::error::{Error, Result};
use crate::flow::sample_flow;
use crate::planner::ReferenceTrajectory;
use crate::sensing::{Sensor, VelocityEstimator};
use crate::Vec2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    Timeout,
    TrackingError,
    WorkspaceExit,
}

impl std::fmt::Display for FailureReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FailureReason::Timeout => "timeout",
            FailureReason::TrackingError => "tracking_error",
            FailureReason::WorkspaceExit => "workspace_exit",
        })
    }
}

/// One control tick. Positions in mm, forces in N, currents in A.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub position_mm: Vec2,
    pub desired_mm: Vec2,
    pub err_mm: f64,
    pub force: Vec2,
    pub currents: Currents,
    pub s: Vec2,
    pub d_hat: Vec2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse_mm: f64,
    pub p95_mm: f64,
    pub max_mm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub series: Vec<StepRecord>,
    pub metrics: Metrics,
    pub completed: bool,
    pub failure_reason: Option<FailureReason>,
    pub scenario_hash: String,
    /// Reference waypoints (mm), for overlays.
    pub waypoints: Vec<Vec2>,
    /// Fraction of ticks whose currents were scaled down by the limit.
    pub saturated_fraction: f64,
    /// Controller-side c_t used in this trial.
    pub controller_c_t: f64,
}

/// RMSE, linearly interpolated 95th percentile and maximum.
pub fn metrics(err_mm: &[f64]) -> Result<Metrics> {
    if err_mm.is_empty() {
        return Err(Error::EmptySeries);
    }
    let n = err_mm.len() as f64;
    let rmse = (err_mm.iter().map(|e| e * e).sum::<f64>() / n).sqrt();
    let mut sorted = err_mm.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = 0.95 * (n - 1.0);
    let lo = rank.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let p95 = sorted[lo] + (rank - lo as f64) * (sorted[hi] - sorted[lo]);
    Ok(Metrics {
        rmse_mm: rmse,
        p95_mm: p95,
        max_mm: *sorted.last().unwrap(),
    })
}

/// Direction of the controller-side c_t error: over-estimate on even seeds,
/// under-estimate on odd ones.
pub fn mismatch_sign(seed: u64) -> f64 {
    if seed.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn run_trial(scenario: &Scenario) -> Result<TrialResult> {
    scenario.validate()?;
    let world = World::prepare(scenario)?;
    run_trial_in(scenario, &world)
}

/// Closed loop at the sensor rate: measure, estimate velocity, control (with
/// the local retune), allocate currents, recompute the applied force and
/// field at the true position, integrate.
pub fn run_trial_in(scenario: &Scenario, world: &World) -> Result<TrialResult> {
    scenario.validate()?;
    let dt = scenario.sensor.period();
    let mu = cp_to_pa_s(scenario.viscosity);
    let params = scenario.robot;
    let c_t = params.c_t(mu)?;
    let c_t_ctrl = c_t * (1.0 + mismatch_sign(scenario.seed) * scenario.ct_mismatch);

    let reference = ReferenceTrajectory::new(&world.path, scenario.speed)?;
    let t_end = reference.duration();
    let limit = scenario.duration_limit.unwrap_or(1.5 * t_end + 30.0);
    let goal = reference.final_point();
    let region: Option<Vec<Vec2>> = scenario
        .retune_region
        .as_ref()
        .map(|p| p.iter().map(|&v| Vec2::from(v)).collect());

    let flow_grid = world.flow.as_deref();
    let profile = scenario.pulsatile;
    let physical_flow = |p: Vec2, t: f64| match flow_grid {
        Some(g) => sample_flow(g, &profile, p * 1e3, t).0,
        None => Vec2::zeros(),
    };
    let sign = if scenario.flow_sign_toggle { -1.0 } else { 1.0 };
    let estimated_flow = |p: Vec2| match flow_grid {
        Some(g) => g.sample_steady(p * 1e3).0 * (profile.mean() * sign),
        None => Vec2::zeros(),
    };

    let mut controller = scenario.controller.build(scenario.viscosity, flow_grid.is_some())?;
    let base_smc = controller.smc_gains_mut().map(|g| *g);
    let mut sensor = Sensor::new(scenario.sensor, scenario.seed);
    let mut estimator = VelocityEstimator::new();
    let coils = &world.coils.coils;
    let omega_o = world.coils.omega_o;

    let b0 = controller.initial_b_dir(&reference);
    let mut state = RobotState::at_rest(reference.start_point() * 1e-3, b0.y.atan2(b0.x));
    let mut command = ControlOutput::idle(b0);
    let mut last_measured = state.position;
    let mut over_since: Option<f64> = None;
    let mut series = Vec::new();
    let mut saturated_ticks = 0usize;
    let mut outcome: Option<Option<FailureReason>> = None;

    for k in 0.. {
        let t = k as f64 * dt;
        state.t = t;
        let meas = sensor.measure(&state);
        let velocity = estimator.update(&meas);
        let mut i_max = scenario.i_max;
        if meas.valid {
            last_measured = meas.position_mm * 1e-3;
            if let Some(poly) = &region {
                let base = base_smc.unwrap_or_default();
                let (tuned, i) =
                    region_retune(meas.position_mm, &base, scenario.i_max, poly, &scenario.retune_factors);
                i_max = i;
                if let Some(g) = controller.smc_gains_mut() {
                    *g = tuned;
                }
            }
            let ctx = ControlContext {
                t,
                position: last_measured,
                velocity,
                reference: &reference,
                flow: &estimated_flow,
                c_t: c_t_ctrl,
                mass: params.mass,
                dt,
            };
            command = controller.step(&ctx)?;
        } else if let Some(poly) = &region {
            let base = base_smc.unwrap_or_default();
            i_max = region_retune(last_measured * 1e3, &base, scenario.i_max, poly, &scenario.retune_factors).1;
        }

        let b_cmd = scenario.b_scale * command.b_dir;
        let c = Vector4::new(command.force.x, command.force.y, omega_o * b_cmd.x, omega_o * b_cmd.y);
        let dipole_cmd = params.dipole_moment * command.b_dir;
        let a = assemble_actuation_matrix(coils, dipole_cmd, last_measured, omega_o)?;
        let alloc = allocate_currents(&a, &c, i_max);
        if alloc.saturated {
            saturated_ticks += 1;
        }
        let applied = superpose(coils, alloc.currents.as_slice(), state.position)?;
        let b_norm = applied.b.norm();
        let dipole = if b_norm > 0.0 {
            params.dipole_moment * applied.b / b_norm
        } else {
            params.dipole(state.heading)
        };
        let (force, _) = force_torque(dipole, &applied);

        let desired = reference.position(t);
        let pos_mm = state.position * 1e3;
        let err = (pos_mm - desired).norm();
        series.push(StepRecord {
            t,
            position_mm: pos_mm,
            desired_mm: desired,
            err_mm: err,
            force: command.force,
            currents: alloc.currents,
            s: command.diagnostics.s(),
            d_hat: command.diagnostics.d_hat(),
        });

        if err > FAILURE_ERROR_MM {
            over_since.get_or_insert(t);
        } else {
            over_since = None;
        }
        if t >= t_end && (pos_mm - goal).norm() <= COMPLETION_TOLERANCE_MM {
            outcome = Some(None);
        } else if pos_mm.x.abs() > WORKSPACE_LIMIT_MM || pos_mm.y.abs() > WORKSPACE_LIMIT_MM {
            outcome = Some(Some(FailureReason::WorkspaceExit));
        } else if over_since.is_some_and(|t0| t - t0 >= FAILURE_SUSTAIN_S) {
            outcome = Some(Some(FailureReason::TrackingError));
        } else if t >= limit {
            outcome = Some(Some(FailureReason::Timeout));
        }
        if outcome.is_some() {
            break;
        }

        state = dynamics::step(&state, force, applied.b, &physical_flow, params.mass, c_t, dt);
    }

    let failure_reason = outcome.flatten();
    let errs: Vec<f64> = series.iter().map(|r| r.err_mm).collect();
    Ok(TrialResult {
        metrics: metrics(&errs)?,
        completed: failure_reason.is_none(),
        failure_reason,
        scenario_hash: scenario.hash(),
        waypoints: world.path.waypoints.clone(),
        saturated_fraction: saturated_ticks as f64 / series.len() as f64,
        controller_c_t: c_t_ctrl,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_examples() {
        let m = metrics(&[1.0; 7]).unwrap();
        assert_eq!((m.rmse_mm, m.p95_mm, m.max_mm), (1.0, 1.0, 1.0));
        let m = metrics(&[0.0, 3.0, 4.0]).unwrap();
        assert!((m.rmse_mm - (25.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((m.rmse_mm - 2.8868).abs() < 1e-4);
        assert_eq!(m.max_mm, 4.0);
        assert!((m.p95_mm - 3.9).abs() < 1e-12);
        let m = metrics(&[0.0; 4]).unwrap();
        assert_eq!((m.rmse_mm, m.p95_mm, m.max_mm), (0.0, 0.0, 0.0));
        assert!(matches!(metrics(&[]), Err(Error::EmptySeries)));
    }

    #[test]
    fn p95_interpolates() {
        let errs: Vec<f64> = (0..=100).map(f64::from).collect();
        assert!((metrics(&errs).unwrap().p95_mm - 95.0).abs() < 1e-12);
        let errs: Vec<f64> = (1..=10).map(f64::from).collect();
        // rank 8.55 between 9 and 10
        assert!((metrics(&errs).unwrap().p95_mm - 9.55).abs() < 1e-12);
    }
}
