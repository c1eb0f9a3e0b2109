//! Exact-model closed loop for the observer and Lyapunov checks.

use millibot::control::{smc_dob_step, DobState, SmcGains, SmcInput};
use millibot::Vec2;

/// Zero-order-hold solution of `m v' = F + d - c v` over `dt`.
pub fn exact_step(x: Vec2, v: Vec2, force: Vec2, d: Vec2, mass: f64, c: f64, dt: f64) -> (Vec2, Vec2) {
    let v_inf = (force + d) / c;
    let decay = (-c * dt / mass).exp();
    let x_next = x + v_inf * dt + (v - v_inf) * (mass / c) * (1.0 - decay);
    let v_next = v_inf + (v - v_inf) * decay;
    (x_next, v_next)
}

#[derive(Debug, Clone, Copy)]
pub struct Tick {
    pub t: f64,
    pub e: Vec2,
    pub s: Vec2,
    pub d_hat: Vec2,
}

/// Hold a fixed reference at the origin from an initial offset, with a
/// constant injected force, exact velocity feedback and the true c_t.
pub fn hold_reference(
    gains: &SmcGains,
    start: Vec2,
    d: Vec2,
    mass: f64,
    c_t: f64,
    dt: f64,
    duration: f64,
) -> Vec<Tick> {
    let (mut x, mut v) = (start, Vec2::zeros());
    let mut dob = DobState::default();
    let steps = (duration / dt).round() as usize;
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let input = SmcInput {
            e: -x,
            e_dot: -v,
            velocity: v,
            v_flow: Vec2::zeros(),
            heading: Vec2::new(0.0, 1.0),
            c_t,
            mass,
            dt,
        };
        let (cmd, next) = smc_dob_step(&input, &dob, gains, true);
        dob = next;
        out.push(Tick {
            t: k as f64 * dt,
            e: -x,
            s: cmd.diagnostics.s(),
            d_hat: cmd.diagnostics.d_hat(),
        });
        (x, v) = exact_step(x, v, cmd.force, d, mass, c_t, dt);
    }
    out
}

/// Gains for the exact-model checks: a boundary-layer slope of 35 mN/m keeps
/// the sliding loop faster than the observer, so the estimate settles at the
/// observer's own rate. The 10 Hz defaults are about 50x softer.
pub fn stiff_gains(viscosity_cp: f64, eta: f64) -> SmcGains {
    let mut g = SmcGains::default_for(viscosity_cp, false);
    g.eta = eta;
    g.phi = 1e-3;
    g.k4 = 3.5e-5;
    g
}

/// First tick after which `|d_hat - d| <= tol |d|` holds for the rest of the run.
pub fn settled_at(ticks: &[Tick], d: Vec2, tol: f64) -> Option<f64> {
    match ticks.iter().rposition(|tk| (tk.d_hat - d).norm() > tol * d.norm()) {
        None => ticks.first().map(|t| t.t),
        Some(i) => ticks.get(i + 1).map(|t| t.t),
    }
}
