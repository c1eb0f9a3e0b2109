mod common;

use common::{hold_reference, settled_at, stiff_gains, Tick};
use millibot::control::{discretize, MpcProblem, Pid, PidGains};
use millibot::dynamics::{cp_to_pa_s, RobotParams};
use millibot::Vec2;
use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1e-3;

fn c_t(mu: f64) -> f64 {
    RobotParams::default().c_t(cp_to_pa_s(mu)).unwrap()
}

fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vec2 {
    Vec2::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
}

#[test]
fn mpc_solution_beats_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mass = RobotParams::default().mass;
    let mut checked = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..25);
        let problem = MpcProblem {
            disc: discretize(mass, c_t(rng.random_range(4.0..25.0)), 0.04),
            position: rand_vec(&mut rng, 0.02),
            velocity: rand_vec(&mut rng, 1e-3),
            refs: (0..n).map(|_| rand_vec(&mut rng, 0.02)).collect(),
            flows: (0..=n).map(|_| rand_vec(&mut rng, 0.1)).collect(),
            q: Matrix2::from_diagonal_element(rng.random_range(1.0..1e5)),
            r: Matrix2::from_diagonal_element(rng.random_range(1.0..1e4)),
            p: Matrix2::from_diagonal_element(rng.random_range(1.0..1e5)),
        };
        let best = problem.solve().unwrap();
        let j = problem.cost(&best);
        for _ in 0..100 {
            let scale = 10f64.powf(rng.random_range(-9.0..-4.0));
            let trial: Vec<Vec2> = best.iter().map(|f| f + rand_vec(&mut rng, scale)).collect();
            assert!(problem.cost(&trial) >= j - 1e-9 * j.abs().max(1.0));
            checked += 1;
        }
    }
    assert_eq!(checked, 10_000);
}

#[test]
fn observer_settles_within_five_time_constants() {
    let mass = RobotParams::default().mass;
    for mu in [20.0, 4.3] {
        for eta in [0.05, 0.1, 0.2] {
            for d in [Vec2::new(3e-6, -2e-6), Vec2::new(-2e-5, 1e-5), Vec2::new(1e-7, 0.0)] {
                let g = stiff_gains(mu, eta);
                let ticks = hold_reference(&g, Vec2::zeros(), d, mass, c_t(mu), DT, 8.0 * eta);
                let t = settled_at(&ticks, d, 0.02).expect("never settled");
                assert!(t <= 5.0 * eta, "mu {mu} eta {eta} d {d:?}: settled at {t} s");
            }
        }
    }
}

/// `V = s's/2` must not grow outside the `3 phi` box, and `s` stays inside
/// `5 phi` once it has entered it.
fn check_lyapunov(ticks: &[Tick], phi: f64) {
    for w in ticks.windows(2) {
        if w[0].s.amax() > 3.0 * phi {
            assert!(
                w[1].s.norm_squared() <= w[0].s.norm_squared(),
                "V grew at t = {} with s = {:?}",
                w[0].t,
                w[0].s
            );
        }
    }
    let settle = ticks.iter().position(|t| t.s.amax() <= 3.0 * phi).expect("never settled");
    for t in &ticks[settle..] {
        assert!(t.s.norm() <= 5.0 * phi, "left the layer at t = {}", t.t);
    }
}

#[test]
fn sliding_variable_is_ultimately_bounded() {
    let mass = RobotParams::default().mass;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for mu in [20.0, 4.3] {
        let g = stiff_gains(mu, 0.1);
        for _ in 0..5 {
            let d = rand_vec(&mut rng, 0.5 * g.k4);
            assert!(d.amax() < g.k4);
            let start = rand_vec(&mut rng, 0.03);
            let ticks = hold_reference(&g, start, d, mass, c_t(mu), DT, 10.0);
            check_lyapunov(&ticks, g.phi);
        }
    }
}

#[test]
fn pid_integral_is_clamped() {
    let gains = PidGains {
        integral_limit: 2e-3,
        ..PidGains::default()
    };
    let mut pid = Pid::new(gains, 0.0);
    for _ in 0..1000 {
        pid.update(Vec2::new(1.0, -1.0), Vec2::zeros(), Vec2::zeros(), 0.0, 0.1);
    }
    assert_eq!(pid.integral, Vec2::new(2e-3, -2e-3));
    // unwinds as soon as the error changes sign
    pid.update(Vec2::new(-1.0, 1.0), Vec2::zeros(), Vec2::zeros(), 0.0, 0.1);
    assert_eq!(pid.integral, Vec2::new(2e-3, -2e-3));
    pid.update(Vec2::new(-1.0, 1.0), Vec2::zeros(), Vec2::zeros(), 0.0, 0.1);
    assert!(pid.integral.x < 2e-3 && pid.integral.y > -2e-3);
}
