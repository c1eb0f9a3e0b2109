//! Finite-horizon MPC on the point-mass model `m v' + c_t (v - V) = F`,
//! solved as one dense least-squares problem.
//!
//! The cost is evaluated with errors in millimetres and forces in
//! micronewtons, which is the scale the default weights are meant for.

use nalgebra::{DMatrix, DVector, Matrix2, SMatrix, Vector2};
use serde::{Deserialize, Serialize};

use super::pid::heading_field;
use super::{ControlContext, ControlOutput, Diagnostics};
use crate::error::{Error, Result};
use crate::Vec2;

/// Metres to cost units (mm).
pub const ERROR_SCALE: f64 = 1e3;
/// Newtons to cost units (uN).
pub const FORCE_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    #[serde(rename = "N")]
    pub horizon: usize,
    #[serde(rename = "dt_s")]
    pub dt: f64,
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub p: Matrix2<f64>,
}

impl Default for MpcConfig {
    fn default() -> Self {
        MpcConfig::default_for(false)
    }
}

impl MpcConfig {
    /// Weights (in mm and uN cost units) grid-searched on held-out seeds; the
    /// flow set tracks harder since the model has no integral action.
    pub fn default_for(flow: bool) -> Self {
        let (q, p) = if flow { (6e4, 1.2e5) } else { (3e3, 6e3) };
        MpcConfig {
            horizon: 20,
            dt: 0.040,
            q: Matrix2::from_diagonal_element(q),
            r: Matrix2::from_diagonal_element(1e3),
            p: Matrix2::from_diagonal_element(p),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("MPC horizon must be at least 1".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::Config("MPC step must be positive".into()));
        }
        let psd = |m: &Matrix2<f64>| {
            (m - m.transpose()).amax() <= 1e-12 * m.amax().max(1.0)
                && m.symmetric_eigenvalues().iter().all(|&l| l >= -1e-12)
        };
        if !psd(&self.q) || !psd(&self.p) {
            return Err(Error::Config("MPC Q and P must be symmetric positive semi-definite".into()));
        }
        if !psd(&self.r) || self.r.cholesky().is_none() {
            return Err(Error::Config("MPC R must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

/// Exact one-step map for one axis: `s+ = phi s + g_f F + g_v V0 + g_s (V1 - V0) / dt`
/// with `s = [x, v]` and the flow varying linearly over the step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub phi: Matrix2<f64>,
    pub g_f: Vector2<f64>,
    pub g_v: Vector2<f64>,
    pub g_s: Vector2<f64>,
    pub dt: f64,
}

pub fn discretize(mass: f64, c_t: f64, dt: f64) -> Discretization {
    // augmented state [x, v, F, V, dV/dt]
    let mut a = SMatrix::<f64, 5, 5>::zeros();
    a[(0, 1)] = 1.0;
    a[(1, 1)] = -c_t / mass;
    a[(1, 2)] = 1.0 / mass;
    a[(1, 3)] = c_t / mass;
    a[(3, 4)] = 1.0;
    let e = (a * dt).exp();
    Discretization {
        phi: e.fixed_view::<2, 2>(0, 0).into_owned(),
        g_f: e.fixed_view::<2, 1>(0, 2).into_owned(),
        g_v: e.fixed_view::<2, 1>(0, 3).into_owned(),
        g_s: e.fixed_view::<2, 1>(0, 4).into_owned(),
        dt,
    }
}

impl Discretization {
    /// One step for both axes; `state = (position, velocity)`.
    pub fn step(&self, state: (Vec2, Vec2), force: Vec2, v0: Vec2, v1: Vec2) -> (Vec2, Vec2) {
        let mut x = Vec2::zeros();
        let mut v = Vec2::zeros();
        for i in 0..2 {
            let s = Vector2::new(state.0[i], state.1[i]);
            let n = self.phi * s
                + self.g_f * force[i]
                + self.g_v * v0[i]
                + self.g_s * ((v1[i] - v0[i]) / self.dt);
            x[i] = n[0];
            v[i] = n[1];
        }
        (x, v)
    }
}

/// One horizon instance: initial state, reference positions at steps
/// `1..=N`, and flow at steps `0..=N` (all SI).
#[derive(Debug, Clone)]
pub struct MpcProblem {
    pub disc: Discretization,
    pub position: Vec2,
    pub velocity: Vec2,
    pub refs: Vec<Vec2>,
    pub flows: Vec<Vec2>,
    pub q: Matrix2<f64>,
    pub r: Matrix2<f64>,
    pub p: Matrix2<f64>,
}

impl MpcProblem {
    pub fn horizon(&self) -> usize {
        self.refs.len()
    }

    /// Predicted positions at steps `1..=N`.
    pub fn predict(&self, forces: &[Vec2]) -> Vec<Vec2> {
        let mut state = (self.position, self.velocity);
        (0..self.horizon())
            .map(|k| {
                state = self.disc.step(state, forces[k], self.flows[k], self.flows[k + 1]);
                state.0
            })
            .collect()
    }

    /// `sum_{k<N} e_k' Q e_k + F_k' R F_k + e_N' P e_N` in cost units; `e_0`
    /// is fixed and left out.
    pub fn cost(&self, forces: &[Vec2]) -> f64 {
        let n = self.horizon();
        let mut j = 0.0;
        for (k, pos) in self.predict(forces).iter().enumerate() {
            let e = (pos - self.refs[k]) * ERROR_SCALE;
            let w = if k + 1 == n { &self.p } else { &self.q };
            j += e.dot(&(w * e));
        }
        for f in forces {
            let f = f * FORCE_SCALE;
            j += f.dot(&(self.r * f));
        }
        j
    }

    /// Minimiser of [`MpcProblem::cost`] from the normal equations.
    pub fn solve(&self) -> Result<Vec<Vec2>> {
        let n = self.horizon();
        if n == 0 || self.flows.len() != n + 1 {
            return Err(Error::Solve("horizon and flow samples disagree".into()));
        }
        let free = self.predict(&vec![Vec2::zeros(); n]);
        // influence of F_j (cost units) on position k+1 (cost units)
        let unit = ERROR_SCALE / FORCE_SCALE;
        let mut impulse = Vec::with_capacity(n);
        let mut s = self.disc.g_f;
        for _ in 0..n {
            impulse.push(s[0] * unit);
            s = self.disc.phi * s;
        }
        let m = 2 * n;
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut g = DVector::<f64>::zeros(m);
        for k in 0..n {
            let w = if k + 1 == n { self.p } else { self.q };
            let resid = w * ((free[k] - self.refs[k]) * ERROR_SCALE);
            for j in 0..=k {
                let gj = impulse[k - j];
                for a in 0..2 {
                    g[2 * j + a] += gj * resid[a];
                }
                for l in 0..=k {
                    let gl = impulse[k - l];
                    for a in 0..2 {
                        for b in 0..2 {
                            h[(2 * j + a, 2 * l + b)] += gj * gl * w[(a, b)];
                        }
                    }
                }
            }
        }
        for j in 0..n {
            for a in 0..2 {
                for b in 0..2 {
                    h[(2 * j + a, 2 * j + b)] += self.r[(a, b)];
                }
            }
        }
        let chol = h
            .cholesky()
            .ok_or_else(|| Error::Solve("normal matrix is not positive definite".into()))?;
        let u = -chol.solve(&g);
        Ok((0..n)
            .map(|j| Vec2::new(u[2 * j], u[2 * j + 1]) / FORCE_SCALE)
            .collect())
    }
}

#[derive(Debug, Clone)]
pub struct Mpc {
    pub cfg: MpcConfig,
    pub heading: f64,
    disc: Option<(f64, f64, Discretization)>,
}

impl Mpc {
    pub fn new(cfg: MpcConfig, heading: f64) -> Self {
        Mpc {
            cfg,
            heading,
            disc: None,
        }
    }

    fn discretization(&mut self, mass: f64, c_t: f64) -> Discretization {
        match self.disc {
            Some((m, c, d)) if m == mass && c == c_t => d,
            _ => {
                let d = discretize(mass, c_t, self.cfg.dt);
                self.disc = Some((mass, c_t, d));
                d
            }
        }
    }

    pub fn step(&mut self, ctx: &ControlContext<'_>) -> Result<ControlOutput> {
        let disc = self.discretization(ctx.mass, ctx.c_t);
        let n = self.cfg.horizon;
        let refs: Vec<Vec2> = (1..=n)
            .map(|k| ctx.reference.position(ctx.t + k as f64 * self.cfg.dt) * 1e-3)
            .collect();
        let mut flows = Vec::with_capacity(n + 1);
        flows.push((ctx.flow)(ctx.position));
        flows.extend(refs.iter().map(|&r| (ctx.flow)(r)));
        let problem = MpcProblem {
            disc,
            position: ctx.position,
            velocity: ctx.velocity,
            refs,
            flows,
            q: self.cfg.q,
            r: self.cfg.r,
            p: self.cfg.p,
        };
        let forces = problem.solve()?;
        Ok(ControlOutput {
            force: forces[0],
            b_dir: heading_field(self.heading),
            diagnostics: Diagnostics::Mpc {
                cost: problem.cost(&forces),
            },
        })
    }
}
