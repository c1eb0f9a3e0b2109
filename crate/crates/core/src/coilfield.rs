//! Planar electromagnetic actuation: per-coil field model, the current-to-wrench
//! actuation matrix, and minimum-norm current allocation.
//!
//! Each coil is modelled by a scalar potential
//!
//! ```text
//! psi(r) = K * (1/|r| - 1/sqrt(|r|^2 + a^2)) * (n . r)
//! ```
//!
//! with `K` the calibration gain, `a` the loop radius and `n` the coil axis.
//! On the axis this reproduces the exact circular-loop field
//! `K a^2 / (z^2 + a^2)^(3/2)`; far away it decays like a point dipole. The
//! field is `B = -grad psi`, so the gradient tensor is minus the Hessian of
//! `psi` and is symmetric by construction.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{Mat2, Vec2};

pub const NUM_COILS: usize = 8;

/// Reference peak flux density of the driven north pair (T).
pub const REFERENCE_PEAK_FLUX_T: f64 = 24.05e-3;
/// Reference peak gradient of the driven north pair (T/m), 13.92 mT/cm.
pub const REFERENCE_PEAK_GRADIENT_T_PER_M: f64 = 1.392;

/// Half-width of the square on which the four coil units sit (m).
pub const UNIT_HALF_WIDTH_M: f64 = 0.11;
/// Half-width of the square actuation workspace (m).
pub const WORKSPACE_HALF_WIDTH_M: f64 = 0.05;
pub const LARGE_LOOP_RADIUS_M: f64 = 0.05;
pub const SMALL_LOOP_RADIUS_M: f64 = 0.02;

/// Default per-coil current limit (A).
pub const DEFAULT_MAX_CURRENT_A: f64 = 8.0;

pub type ActuationMat = SMatrix<f64, 4, NUM_COILS>;
pub type Currents = SVector<f64, NUM_COILS>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoilModel {
    #[serde(rename = "center_m")]
    pub center: Vec2,
    pub axis: Vec2,
    #[serde(rename = "loop_radius_m")]
    pub loop_radius: f64,
    pub calibration_gain: f64,
    #[serde(rename = "max_current_a")]
    pub max_current: f64,
}

impl CoilModel {
    pub fn new(
        center: Vec2,
        axis: Vec2,
        loop_radius: f64,
        calibration_gain: f64,
        max_current: f64,
    ) -> Result<Self> {
        let coil = CoilModel {
            center,
            axis,
            loop_radius,
            calibration_gain,
            max_current,
        };
        coil.validate()?;
        Ok(coil)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center.iter().all(|v| v.is_finite())) {
            return Err(Error::Config("coil center must be finite".into()));
        }
        if (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "coil axis must be a unit vector, |axis| = {}",
                self.axis.norm()
            )));
        }
        if !(self.loop_radius > 0.0 && self.calibration_gain > 0.0 && self.max_current > 0.0) {
            return Err(Error::Config(
                "loop radius, calibration gain and current limit must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Field and gradient per ampere at `point`.
    pub fn unit_field(&self, point: Vec2) -> Result<FieldSample> {
        unit_field(self, point)
    }
}

/// Flux density and its spatial gradient at one point.
///
/// `grad[(i, j)]` is `dB_i / dx_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub b: Vec2,
    pub grad: Mat2,
}

impl FieldSample {
    pub fn zero() -> Self {
        FieldSample {
            b: Vec2::zeros(),
            grad: Mat2::zeros(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        FieldSample {
            b: self.b * k,
            grad: self.grad * k,
        }
    }
}

impl std::ops::AddAssign for FieldSample {
    fn add_assign(&mut self, rhs: Self) {
        self.b += rhs.b;
        self.grad += rhs.grad;
    }
}

pub fn unit_field(coil: &CoilModel, point: Vec2) -> Result<FieldSample> {
    let r = point - coil.center;
    let rho = r.norm();
    let limit = coil.loop_radius / 100.0;
    if !(rho >= limit) {
        return Err(Error::Singularity {
            distance_m: rho,
            limit_m: limit,
        });
    }
    let a = coil.loop_radius;
    let k = coil.calibration_gain;
    let n = coil.axis;

    let s2 = rho * rho + a * a;
    let s = s2.sqrt();
    let s3 = s2 * s;
    let s5 = s3 * s2;
    // q = 1/rho - 1/S, written to avoid cancellation far from the coil.
    let q = a * a / (rho * s * (s + rho));
    let dq = -1.0 / (rho * rho) + rho / s3;
    let ddq = 2.0 / (rho * rho * rho) + 1.0 / s3 - 3.0 * rho * rho / s5;

    let nr = n.dot(&r);
    let rhat = r / rho;

    let b = -k * (q * n + dq * nr * rhat);

    let mut hess = Mat2::zeros();
    for i in 0..2 {
        for j in 0..2 {
            let delta = if i == j { 1.0 } else { 0.0 };
            hess[(i, j)] = dq * (n[i] * rhat[j] + n[j] * rhat[i])
                + nr * (ddq - dq / rho) * rhat[i] * rhat[j]
                + nr * dq / rho * delta;
        }
    }
    Ok(FieldSample {
        b,
        grad: -k * hess,
    })
}

/// Total field of all coils for the given currents.
pub fn superpose(coils: &[CoilModel], currents: &[f64], point: Vec2) -> Result<FieldSample> {
    let mut total = FieldSample::zero();
    for (coil, &i) in coils.iter().zip(currents) {
        total += unit_field(coil, point)?.scaled(i);
    }
    Ok(total)
}

/// Magnetic force `F_j = sum_k m_k dB_k/dx_j` and in-plane torque `m x B`.
pub fn force_torque(dipole: Vec2, sample: &FieldSample) -> (Vec2, f64) {
    let force = sample.grad.transpose() * dipole;
    let torque = dipole.x * sample.b.y - dipole.y * sample.b.x;
    (force, torque)
}

/// Map from the eight coil currents to `[F_x, F_y, w_o B_x, w_o B_y]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActuationMatrix {
    pub a: ActuationMat,
    pub omega_o: f64,
}

impl ActuationMatrix {
    /// Wrench produced by a current vector.
    pub fn apply(&self, currents: &Currents) -> Vector4<f64> {
        self.a * currents
    }
}

pub fn assemble_actuation_matrix(
    coils: &[CoilModel],
    dipole: Vec2,
    point: Vec2,
    omega_o: f64,
) -> Result<ActuationMatrix> {
    if coils.len() != NUM_COILS {
        return Err(Error::Config(format!(
            "actuation model needs exactly {NUM_COILS} coils, got {}",
            coils.len()
        )));
    }
    let mut a = ActuationMat::zeros();
    for (col, coil) in coils.iter().enumerate() {
        let f = unit_field(coil, point)?;
        let (force, _) = force_torque(dipole, &f);
        a[(0, col)] = force.x;
        a[(1, col)] = force.y;
        a[(2, col)] = omega_o * f.b.x;
        a[(3, col)] = omega_o * f.b.y;
    }
    Ok(ActuationMatrix { a, omega_o })
}

/// Relative singular-value cutoff used by the pseudoinverse.
pub const SINGULAR_CUTOFF: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Allocation {
    pub currents: Currents,
    /// Currents before the uniform saturation scaling.
    pub unsaturated: Currents,
    pub saturated: bool,
    /// Factor in (0, 1] applied to the unsaturated vector.
    pub scale: f64,
}

/// Minimum-norm least-squares currents `I = W S^+ U^T C`, then uniform
/// scaling so that `max |I_k| <= i_max`.
pub fn allocate_currents(a: &ActuationMatrix, c: &Vector4<f64>, i_max: f64) -> Allocation {
    let unsaturated = pseudo_inverse_solve(&a.a, c);
    let peak = unsaturated.amax();
    let (scale, saturated) = if peak > i_max && peak.is_finite() {
        (i_max / peak, true)
    } else {
        (1.0, false)
    };
    Allocation {
        currents: unsaturated * scale,
        unsaturated,
        saturated,
        scale,
    }
}

fn pseudo_inverse_solve(a: &ActuationMat, c: &Vector4<f64>) -> Currents {
    let svd = a.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let sigma_max = svd.singular_values.max();
    if !(sigma_max > 0.0) {
        return Currents::zeros();
    }
    let cutoff = SINGULAR_CUTOFF * sigma_max;
    let mut coeffs = u.transpose() * c;
    for (k, sv) in svd.singular_values.iter().enumerate() {
        coeffs[k] = if *sv > cutoff { coeffs[k] / sv } else { 0.0 };
    }
    v_t.transpose() * coeffs
}

/// Eight coils as four units (N, E, S, W), each a large and a small loop,
/// axes pointing at the workspace center. Order: N-large, N-small, E-large,
/// E-small, S-large, S-small, W-large, W-small.
pub fn default_layout(calibration_gain: f64, max_current: f64) -> Vec<CoilModel> {
    let units = [
        Vec2::new(0.0, UNIT_HALF_WIDTH_M),
        Vec2::new(UNIT_HALF_WIDTH_M, 0.0),
        Vec2::new(0.0, -UNIT_HALF_WIDTH_M),
        Vec2::new(-UNIT_HALF_WIDTH_M, 0.0),
    ];
    let mut coils = Vec::with_capacity(NUM_COILS);
    for center in units {
        let axis = -center.normalize();
        for radius in [LARGE_LOOP_RADIUS_M, SMALL_LOOP_RADIUS_M] {
            coils.push(CoilModel {
                center,
                axis,
                loop_radius: radius,
                calibration_gain,
                max_current,
            });
        }
    }
    coils
}

/// Persisted coil layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoilLayout {
    pub coils: Vec<CoilModel>,
    #[serde(default = "one")]
    pub omega_o: f64,
}

fn one() -> f64 {
    1.0
}

impl CoilLayout {
    pub fn validate(&self) -> Result<()> {
        if self.coils.len() != NUM_COILS {
            return Err(Error::Config(format!(
                "coil layout needs {NUM_COILS} coils, found {}",
                self.coils.len()
            )));
        }
        for c in &self.coils {
            c.validate()?;
        }
        if !(self.omega_o > 0.0 && self.omega_o.is_finite()) {
            return Err(Error::Config("omega_o must be positive".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let layout: CoilLayout = serde_json::from_str(&text)?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    /// Uncalibrated default geometry with unit gain.
    pub fn uncalibrated() -> Self {
        CoilLayout {
            coils: default_layout(1.0, DEFAULT_MAX_CURRENT_A),
            omega_o: 1.0,
        }
    }

    /// Default geometry calibrated against the reference activation.
    pub fn calibrated_default() -> Self {
        let mut layout = Self::uncalibrated();
        let report = calibrate(&layout.coils, &ReferenceActivation::default())
            .expect("default layout calibrates");
        layout.coils = report.coils;
        layout
    }
}

/// Which coils the reference measurement drove, and how hard.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceActivation {
    pub driven: Vec<usize>,
    pub current_a: f64,
    pub target_peak_flux_t: f64,
    pub workspace_half_width_m: f64,
    /// Grid nodes per side used to search for the peak.
    pub grid_nodes: usize,
    pub gain_bounds: (f64, f64),
}

impl Default for ReferenceActivation {
    fn default() -> Self {
        ReferenceActivation {
            driven: vec![0, 1],
            current_a: DEFAULT_MAX_CURRENT_A,
            target_peak_flux_t: REFERENCE_PEAK_FLUX_T,
            workspace_half_width_m: WORKSPACE_HALF_WIDTH_M,
            grid_nodes: 101,
            gain_bounds: (1e-9, 1e3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub coils: Vec<CoilModel>,
    pub scale: f64,
    pub peak_flux_t: f64,
    pub peak_flux_at: Vec2,
    /// Peak Frobenius norm of the gradient tensor (T/m).
    pub peak_gradient_t_per_m: f64,
    pub peak_gradient_at: Vec2,
}

/// Peak |B| and peak gradient norm of the reference activation over the
/// workspace grid.
pub fn reference_peaks(
    coils: &[CoilModel],
    reference: &ReferenceActivation,
) -> Result<(f64, Vec2, f64, Vec2)> {
    let n = reference.grid_nodes.max(2);
    let hw = reference.workspace_half_width_m;
    let mut currents = vec![0.0; coils.len()];
    for &k in &reference.driven {
        if k >= coils.len() {
            return Err(Error::Calibration(format!("driven coil {k} does not exist")));
        }
        currents[k] = reference.current_a;
    }
    let (mut peak_b, mut at_b) = (0.0, Vec2::zeros());
    let (mut peak_g, mut at_g) = (0.0, Vec2::zeros());
    for j in 0..n {
        for i in 0..n {
            let p = Vec2::new(
                -hw + 2.0 * hw * i as f64 / (n - 1) as f64,
                -hw + 2.0 * hw * j as f64 / (n - 1) as f64,
            );
            let f = superpose(coils, &currents, p)?;
            let bn = f.b.norm();
            let gn = f.grad.norm();
            if bn > peak_b {
                peak_b = bn;
                at_b = p;
            }
            if gn > peak_g {
                peak_g = gn;
                at_g = p;
            }
        }
    }
    Ok((peak_b, at_b, peak_g, at_g))
}

/// Scale all calibration gains by one shared factor so the reference
/// activation peaks at the target flux density.
pub fn calibrate(
    coils: &[CoilModel],
    reference: &ReferenceActivation,
) -> Result<CalibrationReport> {
    if reference.driven.is_empty() || !(reference.current_a > 0.0) {
        return Err(Error::Calibration(
            "reference activation must drive at least one coil with positive current".into(),
        ));
    }
    let (peak_b, _, _, _) = reference_peaks(coils, reference)?;
    if !(peak_b > 0.0 && peak_b.is_finite()) {
        return Err(Error::Calibration(format!(
            "reference activation produces no usable field (peak {peak_b})"
        )));
    }
    let scale = reference.target_peak_flux_t / peak_b;
    let (lo, hi) = reference.gain_bounds;
    let mut out = coils.to_vec();
    for c in &mut out {
        c.calibration_gain *= scale;
        if !(c.calibration_gain >= lo && c.calibration_gain <= hi) {
            return Err(Error::Calibration(format!(
                "calibrated gain {:.3e} outside bounds [{lo:.1e}, {hi:.1e}]",
                c.calibration_gain
            )));
        }
    }
    let (peak_flux_t, peak_flux_at, peak_gradient_t_per_m, peak_gradient_at) =
        reference_peaks(&out, reference)?;
    Ok(CalibrationReport {
        coils: out,
        scale,
        peak_flux_t,
        peak_flux_at,
        peak_gradient_t_per_m,
        peak_gradient_at,
    })
}
