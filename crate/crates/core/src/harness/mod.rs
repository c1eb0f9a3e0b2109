//! Scenario orchestration: world construction, the closed-loop trial, metrics,
//! comparison suites and file outputs.

mod output;
mod suite;
mod trial;

pub use output::{emit_outputs, summary_from_csv, write_csv, OutputPaths, Summary, CSV_HEADER};
pub use suite::{run_suite, thread_cap, SuiteConfig, SuiteEntry, SuiteReport, SuiteRow, RatioEntry};
pub use trial::{metrics, mismatch_sign, run_trial, run_trial_in, FailureReason, Metrics, StepRecord, TrialResult};

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coilfield::{CoilLayout, DEFAULT_MAX_CURRENT_A};
use crate::control::{ControllerConfig, RetuneFactors};
use crate::dynamics::RobotParams;
use crate::error::{Error, Result};
use crate::flow::{load_flow_csv, FlowGrid, PulsatileProfile};
use crate::phantom;
use crate::planner::{plan, CanalMask, PlannedPath, PlannerConfig};
use crate::sensing::SensorConfig;
use crate::Vec2;

/// Error above which the sustained-error failure clock runs (mm).
pub const FAILURE_ERROR_MM: f64 = 15.0;
pub const FAILURE_SUSTAIN_S: f64 = 2.0;
/// Distance to the final waypoint that counts as arrival (mm).
pub const COMPLETION_TOLERANCE_MM: f64 = 2.0;
/// Half-width of the allowed square workspace (mm).
pub const WORKSPACE_LIMIT_MM: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(rename = "viscosity_cp", default = "default_viscosity")]
    pub viscosity: f64,
    /// Peak in-lumen flow speed (m/s); zero disables flow.
    #[serde(rename = "peak_flow_mps", default)]
    pub peak_flow: f64,
    #[serde(default)]
    pub pulsatile: PulsatileProfile,
    pub controller: ControllerConfig,
    #[serde(default)]
    pub robot: RobotParams,
    #[serde(default)]
    pub sensor: SensorConfig,
    /// Waypoint CSV; takes precedence over mask planning.
    #[serde(default)]
    pub path_file: Option<PathBuf>,
    /// Canal mask to plan on; the bundled phantom is used when absent.
    #[serde(default)]
    pub mask_file: Option<PathBuf>,
    #[serde(default)]
    pub start_mm: Option<[f64; 2]>,
    #[serde(default)]
    pub goal_mm: Option<[f64; 2]>,
    /// Flow grid CSV, rescaled to `peak_flow_mps`; the synthetic two-inlet
    /// field is used when absent.
    #[serde(default)]
    pub flow_file: Option<PathBuf>,
    /// Coil layout JSON; the calibrated default layout when absent.
    #[serde(default)]
    pub coils_file: Option<PathBuf>,
    #[serde(rename = "speed_mm_s", default = "default_speed")]
    pub speed: f64,
    /// Trial time limit (s); defaults to 1.5x the reference duration + 30 s.
    #[serde(rename = "duration_limit_s", default)]
    pub duration_limit: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Closed polygon (mm) where the local retune applies.
    #[serde(default)]
    pub retune_region: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub retune_factors: RetuneFactors,
    /// Negate the flow estimate handed to the controller.
    #[serde(default)]
    pub flow_sign_toggle: bool,
    /// Controller-side c_t is scaled by `1 + ct_mismatch` on even seeds and
    /// `1 - ct_mismatch` on odd seeds.
    #[serde(default)]
    pub ct_mismatch: f64,
    #[serde(rename = "i_max_a", default = "default_i_max")]
    pub i_max: f64,
    /// Magnitude of the commanded field (T).
    #[serde(rename = "b_scale_t", default = "default_b_scale")]
    pub b_scale: f64,
}

fn default_viscosity() -> f64 {
    20.0
}
fn default_speed() -> f64 {
    0.5
}
fn default_i_max() -> f64 {
    DEFAULT_MAX_CURRENT_A
}
fn default_b_scale() -> f64 {
    5e-4
}

impl Scenario {
    /// Bundled phantom, default planner endpoints, noisy sensor.
    pub fn new(controller: ControllerConfig, viscosity_cp: f64, peak_flow: f64) -> Self {
        Scenario {
            name: None,
            viscosity: viscosity_cp,
            peak_flow,
            pulsatile: PulsatileProfile::default(),
            controller,
            robot: RobotParams::default(),
            sensor: SensorConfig::default(),
            path_file: None,
            mask_file: None,
            start_mm: None,
            goal_mm: None,
            flow_file: None,
            coils_file: None,
            speed: default_speed(),
            duration_limit: None,
            seed: 0,
            retune_region: None,
            retune_factors: RetuneFactors::default(),
            flow_sign_toggle: false,
            ct_mismatch: 0.0,
            i_max: default_i_max(),
            b_scale: default_b_scale(),
        }
    }

    pub fn with_default_retune(mut self) -> Self {
        self.retune_region = Some(
            phantom::default_retune_region()
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
        );
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut s: Scenario =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(dir) = path.parent() {
            s.resolve_paths(dir);
        }
        s.validate()?;
        Ok(s)
    }

    /// Make relative file references relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.path_file,
            &mut self.mask_file,
            &mut self.flow_file,
            &mut self.coils_file,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.viscosity > 0.0 && self.viscosity.is_finite()) {
            return bad("viscosity must be positive");
        }
        if !(self.peak_flow >= 0.0 && self.peak_flow.is_finite()) {
            return bad("peak flow must be non-negative");
        }
        if !(self.pulsatile.frequency > 0.0) {
            return bad("pulsation frequency must be positive");
        }
        if !(self.speed > 0.0 && self.speed.is_finite()) {
            return bad("reference speed must be positive");
        }
        if let Some(d) = self.duration_limit {
            if !(d > 0.0) {
                return bad("duration limit must be positive");
            }
        }
        if !(0.0..1.0).contains(&self.ct_mismatch) {
            return bad("ct_mismatch must lie in [0, 1)");
        }
        if !(self.i_max > 0.0) || !(self.b_scale >= 0.0) {
            return bad("i_max must be positive and b_scale non-negative");
        }
        if self.start_mm.is_some() != self.goal_mm.is_some() {
            return bad("start_mm and goal_mm must be given together");
        }
        if let Some(poly) = &self.retune_region {
            if poly.len() < 3 {
                return bad("retune region needs at least three vertices");
            }
        }
        let f = &self.retune_factors;
        if !(f.i_max > 0.0 && f.eta > 0.0 && f.phi > 0.0) {
            return bad("retune factors must be positive");
        }
        self.robot.validate()?;
        self.sensor.validate()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("scenario serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Fields that determine the world (path, flow, coils).
    fn world_key(&self) -> String {
        serde_json::to_string(&(
            &self.path_file,
            &self.mask_file,
            &self.start_mm,
            &self.goal_mm,
            &self.flow_file,
            &self.coils_file,
            self.peak_flow,
        ))
        .expect("key serializes")
    }
}

/// Everything a trial shares with other trials of the same setup.
#[derive(Debug, Clone)]
pub struct World {
    pub path: PlannedPath,
    pub mask: Option<Arc<CanalMask>>,
    pub flow: Option<Arc<FlowGrid>>,
    pub coils: Arc<CoilLayout>,
}

fn default_coils() -> Arc<CoilLayout> {
    static COILS: OnceLock<Arc<CoilLayout>> = OnceLock::new();
    COILS.get_or_init(|| Arc::new(CoilLayout::calibrated_default())).clone()
}

fn default_mask() -> Arc<CanalMask> {
    static MASK: OnceLock<Arc<CanalMask>> = OnceLock::new();
    MASK.get_or_init(|| Arc::new(phantom::default_mask())).clone()
}

impl World {
    pub fn prepare(s: &Scenario) -> Result<World> {
        let coils = match &s.coils_file {
            Some(p) => Arc::new(CoilLayout::load(p)?),
            None => default_coils(),
        };
        let (path, mask) = if let Some(p) = &s.path_file {
            (PlannedPath::load_csv(p)?, None)
        } else if let Some(m) = &s.mask_file {
            let mask = CanalMask::load_pgm(m, crate::planner::DEFAULT_PIXEL_SIZE_MM)?;
            let (start, goal) = endpoints(s);
            let planned = plan(&mask, start, goal, &PlannerConfig::default())?;
            (planned.path, Some(Arc::new(mask)))
        } else if s.start_mm.is_some() {
            let mask = default_mask();
            let (start, goal) = endpoints(s);
            (plan(&mask, start, goal, &PlannerConfig::default())?.path, Some(mask))
        } else {
            (phantom::default_plan()?.path.clone(), Some(default_mask()))
        };
        let flow = if s.peak_flow > 0.0 {
            let grid = match &s.flow_file {
                Some(p) => {
                    let mut g = load_flow_csv(p)?;
                    let max = g.max_speed();
                    if !(max > 0.0) {
                        return Err(Error::Config(format!("{} holds a zero flow field", p.display())));
                    }
                    g.scale(s.peak_flow / max);
                    g
                }
                None => phantom::default_flow(s.peak_flow)?,
            };
            Some(Arc::new(grid))
        } else {
            None
        };
        Ok(World {
            path,
            mask,
            flow,
            coils,
        })
    }
}

fn endpoints(s: &Scenario) -> (Vec2, Vec2) {
    (
        Vec2::from(s.start_mm.unwrap_or(phantom::DEFAULT_START_MM)),
        Vec2::from(s.goal_mm.unwrap_or(phantom::DEFAULT_GOAL_MM)),
    )
}
