//! Desk-scale heart-phantom stand-in: a U-shaped canal of constant width
//! with a chamber at the bottom where the second inlet enters.
//!
//! All coordinates are millimetres with the origin at the image centre and
//! y pointing up.

use std::sync::OnceLock;

use crate::error::Result;
use crate::flow::{synth_two_inlet_flow, FlowGrid, JetInlet, SynthGeometry};
use crate::planner::{plan, CanalMask, PlanResult, PlannerConfig};
use crate::sensing::PIXEL_SIZE_MM;
use crate::Vec2;

pub const MASK_PIXELS: usize = 1020;
pub const DEFAULT_START_MM: [f64; 2] = [-22.0, 30.0];
pub const DEFAULT_GOAL_MM: [f64; 2] = [22.0, 30.0];
/// Band of strong cross-flow where the inlet-2 jet crosses the canal.
pub const DISTURBANCE_BAND_Y_MM: (f64, f64) = (-10.0, 0.0);

/// Union of constant-width capsules plus an optional disk.
#[derive(Debug, Clone, PartialEq)]
pub struct CanalGeometry {
    pub segments: Vec<(Vec2, Vec2)>,
    pub half_width_mm: f64,
    pub chamber: Option<(Vec2, f64)>,
}

impl Default for CanalGeometry {
    fn default() -> Self {
        let p = |x, y| Vec2::new(x, y);
        CanalGeometry {
            segments: vec![
                (p(-22.0, 34.0), p(-22.0, -5.0)),
                (p(-22.0, -5.0), p(22.0, -5.0)),
                (p(22.0, -5.0), p(22.0, 34.0)),
            ],
            half_width_mm: 8.0,
            chamber: Some((p(0.0, -6.0), 11.0)),
        }
    }
}

impl CanalGeometry {
    pub fn contains(&self, q: Vec2) -> bool {
        let in_segment = self
            .segments
            .iter()
            .any(|&(a, b)| segment_distance(q, a, b) <= self.half_width_mm);
        in_segment || self.chamber.is_some_and(|(c, r)| (q - c).norm() <= r)
    }

    pub fn rasterize(&self, n: usize, pixel_size: f64) -> CanalMask {
        let frame = crate::planner::PixelFrame {
            nx: n,
            ny: n,
            pixel_size,
        };
        let pixels = (0..n * n)
            .map(|k| self.contains(frame.to_mm((k / n) as f64, (k % n) as f64)))
            .collect();
        CanalMask {
            nx: n,
            ny: n,
            pixels,
            pixel_size,
        }
    }
}

fn segment_distance(q: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (q - (a + t * ab)).norm()
}

/// The bundled 1020 x 1020 canal mask.
pub fn default_mask() -> CanalMask {
    CanalGeometry::default().rasterize(MASK_PIXELS, PIXEL_SIZE_MM)
}

/// Inlet 1 enters the left leg from the outer wall; inlet 2 enters the
/// chamber from below and crosses the bottom run.
pub fn default_inlets() -> [JetInlet; 2] {
    [
        JetInlet {
            position_mm: Vec2::new(-30.0, 8.0),
            direction: Vec2::new(1.0, 0.0),
            width_mm: 3.0,
            strength: 0.5,
        },
        JetInlet {
            position_mm: Vec2::new(-6.0, -15.0),
            direction: Vec2::new(0.0, 1.0),
            width_mm: 3.0,
            strength: 1.0,
        },
    ]
}

pub const FLOW_SPREAD_RATE: f64 = 0.2;
pub const FLOW_GRID_HALF_WIDTH_MM: f64 = 46.0;
pub const FLOW_GRID_SPACING_MM: f64 = 1.0;

/// Two-inlet synthetic flow over the phantom lumen, scaled to `peak_speed` (m/s).
pub fn default_flow(peak_speed: f64) -> Result<FlowGrid> {
    let geometry = CanalGeometry::default();
    let lumen = |p: Vec2| geometry.contains(p);
    let n = (2.0 * FLOW_GRID_HALF_WIDTH_MM / FLOW_GRID_SPACING_MM).round() as usize + 1;
    synth_two_inlet_flow(
        peak_speed,
        &SynthGeometry {
            origin_mm: Vec2::new(-FLOW_GRID_HALF_WIDTH_MM, -FLOW_GRID_HALF_WIDTH_MM),
            spacing_mm: FLOW_GRID_SPACING_MM,
            nx: n,
            ny: n,
            lumen: &lumen,
            inlets: default_inlets(),
            spread_rate: FLOW_SPREAD_RATE,
        },
    )
}

/// Closed polygon covering the disturbance band across the workspace.
pub fn default_retune_region() -> Vec<Vec2> {
    let (y0, y1) = DISTURBANCE_BAND_Y_MM;
    vec![
        Vec2::new(-50.0, y0),
        Vec2::new(50.0, y0),
        Vec2::new(50.0, y1),
        Vec2::new(-50.0, y1),
    ]
}

/// Plan on the bundled mask between the default endpoints, computed once.
pub fn default_plan() -> Result<&'static PlanResult> {
    static PLAN: OnceLock<PlanResult> = OnceLock::new();
    if let Some(p) = PLAN.get() {
        return Ok(p);
    }
    let result = plan(
        &default_mask(),
        Vec2::from(DEFAULT_START_MM),
        Vec2::from(DEFAULT_GOAL_MM),
        &PlannerConfig::default(),
    )?;
    Ok(PLAN.get_or_init(|| result))
}
