//! In-plane flow field on a rectilinear grid with a periodic pulsation.
//!
//! Positions are in millimetres (the planner's frame), velocities in m/s.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::Vec2;

/// Velocity grid. Node `(i, j)` sits at `origin + (i, j) * spacing` and is
/// stored at index `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGrid {
    pub origin: Vec2,
    pub spacing: f64,
    pub nx: usize,
    pub ny: usize,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    pub domain_mask: Vec<bool>,
}

impl FlowGrid {
    /// All-zero grid with every node inside the domain.
    pub fn zeros(origin: Vec2, spacing: f64, nx: usize, ny: usize) -> Self {
        FlowGrid {
            origin,
            spacing,
            nx,
            ny,
            vx: vec![0.0; nx * ny],
            vy: vec![0.0; nx * ny],
            domain_mask: vec![true; nx * ny],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.nx * self.ny;
        if !(self.spacing > 0.0) || self.nx < 2 || self.ny < 2 {
            return Err(Error::Grid(format!(
                "need spacing > 0 and at least 2x2 nodes (spacing {}, {}x{})",
                self.spacing, self.nx, self.ny
            )));
        }
        if self.vx.len() != n || self.vy.len() != n || self.domain_mask.len() != n {
            return Err(Error::Grid("array shapes do not match nx*ny".into()));
        }
        if self.vx.iter().chain(&self.vy).any(|v| !v.is_finite()) {
            return Err(Error::Grid("non-finite velocity".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn node_position(&self, i: usize, j: usize) -> Vec2 {
        self.origin + Vec2::new(i as f64, j as f64) * self.spacing
    }

    pub fn node_velocity(&self, i: usize, j: usize) -> Vec2 {
        let k = self.index(i, j);
        Vec2::new(self.vx[k], self.vy[k])
    }

    pub fn max_speed(&self) -> f64 {
        self.vx
            .iter()
            .zip(&self.vy)
            .map(|(x, y)| x.hypot(*y))
            .fold(0.0, f64::max)
    }

    pub fn scale(&mut self, alpha: f64) {
        self.vx.iter_mut().for_each(|v| *v *= alpha);
        self.vy.iter_mut().for_each(|v| *v *= alpha);
    }

    /// Bilinear interpolation of the steady field. Points off the grid, or in
    /// cells whose four corners all lie outside the lumen, return zero.
    pub fn sample_steady(&self, point_mm: Vec2) -> (Vec2, bool) {
        let fx = (point_mm.x - self.origin.x) / self.spacing;
        let fy = (point_mm.y - self.origin.y) / self.spacing;
        let (maxx, maxy) = ((self.nx - 1) as f64, (self.ny - 1) as f64);
        if !(fx >= 0.0 && fy >= 0.0 && fx <= maxx && fy <= maxy) {
            return (Vec2::zeros(), false);
        }
        let i0 = (fx.floor() as usize).min(self.nx - 2);
        let j0 = (fy.floor() as usize).min(self.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let corners = [
            self.index(i0, j0),
            self.index(i0 + 1, j0),
            self.index(i0, j0 + 1),
            self.index(i0 + 1, j0 + 1),
        ];
        if corners.iter().all(|&k| !self.domain_mask[k]) {
            return (Vec2::zeros(), false);
        }
        let w = [
            (1.0 - tx) * (1.0 - ty),
            tx * (1.0 - ty),
            (1.0 - tx) * ty,
            tx * ty,
        ];
        let mut v = Vec2::zeros();
        for (k, wk) in corners.iter().zip(w) {
            v.x += wk * self.vx[*k];
            v.y += wk * self.vy[*k];
        }
        (v, true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    Constant,
    #[default]
    RectifiedSine,
}

/// Time modulation `g(t)` in [0, 1] applied to the steady field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulsatileProfile {
    #[serde(rename = "frequency_hz")]
    pub frequency: f64,
    pub waveform: Waveform,
    #[serde(default, rename = "phase_rad")]
    pub phase: f64,
}

impl Default for PulsatileProfile {
    fn default() -> Self {
        PulsatileProfile {
            frequency: 3.0,
            waveform: Waveform::RectifiedSine,
            phase: 0.0,
        }
    }
}

impl PulsatileProfile {
    pub fn constant() -> Self {
        PulsatileProfile {
            frequency: 1.0,
            waveform: Waveform::Constant,
            phase: 0.0,
        }
    }

    pub fn modulation(&self, t: f64) -> f64 {
        match self.waveform {
            Waveform::Constant => 1.0,
            Waveform::RectifiedSine => (2.0 * PI * self.frequency * t + self.phase).sin().abs(),
        }
    }

    /// Time average of `g(t)` over one period.
    pub fn mean(&self) -> f64 {
        match self.waveform {
            Waveform::Constant => 1.0,
            Waveform::RectifiedSine => 2.0 / PI,
        }
    }
}

/// Pulsatile velocity at `point_mm` and time `t`.
pub fn sample_flow(
    grid: &FlowGrid,
    profile: &PulsatileProfile,
    point_mm: Vec2,
    t: f64,
) -> (Vec2, bool) {
    let (v, inside) = grid.sample_steady(point_mm);
    (v * profile.modulation(t), inside)
}

/// A planar jet entering the lumen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JetInlet {
    pub position_mm: Vec2,
    pub direction: Vec2,
    pub width_mm: f64,
    /// Relative strength before the global rescale.
    pub strength: f64,
}

/// Everything needed to synthesise the two-inlet flow.
pub struct SynthGeometry<'a> {
    pub origin_mm: Vec2,
    pub spacing_mm: f64,
    pub nx: usize,
    pub ny: usize,
    pub lumen: &'a dyn Fn(Vec2) -> bool,
    pub inlets: [JetInlet; 2],
    /// Half-width growth per mm travelled (dimensionless).
    pub spread_rate: f64,
}

/// Superpose two spreading planar jets inside the lumen, remove the wall-normal
/// component at the lumen edge and rescale so the fastest node moves at
/// `peak_speed`.
pub fn synth_two_inlet_flow(peak_speed: f64, geometry: &SynthGeometry<'_>) -> Result<FlowGrid> {
    if !(peak_speed > 0.0) {
        return Err(Error::Geometry(format!("peak speed must be positive, got {peak_speed}")));
    }
    let mut grid = FlowGrid::zeros(
        geometry.origin_mm,
        geometry.spacing_mm,
        geometry.nx,
        geometry.ny,
    );
    grid.validate()?;
    let extent = grid.node_position(grid.nx - 1, grid.ny - 1);
    for inlet in &geometry.inlets {
        let p = inlet.position_mm;
        if p.x < grid.origin.x || p.y < grid.origin.y || p.x > extent.x || p.y > extent.y {
            return Err(Error::Geometry(format!("inlet at {p:?} lies outside the grid")));
        }
        if !(inlet.width_mm > 0.0) || (inlet.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::Geometry("inlet needs positive width and unit direction".into()));
        }
    }

    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            let p = grid.node_position(i, j);
            let inside = (geometry.lumen)(p);
            grid.domain_mask[k] = inside;
            if !inside {
                continue;
            }
            let mut v = Vec2::zeros();
            for inlet in &geometry.inlets {
                v += jet_velocity(inlet, geometry.spread_rate, p);
            }
            grid.vx[k] = v.x;
            grid.vy[k] = v.y;
        }
    }

    // Tangency at the lumen edge.
    let mut corrected = Vec::new();
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let k = grid.index(i, j);
            if !grid.domain_mask[k] {
                continue;
            }
            let mut normal = Vec2::zeros();
            for (di, dj) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (ni, nj) = (i as i64 + di, j as i64 + dj);
                let outside = ni < 0
                    || nj < 0
                    || ni >= grid.nx as i64
                    || nj >= grid.ny as i64
                    || !grid.domain_mask[grid.index(ni as usize, nj as usize)];
                if outside {
                    normal += Vec2::new(di as f64, dj as f64);
                }
            }
            if normal.norm() > 0.0 {
                let n = normal.normalize();
                let v = grid.node_velocity(i, j);
                corrected.push((k, v - v.dot(&n) * n));
            }
        }
    }
    for (k, v) in corrected {
        grid.vx[k] = v.x;
        grid.vy[k] = v.y;
    }

    let max = grid.max_speed();
    if !(max > 0.0) {
        return Err(Error::Geometry("jets do not reach any lumen node".into()));
    }
    grid.scale(peak_speed / max);
    Ok(grid)
}

/// Centerline speed decays like `sqrt(b0 / b(s))` as the half-width
/// `b(s) = b0 + spread * s` grows; the cross-stream profile is Gaussian.
fn jet_velocity(inlet: &JetInlet, spread: f64, p: Vec2) -> Vec2 {
    let d = inlet.direction;
    let rel = p - inlet.position_mm;
    let s = rel.dot(&d);
    if s < 0.0 {
        return Vec2::zeros();
    }
    let n = rel.x * -d.y + rel.y * d.x;
    let b0 = 0.5 * inlet.width_mm;
    let b = b0 + spread * s;
    let centerline = inlet.strength * (b0 / b).sqrt();
    centerline * (-(n / b).powi(2)).exp() * d
}

pub const FLOW_CSV_HEADER: &str = "x_mm,y_mm,vx_mps,vy_mps";

/// Write one row per node, y-major then x. Nodes outside the lumen are
/// written with zero velocity.
pub fn write_flow_csv(grid: &FlowGrid, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{FLOW_CSV_HEADER}").map_err(io)?;
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let p = grid.node_position(i, j);
            let v = grid.node_velocity(i, j);
            writeln!(w, "{:?},{:?},{:?},{:?}", p.x, p.y, v.x, v.y).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

/// Parse the flow CSV. Nodes with zero velocity are treated as inside the
/// domain; the mask only matters for the inside flag.
pub fn load_flow_csv(path: &Path) -> Result<FlowGrid> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let parse_err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };

    let mut rows: Vec<[f64; 4]> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim();
        if idx == 0 {
            if line != FLOW_CSV_HEADER {
                return Err(parse_err(lineno, format!("expected header `{FLOW_CSV_HEADER}`")));
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(parse_err(
                lineno,
                format!("expected 4 columns, found {}", fields.len()),
            ));
        }
        let mut row = [0.0; 4];
        for (slot, f) in row.iter_mut().zip(&fields) {
            *slot = f
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(lineno, format!("bad number `{f}`: {e}")))?;
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(parse_err(1, "no data rows".into()));
    }

    let xs = unique_sorted(rows.iter().map(|r| r[0]));
    let ys = unique_sorted(rows.iter().map(|r| r[1]));
    let spacing_x = uniform_spacing(&xs, "x")?;
    let spacing_y = uniform_spacing(&ys, "y")?;
    if ((spacing_x - spacing_y) / spacing_x).abs() > 1e-6 {
        return Err(Error::Grid(format!(
            "x spacing {spacing_x} differs from y spacing {spacing_y}"
        )));
    }
    let (nx, ny) = (xs.len(), ys.len());
    if rows.len() != nx * ny {
        return Err(Error::Grid(format!(
            "{} rows do not fill a {nx}x{ny} grid",
            rows.len()
        )));
    }
    let origin = Vec2::new(xs[0], ys[0]);
    let spacing = spacing_x;
    let mut grid = FlowGrid::zeros(origin, spacing, nx, ny);
    let mut seen = vec![false; nx * ny];
    for r in &rows {
        let i = ((r[0] - origin.x) / spacing).round() as usize;
        let j = ((r[1] - origin.y) / spacing).round() as usize;
        let k = grid.index(i, j);
        if seen[k] {
            return Err(Error::Grid(format!("duplicate node ({}, {})", r[0], r[1])));
        }
        seen[k] = true;
        grid.vx[k] = r[2];
        grid.vy[k] = r[3];
    }
    grid.validate()?;
    Ok(grid)
}

fn unique_sorted(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn uniform_spacing(coords: &[f64], axis: &str) -> Result<f64> {
    if coords.len() < 2 {
        return Err(Error::Grid(format!("need at least two distinct {axis} coordinates")));
    }
    let h = (coords[coords.len() - 1] - coords[0]) / (coords.len() - 1) as f64;
    for w in coords.windows(2) {
        let d = w[1] - w[0];
        if ((d - h) / h).abs() > 1e-6 {
            return Err(Error::Grid(format!(
                "non-uniform {axis} spacing: {d} vs mean {h}"
            )));
        }
    }
    Ok(h)
}
