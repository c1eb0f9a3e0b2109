//! Offline reference generation from a binary canal mask.
//!
//! Pipeline: exact Euclidean distance transform -> clearance-limited cost map
//! with a centerline bias -> 8-connected A* -> moving-average smoothing ->
//! equal arc-length waypoints -> constant-speed reference trajectory.
//!
//! Pixel coordinates are `(row, col)` with row 0 at the top of the image.
//! Metric coordinates are millimetres, centred on the image, y pointing up.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sensing::PIXEL_SIZE_MM;
use crate::Vec2;

pub type Pixel = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct CanalMask {
    pub nx: usize,
    pub ny: usize,
    /// Row-major, `true` = navigable.
    pub pixels: Vec<bool>,
    pub pixel_size: f64,
}

impl CanalMask {
    pub fn new(nx: usize, ny: usize, pixels: Vec<bool>, pixel_size: f64) -> Result<Self> {
        let mask = CanalMask {
            nx,
            ny,
            pixels,
            pixel_size,
        };
        mask.validate()?;
        Ok(mask)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pixels.len() != self.nx * self.ny {
            return Err(Error::Config("mask size does not match dimensions".into()));
        }
        if !(self.pixel_size > 0.0) {
            return Err(Error::Config("pixel size must be positive".into()));
        }
        if !self.pixels.iter().any(|&p| p) {
            return Err(Error::Config("mask has no navigable pixel".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn index(&self, (row, col): Pixel) -> usize {
        row * self.nx + col
    }

    pub fn frame(&self) -> PixelFrame {
        PixelFrame {
            nx: self.nx,
            ny: self.ny,
            pixel_size: self.pixel_size,
        }
    }

    /// Read a binary (`P5`) or ASCII (`P2`) PGM; values >= 128 (on a 0..255
    /// scale) are navigable.
    pub fn load_pgm(path: &Path, pixel_size: f64) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let err = |msg: String| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg,
        };
        let mut pos = 0;
        let mut header = Vec::new();
        while header.len() < 4 {
            // skip whitespace and comments
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(err("truncated PGM header".into()));
            }
            header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        let magic = header[0].as_str();
        let parse = |s: &str| s.parse::<usize>().map_err(|e| err(format!("bad header field `{s}`: {e}")));
        let nx = parse(&header[1])?;
        let ny = parse(&header[2])?;
        let maxval = parse(&header[3])?;
        if maxval == 0 || maxval > 255 {
            return Err(err(format!("unsupported maxval {maxval}")));
        }
        let navigable = |v: usize| v * 255 >= 128 * maxval;
        let pixels: Vec<bool> = match magic {
            "P5" => {
                pos += 1; // single whitespace after maxval
                let data = bytes.get(pos..pos + nx * ny).ok_or_else(|| err("truncated pixel data".into()))?;
                data.iter().map(|&v| navigable(v as usize)).collect()
            }
            "P2" => {
                let text = String::from_utf8_lossy(&bytes[pos..]);
                let vals: Vec<usize> = text
                    .split_ascii_whitespace()
                    .map(parse)
                    .collect::<Result<_>>()?;
                if vals.len() < nx * ny {
                    return Err(err("truncated pixel data".into()));
                }
                vals[..nx * ny].iter().map(|&v| navigable(v)).collect()
            }
            other => return Err(err(format!("unsupported PGM magic `{other}`"))),
        };
        CanalMask::new(nx, ny, pixels, pixel_size)
    }

    /// Write as binary PGM (255 navigable, 0 wall).
    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let mut out = format!("P5\n{} {}\n255\n", self.nx, self.ny).into_bytes();
        out.extend(self.pixels.iter().map(|&p| if p { 255u8 } else { 0 }));
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }
}

/// Pixel <-> millimetre conversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelFrame {
    pub nx: usize,
    pub ny: usize,
    pub pixel_size: f64,
}

impl PixelFrame {
    pub fn to_mm(&self, row: f64, col: f64) -> Vec2 {
        Vec2::new(
            (col - 0.5 * (self.nx as f64 - 1.0)) * self.pixel_size,
            (0.5 * (self.ny as f64 - 1.0) - row) * self.pixel_size,
        )
    }

    /// Fractional `(row, col)` of a metric point.
    pub fn to_px(&self, p: Vec2) -> (f64, f64) {
        (
            0.5 * (self.ny as f64 - 1.0) - p.y / self.pixel_size,
            p.x / self.pixel_size + 0.5 * (self.nx as f64 - 1.0),
        )
    }
}

const FAR: f64 = 1e20;

/// Exact Euclidean distance (mm) from each pixel to the nearest obstacle.
/// Non-navigable pixels and the outermost image ring are obstacles; obstacle
/// pixels get distance 0.
pub fn distance_transform(mask: &CanalMask) -> Vec<f64> {
    let (nx, ny) = (mask.nx, mask.ny);
    let obstacle = |r: usize, c: usize| {
        r == 0 || c == 0 || r + 1 == ny || c + 1 == nx || !mask.pixels[r * nx + c]
    };
    // squared distances in px^2
    let mut d2 = vec![0.0; nx * ny];
    let mut f = vec![0.0; nx.max(ny)];
    let mut out = vec![0.0; nx.max(ny)];
    let mut scratch = Scratch::new(nx.max(ny));

    // columns
    for c in 0..nx {
        for (r, v) in f[..ny].iter_mut().enumerate() {
            *v = if obstacle(r, c) { 0.0 } else { FAR };
        }
        squared_dt_1d(&f[..ny], &mut out[..ny], &mut scratch);
        for r in 0..ny {
            d2[r * nx + c] = out[r];
        }
    }
    // rows
    for r in 0..ny {
        f[..nx].copy_from_slice(&d2[r * nx..(r + 1) * nx]);
        squared_dt_1d(&f[..nx], &mut out[..nx], &mut scratch);
        d2[r * nx..(r + 1) * nx].copy_from_slice(&out[..nx]);
    }
    d2.iter().map(|v| v.sqrt() * mask.pixel_size).collect()
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Scratch {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }
}

/// Lower envelope of parabolas `(x - q)^2 + f(q)` (Felzenszwalb-Huttenlocher).
fn squared_dt_1d(f: &[f64], d: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    if n == 0 {
        return;
    }
    let v = &mut s.v;
    let z = &mut s.z;
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut sect;
        loop {
            let p = v[k];
            sect = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if sect <= z[k] && k > 0 {
                k -= 1;
            } else {
                break;
            }
        }
        if sect <= z[k] {
            // k == 0 and the new parabola dominates everywhere
            v[0] = q;
        } else {
            k += 1;
            v[k] = q;
            z[k] = sect;
        }
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, out) in d.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let dq = q as f64 - p as f64;
        *out = dq * dq + f[p];
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub min_clearance_mm: f64,
    pub w_clear: f64,
    pub smoothing_window: usize,
    pub waypoints: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            min_clearance_mm: 5.0,
            w_clear: 0.5,
            smoothing_window: 7,
            waypoints: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    pub nx: usize,
    pub ny: usize,
    pub feasible: Vec<bool>,
    /// Step multiplier, >= 1 on feasible pixels and infinite elsewhere.
    pub cost: Vec<f64>,
    pub clearance: Vec<f64>,
}

impl CostMap {
    /// Build directly from per-pixel costs (infinite or NaN marks infeasible).
    pub fn from_costs(nx: usize, ny: usize, cost: Vec<f64>) -> Self {
        let feasible: Vec<bool> = cost.iter().map(|c| c.is_finite()).collect();
        let cost = cost
            .into_iter()
            .map(|c| if c.is_finite() { c } else { f64::INFINITY })
            .collect();
        CostMap {
            nx,
            ny,
            clearance: vec![0.0; nx * ny],
            feasible,
            cost,
        }
    }

    #[inline]
    pub fn index(&self, (row, col): Pixel) -> usize {
        row * self.nx + col
    }

    pub fn is_feasible(&self, p: Pixel) -> bool {
        p.0 < self.ny && p.1 < self.nx && self.feasible[self.index(p)]
    }
}

/// Feasible = navigable with clearance >= `min_clearance`; cost rises
/// linearly from 1 at the largest clearance to `1 + w_clear` at clearance 0.
pub fn build_cost_map(
    mask: &CanalMask,
    clearance: &[f64],
    min_clearance: f64,
    w_clear: f64,
) -> Result<CostMap> {
    let feasible: Vec<bool> = mask
        .pixels
        .iter()
        .zip(clearance)
        .map(|(&nav, &c)| nav && c >= min_clearance)
        .collect();
    let c_max = feasible
        .iter()
        .zip(clearance)
        .filter(|(f, _)| **f)
        .map(|(_, &c)| c)
        .fold(f64::NEG_INFINITY, f64::max);
    if !c_max.is_finite() {
        return Err(Error::EmptyFeasible);
    }
    let cost = feasible
        .iter()
        .zip(clearance)
        .map(|(&f, &c)| {
            if f {
                1.0 + w_clear * (1.0 - c / c_max)
            } else {
                f64::INFINITY
            }
        })
        .collect();
    Ok(CostMap {
        nx: mask.nx,
        ny: mask.ny,
        feasible,
        cost,
        clearance: clearance.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelPath {
    pub pixels: Vec<Pixel>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEntry {
    f: f64,
    h: f64,
    idx: usize,
}

impl Eq for OpenEntry {}

impl Ord for OpenEntry {
    // BinaryHeap is a max-heap: invert so the smallest (f, h, idx) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then_with(|| other.h.total_cmp(&self.h))
            .then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

pub const NEIGHBORS: [(i64, i64, f64); 8] = [
    (-1, -1, SQRT_2),
    (-1, 0, 1.0),
    (-1, 1, SQRT_2),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (1, -1, SQRT_2),
    (1, 0, 1.0),
    (1, 1, SQRT_2),
];

fn octile(a: Pixel, b: Pixel) -> f64 {
    let dr = a.0.abs_diff(b.0) as f64;
    let dc = a.1.abs_diff(b.1) as f64;
    let (lo, hi) = if dr < dc { (dr, dc) } else { (dc, dr) };
    (hi - lo) + SQRT_2 * lo
}

/// 8-connected A*. Entering pixel `q` costs `(1 or sqrt 2) * cost(q)`.
pub fn astar(map: &CostMap, start: Pixel, goal: Pixel) -> Result<PixelPath> {
    if !map.is_feasible(start) || !map.is_feasible(goal) {
        return Err(Error::NoPath { start, goal });
    }
    let n = map.nx * map.ny;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let mut open = BinaryHeap::new();
    let s = map.index(start);
    let goal_idx = map.index(goal);
    g[s] = 0.0;
    let h0 = octile(start, goal);
    open.push(OpenEntry { f: h0, h: h0, idx: s });

    while let Some(OpenEntry { idx, .. }) = open.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == goal_idx {
            let mut pixels = vec![goal];
            let mut cur = idx;
            while cur != s {
                cur = parent[cur];
                pixels.push((cur / map.nx, cur % map.nx));
            }
            pixels.reverse();
            return Ok(PixelPath {
                pixels,
                cost: g[idx],
            });
        }
        let (r, c) = (idx / map.nx, idx % map.nx);
        for (dr, dc, step) in NEIGHBORS {
            let (nr, nc) = (r as i64 + dr, c as i64 + dc);
            if nr < 0 || nc < 0 || nr >= map.ny as i64 || nc >= map.nx as i64 {
                continue;
            }
            let q = (nr as usize, nc as usize);
            let qi = map.index(q);
            if !map.feasible[qi] || closed[qi] {
                continue;
            }
            let cand = g[idx] + step * map.cost[qi];
            if cand < g[qi] {
                g[qi] = cand;
                parent[qi] = idx;
                let h = octile(q, goal);
                open.push(OpenEntry {
                    f: cand + h,
                    h,
                    idx: qi,
                });
            }
        }
    }
    Err(Error::NoPath { start, goal })
}

/// Nearest feasible pixel to a fractional `(row, col)` point; ties go to the
/// earlier pixel in row-major order.
pub fn project_to_feasible(point: (f64, f64), map: &CostMap) -> Result<Pixel> {
    let (pr, pc) = point;
    let cr = pr.round().clamp(0.0, (map.ny - 1) as f64) as i64;
    let cc = pc.round().clamp(0.0, (map.nx - 1) as f64) as i64;
    let mut best: Option<(f64, usize)> = None;
    let max_ring = map.nx.max(map.ny) as i64;
    for ring in 0..=max_ring {
        // Every pixel in ring `k` is at least `k - 0.5` (plus the rounding
        // offset) away; stop once that bound exceeds the best found.
        if let Some((d2, _)) = best {
            let bound = (ring as f64 - 1.0).max(0.0);
            if bound * bound > d2 {
                break;
            }
        }
        for r in (cr - ring)..=(cr + ring) {
            if r < 0 || r >= map.ny as i64 {
                continue;
            }
            let on_edge_row = r == cr - ring || r == cr + ring;
            let cols: Vec<i64> = if on_edge_row {
                ((cc - ring)..=(cc + ring)).collect()
            } else {
                vec![cc - ring, cc + ring]
            };
            for c in cols {
                if c < 0 || c >= map.nx as i64 {
                    continue;
                }
                let idx = r as usize * map.nx + c as usize;
                if !map.feasible[idx] {
                    continue;
                }
                let d2 = (r as f64 - pr).powi(2) + (c as f64 - pc).powi(2);
                let better = match best {
                    None => true,
                    Some((bd, bi)) => d2 < bd || (d2 == bd && idx < bi),
                };
                if better {
                    best = Some((d2, idx));
                }
            }
        }
    }
    best.map(|(_, idx)| (idx / map.nx, idx % map.nx))
        .ok_or(Error::EmptyFeasible)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub waypoints: Vec<Vec2>,
    /// Length of the polyline through the waypoints (mm).
    pub total_length: f64,
}

impl PlannedPath {
    pub fn from_waypoints(waypoints: Vec<Vec2>) -> Self {
        let total_length = polyline_length(&waypoints);
        PlannedPath {
            waypoints,
            total_length,
        }
    }

    /// Waypoints as CSV `idx,x_mm,y_mm`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("idx,x_mm,y_mm\n");
        for (k, w) in self.waypoints.iter().enumerate() {
            s.push_str(&format!("{k},{:?},{:?}\n", w.x, w.y));
        }
        s
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pts = Vec::new();
        for (k, line) in text.lines().enumerate() {
            if k == 0 || line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            let bad = |msg: String| Error::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                msg,
            };
            if fields.len() != 3 {
                return Err(bad(format!("expected 3 columns, found {}", fields.len())));
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("bad number `{s}`: {e}")));
            pts.push(Vec2::new(num(fields[1])?, num(fields[2])?));
        }
        if pts.len() < 2 {
            return Err(Error::Config(format!("{} needs at least two waypoints", path.display())));
        }
        Ok(PlannedPath::from_waypoints(pts))
    }
}

pub fn polyline_length(pts: &[Vec2]) -> f64 {
    pts.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Centered moving average with a window that shrinks symmetrically at the
/// ends (endpoints stay fixed), then `n` stations at equal arc length.
pub fn smooth_resample(path: &[Pixel], window: usize, n: usize, frame: &PixelFrame) -> PlannedPath {
    let pts: Vec<Vec2> = path
        .iter()
        .map(|&(r, c)| frame.to_mm(r as f64, c as f64))
        .collect();
    let smoothed = moving_average(&pts, window);
    PlannedPath::from_waypoints(resample_by_arc_length(&smoothed, n))
}

pub fn moving_average(pts: &[Vec2], window: usize) -> Vec<Vec2> {
    let half = window / 2;
    let len = pts.len();
    (0..len)
        .map(|i| {
            let h = half.min(i).min(len - 1 - i);
            let sum: Vec2 = pts[i - h..=i + h].iter().sum();
            sum / (2 * h + 1) as f64
        })
        .collect()
}

pub fn resample_by_arc_length(pts: &[Vec2], n: usize) -> Vec<Vec2> {
    if pts.len() < 2 || n < 2 {
        return vec![pts[0]; n.max(1)];
    }
    let mut cum = vec![0.0];
    for w in pts.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        if k == n - 1 {
            out.push(*pts.last().unwrap());
            break;
        }
        let s = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let t = if len > 0.0 { (s - cum[seg]) / len } else { 0.0 };
        out.push(pts[seg] + t * (pts[seg + 1] - pts[seg]));
    }
    out
}

/// Desired position, velocity and path tangent at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefSample {
    pub position_mm: Vec2,
    pub velocity_mm_s: Vec2,
    pub tangent: Vec2,
}

/// Constant-speed traversal of the waypoint polyline, clamped at the end.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTrajectory {
    points: Vec<Vec2>,
    cum: Vec<f64>,
    pub speed: f64,
}

impl ReferenceTrajectory {
    pub fn new(path: &PlannedPath, speed_mm_s: f64) -> Result<Self> {
        if path.waypoints.len() < 2 {
            return Err(Error::Config("reference needs at least two waypoints".into()));
        }
        if !(speed_mm_s > 0.0) {
            return Err(Error::Config("reference speed must be positive".into()));
        }
        let mut cum = vec![0.0];
        for w in path.waypoints.windows(2) {
            cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
        }
        Ok(ReferenceTrajectory {
            points: path.waypoints.clone(),
            cum,
            speed: speed_mm_s,
        })
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    /// Time at which the reference reaches the final waypoint.
    pub fn duration(&self) -> f64 {
        self.length() / self.speed
    }

    pub fn final_point(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    pub fn start_point(&self) -> Vec2 {
        self.points[0]
    }

    pub fn sample(&self, t: f64) -> RefSample {
        let s = (t.max(0.0) * self.speed).min(self.length());
        let mut seg = 0;
        while seg + 2 < self.cum.len() && self.cum[seg + 1] <= s {
            seg += 1;
        }
        // skip zero-length segments for the tangent
        let (a, b) = (self.points[seg], self.points[seg + 1]);
        let len = self.cum[seg + 1] - self.cum[seg];
        let tangent = if len > 0.0 {
            (b - a) / len
        } else {
            self.fallback_tangent()
        };
        let u = if len > 0.0 { (s - self.cum[seg]) / len } else { 0.0 };
        let moving = t * self.speed < self.length();
        RefSample {
            position_mm: a + u * (b - a),
            velocity_mm_s: if moving && t >= 0.0 { tangent * self.speed } else { Vec2::zeros() },
            tangent,
        }
    }

    pub fn position(&self, t: f64) -> Vec2 {
        self.sample(t).position_mm
    }

    fn fallback_tangent(&self) -> Vec2 {
        let d = self.final_point() - self.start_point();
        if d.norm() > 0.0 {
            d.normalize()
        } else {
            Vec2::new(1.0, 0.0)
        }
    }
}

/// Everything the planning pipeline produces.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub clearance: Vec<f64>,
    pub costmap: CostMap,
    pub start_px: Pixel,
    pub goal_px: Pixel,
    pub pixel_path: PixelPath,
    pub path: PlannedPath,
}

pub fn plan(mask: &CanalMask, start_mm: Vec2, goal_mm: Vec2, cfg: &PlannerConfig) -> Result<PlanResult> {
    mask.validate()?;
    let clearance = distance_transform(mask);
    let costmap = build_cost_map(mask, &clearance, cfg.min_clearance_mm, cfg.w_clear)?;
    let frame = mask.frame();
    let start_px = project_to_feasible(frame.to_px(start_mm), &costmap)?;
    let goal_px = project_to_feasible(frame.to_px(goal_mm), &costmap)?;
    let pixel_path = astar(&costmap, start_px, goal_px)?;
    let path = smooth_resample(&pixel_path.pixels, cfg.smoothing_window, cfg.waypoints, &frame);
    Ok(PlanResult {
        clearance,
        costmap,
        start_px,
        goal_px,
        pixel_path,
        path,
    })
}

/// Default pixel size of the camera mask (mm/px).
pub const DEFAULT_PIXEL_SIZE_MM: f64 = PIXEL_SIZE_MM;
