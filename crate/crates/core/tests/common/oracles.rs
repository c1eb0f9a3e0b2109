//! Slow but obviously correct reference implementations.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use millibot::planner::{CanalMask, CostMap, NEIGHBORS};
use millibot::Vec2;
use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

pub const FIXTURE_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

pub fn brute_force_edt(mask: &CanalMask) -> Vec<f64> {
    let (nx, ny) = (mask.nx, mask.ny);
    let obstacle = |r: usize, c: usize| r == 0 || c == 0 || r + 1 == ny || c + 1 == nx || !mask.pixels[r * nx + c];
    let obstacles: Vec<(usize, usize)> = (0..ny)
        .flat_map(|r| (0..nx).map(move |c| (r, c)))
        .filter(|&(r, c)| obstacle(r, c))
        .collect();
    (0..ny * nx)
        .map(|i| {
            let (r, c) = (i / nx, i % nx);
            let d2 = obstacles
                .iter()
                .map(|&(orow, ocol)| {
                    let dr = r as f64 - orow as f64;
                    let dc = c as f64 - ocol as f64;
                    dr * dr + dc * dc
                })
                .fold(f64::INFINITY, f64::min);
            d2.sqrt() * mask.pixel_size
        })
        .collect()
}

/// Plain Dijkstra with the same step model as A*.
pub fn dijkstra(map: &CostMap, start: (usize, usize), goal: (usize, usize)) -> Option<f64> {
    let n = map.nx * map.ny;
    let mut dist = vec![f64::INFINITY; n];
    let mut done = vec![false; n];
    let mut heap = BinaryHeap::new();
    let s = map.index(start);
    dist[s] = 0.0;
    heap.push(Reverse((ordered(0.0), s)));
    while let Some(Reverse((_, u))) = heap.pop() {
        if done[u] {
            continue;
        }
        done[u] = true;
        if u == map.index(goal) {
            return Some(dist[u]);
        }
        let (r, c) = ((u / map.nx) as i64, (u % map.nx) as i64);
        for (dr, dc, step) in NEIGHBORS {
            let (nr, nc) = (r + dr, c + dc);
            if nr < 0 || nc < 0 || nr >= map.ny as i64 || nc >= map.nx as i64 {
                continue;
            }
            let v = map.index((nr as usize, nc as usize));
            if !map.feasible[v] {
                continue;
            }
            let alt = dist[u] + step * map.cost[v];
            if alt < dist[v] {
                dist[v] = alt;
                heap.push(Reverse((ordered(alt), v)));
            }
        }
    }
    None
}

pub fn ordered(v: f64) -> u64 {
    // non-negative floats order like their bit patterns
    v.to_bits()
}

pub fn path_cost(map: &CostMap, pixels: &[(usize, usize)]) -> f64 {
    pixels
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0], w[1]);
            let dr = a.0.abs_diff(b.0);
            let dc = a.1.abs_diff(b.1);
            assert!(dr <= 1 && dc <= 1 && dr + dc > 0, "not 8-connected: {a:?} -> {b:?}");
            assert!(map.is_feasible(b));
            let step = if dr + dc == 2 { std::f64::consts::SQRT_2 } else { 1.0 };
            step * map.cost[map.index(b)]
        })
        .sum()
}

/// Arc-length coordinate of each point on the polyline through `line`,
/// taken at the closest segment.
pub fn arc_positions(line: &[Vec2], points: &[Vec2]) -> Vec<f64> {
    let mut cum = vec![0.0];
    for w in line.windows(2) {
        cum.push(cum.last().unwrap() + (w[1] - w[0]).norm());
    }
    points
        .iter()
        .map(|&p| {
            let mut best = (f64::INFINITY, 0.0);
            for (k, w) in line.windows(2).enumerate() {
                let seg = w[1] - w[0];
                let len2 = seg.norm_squared();
                let t = if len2 > 0.0 { ((p - w[0]).dot(&seg) / len2).clamp(0.0, 1.0) } else { 0.0 };
                let dist = (w[0] + seg * t - p).norm();
                if dist < best.0 {
                    best = (dist, cum[k] + t * len2.sqrt());
                }
            }
            best.1
        })
        .collect()
}

pub type Mat48 = SMatrix<f64, 4, 8>;
pub type Vec8 = SVector<f64, 8>;

/// Minimum-norm solution of a full-row-rank system through the normal
/// equations: `A^T (A A^T)^-1 C`.
pub fn normal_equations(a: &Mat48, c: &Vector4<f64>) -> Option<Vec8> {
    let gram: Matrix4<f64> = a * a.transpose();
    gram.cholesky().map(|ch| a.transpose() * ch.solve(c))
}
