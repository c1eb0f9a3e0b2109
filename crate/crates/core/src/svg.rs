//! Hand-rolled SVG overlays. Drawing units are millimetres with the y axis
//! flipped so that +y points up on screen.

use std::fmt::Write as _;

use crate::planner::{CanalMask, CostMap};
use crate::Vec2;

const DESIRED_COLOR: &str = "#1f77b4";
const ACTUAL_COLOR: &str = "#d62728";

struct Canvas {
    body: String,
    min: Vec2,
    max: Vec2,
}

impl Canvas {
    fn new() -> Self {
        Canvas {
            body: String::new(),
            min: Vec2::repeat(f64::INFINITY),
            max: Vec2::repeat(f64::NEG_INFINITY),
        }
    }

    fn include(&mut self, p: Vec2) {
        self.min = self.min.inf(&p);
        self.max = self.max.sup(&p);
    }

    fn include_mask(&mut self, mask: &CanalMask) {
        let hx = mask.nx as f64 * mask.pixel_size / 2.0;
        let hy = mask.ny as f64 * mask.pixel_size / 2.0;
        self.include(Vec2::new(-hx, -hy));
        self.include(Vec2::new(hx, hy));
    }

    fn finish(self) -> String {
        let (min, max) = if self.min.x.is_finite() {
            (self.min, self.max)
        } else {
            (Vec2::repeat(-1.0), Vec2::repeat(1.0))
        };
        let pad = 0.03 * (max - min).max().max(1.0);
        let (x0, y0) = (min.x - pad, -max.y - pad);
        let (w, h) = (max.x - min.x + 2.0 * pad, max.y - min.y + 2.0 * pad);
        let scale = 800.0 / w.max(h);
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" viewBox=\"{x0:.3} {y0:.3} {w:.3} {h:.3}\">\n\
             <rect x=\"{x0:.3}\" y=\"{y0:.3}\" width=\"{w:.3}\" height=\"{h:.3}\" fill=\"white\"/>\n{}</svg>\n",
            w * scale,
            h * scale,
            self.body
        )
    }
}

fn polyline(points: &[Vec2], color: &str, width: f64, dash: Option<&str>) -> String {
    let mut s = format!("<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\"");
    if let Some(d) = dash {
        let _ = write!(s, " stroke-dasharray=\"{d}\"");
    }
    s.push_str(" points=\"");
    for (i, p) in points.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.3},{:.3}", p.x, -p.y);
    }
    s.push_str("\"/>\n");
    s
}

fn marker(p: Vec2, color: &str, r: f64, filled: bool) -> String {
    let fill = if filled { color } else { "white" };
    format!(
        "<circle cx=\"{:.3}\" cy=\"{:.3}\" r=\"{r}\" fill=\"{fill}\" stroke=\"{color}\" stroke-width=\"0.3\"/>\n",
        p.x, -p.y
    )
}

/// Boundary of the `inside` pixel set as merged axis-aligned segments, in
/// drawing units.
fn outline_path(nx: usize, ny: usize, px: f64, inside: impl Fn(usize, usize) -> bool) -> String {
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let gx = |c: f64| (c - 0.5 - cx) * px;
    let gy = |r: f64| (r - 0.5 - cy) * px;
    let at = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < ny && (c as usize) < nx && inside(r as usize, c as usize)
    };
    let mut d = String::new();
    // horizontal edges on grid line r (between rows r-1 and r)
    for r in 0..=ny as isize {
        let mut run: Option<isize> = None;
        for c in 0..=nx as isize {
            let edge = c < nx as isize && at(r - 1, c) != at(r, c);
            match (edge, run) {
                (true, None) => run = Some(c),
                (false, Some(c0)) => {
                    let _ = write!(d, "M{:.3} {:.3}H{:.3}", gx(c0 as f64), gy(r as f64), gx(c as f64));
                    run = None;
                }
                _ => {}
            }
        }
    }
    for c in 0..=nx as isize {
        let mut run: Option<isize> = None;
        for r in 0..=ny as isize {
            let edge = r < ny as isize && at(r, c - 1) != at(r, c);
            match (edge, run) {
                (true, None) => run = Some(r),
                (false, Some(r0)) => {
                    let _ = write!(d, "M{:.3} {:.3}V{:.3}", gx(c as f64), gy(r0 as f64), gy(r as f64));
                    run = None;
                }
                _ => {}
            }
        }
    }
    d
}

/// Filled row runs of the `inside` pixel set.
fn region_path(nx: usize, ny: usize, px: f64, inside: impl Fn(usize, usize) -> bool) -> String {
    let cx = (nx as f64 - 1.0) / 2.0;
    let cy = (ny as f64 - 1.0) / 2.0;
    let mut d = String::new();
    for r in 0..ny {
        let mut c = 0;
        while c < nx {
            if !inside(r, c) {
                c += 1;
                continue;
            }
            let c0 = c;
            while c < nx && inside(r, c) {
                c += 1;
            }
            let _ = write!(
                d,
                "M{:.3} {:.3}h{:.3}v{:.3}h{:.3}z",
                (c0 as f64 - 0.5 - cx) * px,
                (r as f64 - 0.5 - cy) * px,
                (c - c0) as f64 * px,
                px,
                -((c - c0) as f64) * px
            );
        }
    }
    d
}

fn mask_outline(canvas: &mut Canvas, mask: &CanalMask) {
    canvas.include_mask(mask);
    let d = outline_path(mask.nx, mask.ny, mask.pixel_size, |r, c| mask.pixels[mask.index((r, c))]);
    let _ = writeln!(
        canvas.body,
        "<path fill=\"none\" stroke=\"black\" stroke-width=\"0.25\" d=\"{d}\"/>"
    );
}

/// Planner overlay: mask outline, feasible region and the waypoint path.
pub fn plan_overlay(mask: &CanalMask, costmap: &CostMap, waypoints: &[Vec2]) -> String {
    let mut canvas = Canvas::new();
    let d = region_path(costmap.nx, costmap.ny, mask.pixel_size, |r, c| costmap.is_feasible((r, c)));
    let _ = writeln!(
        canvas.body,
        "<path fill=\"#b8e0b8\" stroke=\"none\" d=\"{d}\"/>"
    );
    mask_outline(&mut canvas, mask);
    for &p in waypoints {
        canvas.include(p);
    }
    canvas.body.push_str(&polyline(waypoints, DESIRED_COLOR, 0.4, None));
    for &p in waypoints {
        canvas.body.push_str(&marker(p, DESIRED_COLOR, 0.6, true));
    }
    canvas.finish()
}

/// Trial overlay: mask outline (when known), desired and actual paths with
/// start and end markers.
pub fn trial_overlay(mask: Option<&CanalMask>, desired: &[Vec2], actual: &[Vec2]) -> String {
    let mut canvas = Canvas::new();
    if let Some(m) = mask {
        mask_outline(&mut canvas, m);
    }
    for &p in desired.iter().chain(actual) {
        canvas.include(p);
    }
    canvas.body.push_str(&polyline(desired, DESIRED_COLOR, 0.4, Some("1.2 0.8")));
    canvas.body.push_str(&polyline(actual, ACTUAL_COLOR, 0.3, None));
    if let (Some(&a), Some(&b)) = (actual.first(), actual.last()) {
        canvas.body.push_str(&marker(a, ACTUAL_COLOR, 0.8, false));
        canvas.body.push_str(&marker(b, ACTUAL_COLOR, 0.8, true));
    }
    if let Some(&g) = desired.last() {
        canvas.body.push_str(&marker(g, DESIRED_COLOR, 0.8, true));
    }
    canvas.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_pixel_outline_is_a_unit_square() {
        let d = outline_path(3, 3, 1.0, |r, c| r == 1 && c == 1);
        assert_eq!(
            d,
            "M-0.500 -0.500H0.500M-0.500 0.500H0.500M-0.500 -0.500V0.500M0.500 -0.500V0.500"
        );
    }

    #[test]
    fn runs_merge() {
        let d = region_path(4, 1, 2.0, |_, c| c < 3);
        assert_eq!(d.matches('M').count(), 1);
        assert!(d.contains("h6.000"));
    }

    #[test]
    fn overlay_is_wellformed() {
        let s = trial_overlay(None, &[Vec2::new(0.0, 0.0), Vec2::new(1.0, 2.0)], &[Vec2::new(0.1, 0.0)]);
        assert!(s.starts_with("<?xml"));
        assert!(s.trim_end().ends_with("</svg>"));
        assert_eq!(s.matches("<polyline").count(), 2);
        assert_eq!(s.matches("<circle").count(), 3);
    }
}
