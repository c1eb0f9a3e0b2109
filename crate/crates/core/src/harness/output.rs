use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{metrics, Metrics, TrialResult};
use crate::error::{Error, Result};
use crate::planner::CanalMask;
use crate::svg;

pub const CSV_HEADER: &str = "t_s,x_mm,y_mm,xd_mm,yd_mm,err_mm,fx_n,fy_n,\
i1_a,i2_a,i3_a,i4_a,i5_a,i6_a,i7_a,i8_a,sx,sy,dhat_x,dhat_y";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rmse_mm: f64,
    pub p95_mm: f64,
    pub max_mm: f64,
    pub completed: bool,
    pub failure_reason: Option<String>,
    pub scenario_hash: String,
}

impl Summary {
    pub fn of(result: &TrialResult) -> Self {
        Summary {
            rmse_mm: result.metrics.rmse_mm,
            p95_mm: result.metrics.p95_mm,
            max_mm: result.metrics.max_mm,
            completed: result.completed,
            failure_reason: result.failure_reason.map(|r| r.to_string()),
            scenario_hash: result.scenario_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub csv: PathBuf,
    pub summary: PathBuf,
    pub svg: PathBuf,
}

/// Per-step CSV; floats use the shortest representation that round-trips
/// (`Debug`, which switches to exponent notation for tiny values).
pub fn write_csv(result: &TrialResult) -> String {
    let mut s = String::with_capacity(256 * (result.series.len() + 1));
    s.push_str(CSV_HEADER);
    s.push('\n');
    for r in &result.series {
        let _ = write!(
            s,
            "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            r.t, r.position_mm.x, r.position_mm.y, r.desired_mm.x, r.desired_mm.y, r.err_mm, r.force.x, r.force.y
        );
        for i in r.currents.iter() {
            let _ = write!(s, ",{i:?}");
        }
        let _ = writeln!(s, ",{:?},{:?},{:?},{:?}", r.s.x, r.s.y, r.d_hat.x, r.d_hat.y);
    }
    s
}

fn write(path: &Path, contents: &[u8]) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// Write `trajectory.csv`, `summary.json` and `overlay.svg` into `dir`.
pub fn emit_outputs(result: &TrialResult, mask: Option<&CanalMask>, dir: &Path) -> Result<OutputPaths> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = OutputPaths {
        csv: dir.join("trajectory.csv"),
        summary: dir.join("summary.json"),
        svg: dir.join("overlay.svg"),
    };
    write(&paths.csv, write_csv(result).as_bytes())?;
    let mut json = serde_json::to_string_pretty(&Summary::of(result))?;
    json.push('\n');
    write(&paths.summary, json.as_bytes())?;
    let desired: Vec<_> = result.series.iter().map(|r| r.desired_mm).collect();
    let actual: Vec<_> = result.series.iter().map(|r| r.position_mm).collect();
    // the full reference path, not just the part reached before a failure
    let mut reference = result.waypoints.clone();
    if reference.is_empty() {
        reference = desired;
    }
    write(&paths.svg, svg::trial_overlay(mask, &reference, &actual).as_bytes())?;
    Ok(paths)
}

/// Recompute the metrics from the `err_mm` column of an emitted CSV.
pub fn summary_from_csv(path: &Path) -> Result<Metrics> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    let col = header.split(',').position(|h| h == "err_mm").ok_or_else(|| Error::Parse {
        path: path.into(),
        line: 1,
        msg: "no err_mm column".into(),
    })?;
    let mut errs = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let field = line.split(',').nth(col).ok_or_else(|| Error::Parse {
            path: path.into(),
            line: i + 2,
            msg: "short row".into(),
        })?;
        errs.push(field.parse::<f64>().map_err(|e| Error::Parse {
            path: path.into(),
            line: i + 2,
            msg: e.to_string(),
        })?);
    }
    metrics(&errs)
}
