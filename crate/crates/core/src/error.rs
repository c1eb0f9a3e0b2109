use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("query point {distance_m:.3e} m from coil center (limit {limit_m:.3e} m)")]
    Singularity { distance_m: f64, limit_m: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("flow geometry: {0}")]
    Geometry(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("grid is not rectilinear: {0}")]
    Grid(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("no feasible pixel survives the clearance constraint")]
    EmptyFeasible,

    #[error("goal {goal:?} unreachable from {start:?}")]
    NoPath {
        start: (usize, usize),
        goal: (usize, usize),
    },

    #[error("solver: {0}")]
    Solve(String),

    #[error("metrics need a non-empty error series")]
    EmptySeries,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
