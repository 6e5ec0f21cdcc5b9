use std::io;

use thiserror::Error;

/// Errors produced by the identification library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("unrecognized format: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("grid too small for 7-point stencil: {0} points")]
    GridTooSmall(usize),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite sample at path {path}, component {component}, time index {time}")]
    NonFinite {
        path: usize,
        component: usize,
        time: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("solution blow-up at time {time}, path {path}")]
    BlowUp { time: f64, path: usize },

    #[error("sample size {0} below the minimum of 20")]
    SampleTooSmall(usize),

    #[error("initial data lacks Fourier modes: {0}")]
    RankDeficient(String),

    #[error("phase wrap detected at mode {mode} (|Arg| = {arg:.3})")]
    PhaseWrap { mode: i64, arg: f64 },

    #[error("inconsistent data: {0}")]
    Inconsistent(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
