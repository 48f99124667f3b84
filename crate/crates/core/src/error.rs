use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the simulator or the classification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed WAV file {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("unsupported audio encoding in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("audio clip {0} contains no samples")]
    EmptyClip(PathBuf),

    #[error("no files under {root} match pattern `{pattern}`")]
    EmptyDataset { root: PathBuf, pattern: String },

    #[error(
        "duplicate entry (speaker={speaker}, digit={digit}, trial={trial}): {first} and {second}"
    )]
    DuplicateEntry {
        speaker: String,
        digit: u8,
        trial: u32,
        first: PathBuf,
        second: PathBuf,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "network did not percolate after {attempts} attempt(s); last attempt: source component {source_component} wires, ground component {ground_component} wires, {components} components"
    )]
    PercolationFailure {
        attempts: u32,
        source_component: usize,
        ground_component: usize,
        components: usize,
    },

    #[error("rate exponent overflow at junction {junction:?} (v = {voltage} V)")]
    Saturated {
        junction: Option<usize>,
        voltage: f64,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("source and ground are not connected")]
    NotPercolating,

    #[error(
        "solver did not converge after {iterations} iterations (relative residual {residual:e})"
    )]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("clip {clip} failed at timestep {timestep:?}: {source}")]
    Clip {
        clip: String,
        timestep: Option<usize>,
        #[source]
        source: Box<Error>,
    },

    #[error("{} of {total} clips failed; first: {}", failures.len(), failures.first().map(|e| e.to_string()).unwrap_or_default())]
    Batch { total: usize, failures: Vec<Error> },

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) trait IoContext<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T>;
}

impl<T> IoContext<T> for std::io::Result<T> {
    fn at(self, path: impl Into<PathBuf>) -> Result<T> {
        self.map_err(|source| Error::Io {
            path: path.into(),
            source,
        })
    }
}
