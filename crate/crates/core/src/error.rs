//! Error type shared by every module of the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid coordinate: {0}")]
    InvalidCoordinate(String),

    #[error("index ({row}, {col}) out of range for a {rows}x{cols} array")]
    IndexOutOfRange {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("degenerate aperture: {0}")]
    DegenerateAperture(String),

    #[error("point coincides with an array element (distance {0:e} m)")]
    Singularity(f64),

    #[error("combiner entry ({block}, {index}) has modulus {modulus}, expected 1")]
    NonUnitModulus {
        block: usize,
        index: usize,
        modulus: f64,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("snapshot count {snapshots} is smaller than the {chains} receive chains")]
    InsufficientSnapshots { snapshots: usize, chains: usize },

    #[error("requested {sources} sources but only {chains} receive chains are available")]
    TooManySources { sources: usize, chains: usize },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
