use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid array geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid user location: {0}")]
    InvalidLocation(String),

    #[error("antenna index {index} out of range for {len}-element array")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid antenna split ({num_h}, {num_l}): {reason}")]
    InvalidSplit {
        num_h: usize,
        num_l: usize,
        reason: String,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Gram matrix is ill-conditioned (condition number {condition:.3e}); clusters may be co-located")]
    IllConditioned { condition: f64 },

    #[error("matrix is zero")]
    ZeroMatrix,

    #[error("infeasible: constraint {constraint} violated by {violation:.3e}")]
    Infeasible { constraint: String, violation: f64 },

    #[error("objective outside its domain: {0}")]
    Domain(String),

    #[error(
        "solver hit its iteration cap after {iterations} iterations (residual {residual:.3e})"
    )]
    IterationCap {
        iterations: usize,
        residual: f64,
        best: Vec<f64>,
    },

    #[error("empty grid: {0}")]
    EmptyGrid(String),

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
}
