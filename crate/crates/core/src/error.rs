use thiserror::Error;

use crate::dictionary::SparseSpectrum;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("slant range {slant_range} m is below platform height {height} m")]
    RangeBelowHeight { slant_range: f64, height: f64 },

    #[error("look angle is not reachable at this elevation (discriminant {discriminant:e})")]
    InconsistentGeometry { discriminant: f64 },

    #[error("invalid radar configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("grid with {cells} cells cannot span a {dim}-dimensional snapshot")]
    GridTooCoarse { cells: usize, dim: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("all singular values fell below the truncation level")]
    NumericalBreakdown,

    #[error("threshold removed every grid cell from the support")]
    EmptySupport,

    #[error("solver did not converge after {iterations} iterations")]
    DidNotConverge {
        iterations: usize,
        best: Box<SparseSpectrum>,
    },

    #[error("error allowance {epsilon:e} is below the distance {distance:e} from the data to the dictionary range")]
    Infeasible { epsilon: f64, distance: f64 },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("subaperture {sub_channels}x{sub_pulses} leaves no room for difference rows in a {channels}x{pulses} array")]
    DimensionError {
        sub_channels: usize,
        sub_pulses: usize,
        channels: usize,
        pulses: usize,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
