//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no voxels: mask selects zero grid cells")]
    NoVoxels,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-positive {what}: {value}")]
    NonPositive { what: &'static str, value: f64 },

    #[error("enumeration infeasible: {n} voxels exceed the exact-enumeration limit of {limit}")]
    EnumerationInfeasible { n: usize, limit: usize },

    #[error("singular precision matrix: {0}")]
    SingularPrecision(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("stationarity resampling failed at voxel {voxel} after {cap} attempts; reduce the slab variance or the Ising smoothing")]
    StationarityRetry { voxel: usize, cap: usize },

    #[error("design matrix is rank deficient: column {column} is linearly dependent on earlier columns")]
    RankDeficient { column: usize },

    #[error("chain did not store per-draw log densities; rerun with store_loglik enabled")]
    MissingDensities,

    #[error("truth activation set is empty")]
    EmptyActiveSet,

    #[error("Swendsen-Wang requires a non-negative coupling, got beta1 = {0}")]
    NegativeCoupling(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("volume format error: {0}")]
    VolumeFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code class for the CLI. Documented in the README.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Json(_) => 3,
            Error::Io(_) | Error::VolumeFormat(_) => 4,
            Error::NoVoxels
            | Error::DimensionMismatch(_)
            | Error::EmptyActiveSet
            | Error::MissingDensities
            | Error::EnumerationInfeasible { .. } => 6,
            _ => 5,
        }
    }
}
