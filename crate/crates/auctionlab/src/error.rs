//! Error type shared across the library and the CLI.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An auction instance violates its invariants (dimensions, ranges,
    /// non-finite entries).
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    /// A caller-supplied argument is outside its contract.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Exhaustive enumeration refused: the instance is too large.
    #[error("instance too large for exhaustive search: n = {n}, limit = {max}")]
    SizeLimit { n: usize, max: usize },

    /// The data cannot pin down the requested parameter (e.g. a slope with
    /// no weight variation).
    #[error("unidentifiable: {0}")]
    Unidentifiable(String),

    /// Input outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown segment `{0}`")]
    UnknownSegment(String),

    /// Inverting the power law requires a strictly positive elasticity.
    #[error("inversion undefined: fitted elasticity {alpha} is not positive")]
    InversionUndefined { alpha: f64 },

    /// Iterative solver hit its iteration cap before meeting tolerance.
    #[error("no convergence after {iterations} iterations (last residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    /// Bad configuration file or configuration contents.
    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for usage/config mistakes, 3 for
    /// runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidInstance(_)
            | Error::InvalidArgument(_)
            | Error::SizeLimit { .. }
            | Error::Domain(_)
            | Error::UnknownSegment(_)
            | Error::Config(_)
            | Error::Json(_)
            | Error::Csv(_) => 2,
            Error::Unidentifiable(_)
            | Error::InversionUndefined { .. }
            | Error::NonConvergence { .. }
            | Error::Io(_) => 3,
        }
    }
}
