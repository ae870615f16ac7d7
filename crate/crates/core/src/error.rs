use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// The variants are grouped so that front ends can map them onto exit
/// codes: input/validation problems versus numerical failures.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at data row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("design integrity error: {0}")]
    DesignIntegrity(String),

    #[error(
        "rank deficient Gram matrix (condition {condition:.3e}); null direction {null_direction:?}"
    )]
    Rank {
        condition: f64,
        null_direction: Vec<f64>,
    },

    #[error("degenerate variance: sigma_hat is zero")]
    DegenerateVariance,

    #[error("variance identity radicand is negative ({0:.6e})")]
    IdentityFailure(f64),
}

impl Error {
    /// True for failures of the numerical pipeline rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Rank { .. } | Error::DegenerateVariance | Error::IdentityFailure(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
