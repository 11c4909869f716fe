use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not Hermitian: max |H - H^dagger| = {deviation:e} with max |H| = {scale:e}")]
    NotHermitian { deviation: f64, scale: f64 },

    #[error("Jacobi eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    EigenNoConvergence { sweeps: usize, off_norm: f64 },

    #[error("Bessel argument z = {z} outside supported range |z| < 50")]
    UnsupportedRange { z: f64 },

    #[error("invalid field map: {0}")]
    InvalidField(String),

    #[error("steady state not reached after {periods} periods (last change {last_change:e})")]
    NotConverged { periods: usize, last_change: f64 },

    #[error("integration failed at t = {t:e}: {reason}")]
    Integration { t: f64, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
