use thiserror::Error;

use crate::spectral::FreqIndex;

#[derive(Debug, Error)]
pub enum ZyError {
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("field is not hermitian at mode ({}, {})", .0.x, .0.y)]
    NotHermitian(FreqIndex),
    #[error("integrator produced a non-finite value at t = {t}: {what}")]
    NonFinite { t: f64, what: String },
    #[error("enumeration budget exceeded: {0}")]
    Budget(String),
    #[error("bad snapshot: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, ZyError>;
