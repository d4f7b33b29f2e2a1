use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure classes, used by the command-line driver to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Model,
    Numerics,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("coefficient `{coefficient}` returned a non-finite value at probe {probe}")]
    ProbeFailure {
        coefficient: &'static str,
        probe: usize,
    },

    #[error("unsupported dimension: expected {expected}, found {found}")]
    UnsupportedDimension { expected: usize, found: usize },

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("config line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("state blew up for particle {particle} at t = {time}")]
    BlowUp { particle: usize, time: f64 },

    #[error("invalid control: {0}")]
    InvalidControl(String),

    #[error("window {window} is outside (stride, t_end = {t_end}]")]
    InvalidWindow { window: f64, t_end: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("frozen fast process diverged at t = {time}; the fast drift is not dissipative here")]
    DissipativityViolation { time: f64 },

    #[error("Monte Carlo averaged drift too noisy: standard error {std_error:.3e} > tolerance {tolerance:.3e}; increase n_samples")]
    NoisyDrift { std_error: f64, tolerance: f64 },

    #[error("endpoint unreachable: gap {gap:.3e} remains after penalty {penalty:.1e}")]
    Infeasible { gap: f64, penalty: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidConfig(_) | Error::Syntax { .. } | Error::InvalidWindow { .. } => {
                ErrorKind::Config
            }
            Error::InvalidModel(_)
            | Error::ProbeFailure { .. }
            | Error::UnsupportedDimension { .. }
            | Error::InvalidMeasure(_)
            | Error::InvalidControl(_)
            | Error::Domain(_) => ErrorKind::Model,
            Error::BlowUp { .. }
            | Error::DissipativityViolation { .. }
            | Error::NoisyDrift { .. }
            | Error::Infeasible { .. } => ErrorKind::Numerics,
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => ErrorKind::Io,
        }
    }
}
