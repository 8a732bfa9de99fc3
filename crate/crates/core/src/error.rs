use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unbounded domain")]
    UnboundedDomain,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// The threshold lies within the spectrum tolerance of an eigenvalue.
    /// Callers are expected to perturb the threshold and retry.
    #[error("threshold hits spectrum at {threshold} (within {tolerance:e})")]
    ThresholdHitsSpectrum { threshold: f64, tolerance: f64 },

    #[error("factorization breakdown: {0}; refine the threshold or enlarge the domain")]
    NumericalBreakdown(String),

    #[error("window too wide: bisection budget of {budget} cells exceeded")]
    WindowTooWide { budget: usize },

    #[error("resolvent singular at lambda = {lambda}: enlarge domain or perturb lambda")]
    ResolventSingular { lambda: f64 },

    #[error("lambda = {lambda} is not inside a spectral gap")]
    NotInGap { lambda: f64 },

    #[error("density-of-states table does not cover [{needed_from}, {needed_to}]")]
    DosCoverage { needed_from: f64, needed_to: f64 },

    #[error("malformed table: {0}")]
    Table(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors produced by a threshold colliding with an eigenvalue.
    pub fn is_spectrum_hit(&self) -> bool {
        matches!(
            self,
            Error::ThresholdHitsSpectrum { .. } | Error::ResolventSingular { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
