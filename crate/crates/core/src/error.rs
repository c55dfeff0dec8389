use thiserror::Error;

/// Errors raised by every layer of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("visibility {0} outside [0, 1]")]
    VisibilityOutOfRange(f64),

    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("correlation value for {pair} is negative ({value})")]
    NegativeCorrelation { pair: String, value: f64 },

    #[error("correlation set is missing the {0} entry")]
    MissingPair(String),

    #[error("exact amplitude overflows beyond m = {limit} (requested m = {m}); use the normalized form")]
    AmplitudeOverflow { m: usize, limit: usize },

    #[error("Fock space under-truncated: {detail} (try dim >= {suggested_dim})")]
    UnderTruncated { detail: String, suggested_dim: usize },

    #[error("projection has zero probability (trace {0:e})")]
    ZeroProbability(f64),

    #[error("mode occupation too small for a cross-correlation coefficient ({0:e})")]
    VanishingOccupation(f64),

    #[error("first moment {0:e} does not vanish")]
    NonzeroFirstMoment(f64),

    #[error("permanent of a {size}x{size} matrix exceeds the size guard of {limit}")]
    PermanentTooLarge { size: usize, limit: usize },

    #[error("fringe under-resolved: period spans {pixels:.2} pixels, need at least {min}")]
    UnderSampled { pixels: f64, min: f64 },

    #[error("pixel ({x}, {y}) lies outside a {width}x{height} frame")]
    PixelOutOfFrame { x: usize, y: usize, width: usize, height: usize },

    #[error("pixel ({x}, {y}) is used on both sides of the correlation")]
    PixelCollision { x: usize, y: usize },

    #[error("need at least {needed} frames, got {got}")]
    InsufficientFrames { needed: usize, got: usize },

    #[error("visibility fit failed: {0}")]
    FitFailed(String),

    #[error("malformed frame file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// Whether the error comes from a numeric guard (truncation, sampling,
    /// size limits) rather than from bad input or I/O.
    pub fn is_numeric_guard(&self) -> bool {
        matches!(
            self,
            Error::UnderTruncated { .. }
                | Error::UnderSampled { .. }
                | Error::AmplitudeOverflow { .. }
                | Error::PermanentTooLarge { .. }
                | Error::ZeroProbability(_)
                | Error::VanishingOccupation(_)
                | Error::NonzeroFirstMoment(_)
                | Error::FitFailed(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_) | Error::Format(_) | Error::Csv(_))
    }
}
