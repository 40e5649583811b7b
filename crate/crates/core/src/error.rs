use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate quad: {0}")]
    DegenerateQuad(String),

    #[error("point maps to infinity (|w| = {0:e})")]
    PointAtInfinity(f64),

    #[error("non-positive length: {0}")]
    NonPositiveLength(String),

    #[error("pixel ({u}, {v}) lies outside every calibrated sub-area of camera `{camera}`")]
    OutsideCalibratedArea { camera: String, u: f64, v: f64 },

    #[error("format error at {location}: {message}")]
    Format { location: String, message: String },

    #[error("unsupported format_version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("csv error at row {row}, column `{column}`: {reason}")]
    Csv {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("invalid depth observation: {0}")]
    InvalidObservation(String),

    #[error("z disagreement {disagreement_mm:.3} mm exceeds threshold {threshold_mm:.3} mm")]
    ZDisagreementExceeded {
        disagreement_mm: f64,
        threshold_mm: f64,
    },

    #[error("camera pair ({0}, {1}) is not an adjacent side pair")]
    NotAdjacent(String, String),

    #[error("segment `{0}` contains no track points")]
    EmptySegment(String),

    #[error("no segments to aggregate")]
    NoSegments,

    #[error("no side-camera detections; plot rate undefined")]
    NoDetections,

    #[error("metric undefined: {0} denominator is zero")]
    UndefinedMetric(&'static str),

    #[error("average precision needs at least one ground-truth box")]
    NoGroundTruth,

    #[error("point is behind camera `{0}`")]
    BehindCamera(String),

    #[error("config error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("track is empty")]
    EmptyTrack,

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            location: location.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by bad input rather than a bug or I/O failure.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_))
    }
}
