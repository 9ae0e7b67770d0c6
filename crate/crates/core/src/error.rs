use thiserror::Error;

/// Errors produced by the modem, channel, detector and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spreading factor {0} is outside the supported range 7..=12")]
    InvalidSpreadingFactor(u32),

    #[error("bandwidth must be positive and finite, got {0} Hz")]
    InvalidBandwidth(f64),

    #[error("symbol index {index} out of range for an alphabet of {m} chirps")]
    SymbolOutOfRange { index: usize, m: usize },

    #[error("expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("channel has {taps} taps but the alphabet only has {m} bins")]
    TooManyTaps { taps: usize, m: usize },

    #[error("invalid path table: {0}")]
    InvalidPathTable(String),

    #[error("invalid channel profile: {0}")]
    InvalidProfile(String),

    #[error("invalid channel statistics: {0}")]
    InvalidStatistics(String),

    #[error("no preamble spectra supplied")]
    EmptyPreamble,

    #[error("averaged preamble spectrum is identically zero")]
    ZeroReference,

    #[error("need at least {needed} observations, have {have}")]
    InsufficientObservations { needed: u64, have: u64 },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("unknown detector `{0}`")]
    UnknownDetector(String),

    #[error("unknown channel profile `{0}`")]
    UnknownProfile(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
