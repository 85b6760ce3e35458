//! Shared error type for the extraction pipeline.

use crate::fold::TrajectorySet;

/// Errors raised by the library. Variant names follow the failure they
/// describe; callers that can recover (e.g. batch extraction) match on them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("file not found: {0}")]
    MissingFile(String),

    #[error("unsupported WAV encoding: {0}")]
    UnsupportedEncoding(String),

    #[error("corrupt WAV header: {0}")]
    CorruptHeader(String),

    #[error("autocorrelation lag {lag} exceeds frame length {len}")]
    LagTooLarge { lag: usize, len: usize },

    #[error("singular autocorrelation: prediction error vanished at order {order}")]
    SingularAutocorrelation { order: usize },

    #[error("frame too short: {len} samples, need at least {min}")]
    FrameTooShort { len: usize, min: usize },

    #[error("hop {hop} exceeds window length {window_len}")]
    BadWindow { hop: usize, window_len: usize },

    #[error("insufficient voicing: {voiced} of {total} frames voiced")]
    InsufficientVoicing { voiced: usize, total: usize },

    #[error("numerical overflow at integration step {step}")]
    NumericalOverflow {
        step: usize,
        partial: Box<TrajectorySet>,
    },

    #[error("degenerate glottal flow: folds never open")]
    DegenerateFlow,

    #[error("target has no detectable fundamental frequency")]
    UnvoicedTarget,

    #[error("no full cycle detected in trajectory tail")]
    NoCycleDetected,

    #[error("flow signal cannot be normalized (all zero)")]
    NonNormalizable,

    #[error("training data contains a single class")]
    SingleClassData,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("recording yields no analysis frames")]
    NoFrames,

    #[error("unstable vocal tract: {0}")]
    UnstableTract(String),

    #[error("sample out of range for WAV encoding: {value} at index {index}")]
    ClippedSamples { index: usize, value: f64 },

    #[error("invalid table: {0}")]
    InvalidTable(String),

    #[error("invalid model file: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
