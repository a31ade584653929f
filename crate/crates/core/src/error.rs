use thiserror::Error;

/// Errors raised by the acoustic simulator and calibration routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum AcousticsError {
    #[error("air column {air_column_mm} mm outside (0, {total_height_mm}] mm")]
    AirColumnOutOfRange { air_column_mm: f64, total_height_mm: f64 },
    #[error("invalid container `{name}`: {reason}")]
    InvalidContainer { name: String, reason: String },
    #[error("invalid pour profile: {0}")]
    InvalidProfile(String),
    #[error("container overflows at t = {time_s:.4} s (liquid {liquid_mm:.3} mm > {total_height_mm} mm)")]
    Overflow { time_s: f64, liquid_mm: f64, total_height_mm: f64 },
    #[error("sample rate {0} Hz below the 8000 Hz minimum")]
    SampleRateTooLow(u32),
    #[error("calibration needs at least 3 distinct weights, got {0}")]
    RankDeficient(usize),
    #[error("query time {query_s} s outside scale readings [{first_s}, {last_s}] s")]
    Extrapolation { query_s: f64, first_s: f64, last_s: f64 },
    #[error("scale readings invalid: {0}")]
    InvalidReadings(String),
}

/// Errors raised by the signal-processing front-end.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("FFT length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("sample rate must be positive (from {from} Hz, to {to} Hz)")]
    InvalidRate { from: u32, to: u32 },
    #[error("empty waveform")]
    EmptyInput,
    #[error("spectrogram data length {got} does not match {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, got: usize },
}

/// Errors raised by the network forward/backward passes.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("shape mismatch in {what}: expected {expected}, got {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("batch-norm layer `{0}` has no running statistics (never trained)")]
    UntrainedRunningStats(String),
    #[error("backward called without a cached forward pass")]
    NoForwardCache,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("no parameter tensor named `{0}`")]
    UnknownTensor(String),
}

/// Errors raised while building datasets and training.
#[derive(Debug, Error)]
pub enum TrainError {
    #[error("recording is {duration_s:.3} s, shorter than the {clip_s} s clip length")]
    RecordingTooShort { duration_s: f64, clip_s: f64 },
    #[error("length mismatch: {pred} predictions vs {truth} labels")]
    LengthMismatch { pred: usize, truth: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training split is empty after holding out validation traces")]
    EmptySplit,
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("{what}: {source}")]
    Format {
        what: String,
        #[source]
        source: FormatError,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
}

/// Errors raised by the evaluation protocol.
#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no errors to evaluate")]
    Empty,
    #[error("negative error value {0}")]
    NegativeError(f64),
    #[error("checkpoints `{a}` and `{b}` use different normalization constants")]
    NormalizationMismatch { a: String, b: String },
    #[error("unknown container `{0}`")]
    UnknownContainer(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Errors raised by the closed-loop controller.
#[derive(Debug, Error)]
pub enum ControlError {
    #[error("target {target_mm} mm outside (0, {total_height_mm}) mm")]
    InvalidTarget { target_mm: f64, total_height_mm: f64 },
    #[error("latency series is empty")]
    NoLatencies,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Acoustics(#[from] AcousticsError),
    #[error(transparent)]
    Dsp(#[from] DspError),
}

/// Errors raised by the binary/text file codecs.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { found: [u8; 4], expected: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u32),
    #[error("malformed file: {0}")]
    Malformed(String),
    #[error("wav: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
