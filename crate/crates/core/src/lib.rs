//! Audio-based liquid-height perception for robotic pouring.
//!
//! The crate synthesizes pouring audio from an air-column resonance model,
//! turns it into 257-bin spectrogram sequences, trains a recurrent regressor
//! (LSTM, GRU or a feed-forward baseline) for the air-column length, and
//! closes the loop with a controller that stops the pour at a target.
//!
//! Numeric code is generic over [`Scalar`]; the aliases below fix the
//! precision used by the pipeline (`f32`) and by oracles (`f64`).

pub mod acoustics;
pub mod control;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod model;
pub mod training;
pub mod wav;
mod scalar;

pub use scalar::Scalar;

pub type Spectrogram32 = dsp::Spectrogram<f32>;
pub type Spectrogram64 = dsp::Spectrogram<f64>;
pub type CalibrationPoly64 = acoustics::CalibrationPoly<f64>;
pub type Model32 = model::ModelParams<f32>;
pub type Model64 = model::ModelParams<f64>;
