//! The height regressor: a recurrent (or feed-forward) encoder over
//! spectrogram slices followed by a two-layer MLP head.

mod cells;
pub mod checkpoint;
pub mod gradcheck;
mod network;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, read_checkpoint, write_checkpoint};
pub use gradcheck::{gradient_check, gradient_check_corrupted, small_config, GradCheckReport};
pub use network::{ForwardMode, SequencePrediction};
pub use params::{
    BatchNorm, Encoder, EncoderKind, Head, HiddenState, InputNorm, ModelConfig, ModelParams, Param,
};
