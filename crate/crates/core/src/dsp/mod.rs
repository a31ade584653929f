//! Audio front-end: resampling to 16 kHz and 257-bin STFT magnitudes.

mod fft;
mod resample;
mod stft;

pub use fft::{fft, FftPlan};
pub use resample::resample;
pub use stft::{stft_spectrogram, Spectrogram, Stft, BINS, FFT_SIZE, HOP, SAMPLE_RATE};
