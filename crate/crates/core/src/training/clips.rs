//! Fixed-length training clips cut from whole pour recordings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::acoustics::PourTrace;
use crate::dsp::{Spectrogram, Stft, HOP, SAMPLE_RATE};
use crate::error::TrainError;

pub const CLIP_SECONDS: f64 = 4.0;
pub const CLIP_SAMPLES: usize = 4 * SAMPLE_RATE as usize;
/// Frames in one clip spectrogram (centred framing).
pub const CLIP_FRAMES: usize = CLIP_SAMPLES / HOP + 1;

/// One 4 s excerpt: raw magnitude spectrogram and per-frame air-column labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSample {
    pub spectrogram: Spectrogram<f32>,
    /// H_a in mm at each frame centre.
    pub labels: Vec<f32>,
    pub source_trace_id: String,
    /// Offset of the clip in the recording, seconds.
    pub clip_start: f64,
}

impl ClipSample {
    pub fn frames(&self) -> usize {
        self.labels.len()
    }
}

/// Uniform random start offsets (in samples) for `count` clips of
/// `clip_len` samples inside a recording of `len` samples.
pub fn clip_starts(len: usize, clip_len: usize, count: usize, seed: u64) -> Result<Vec<usize>, TrainError> {
    if len < clip_len {
        return Err(TrainError::RecordingTooShort {
            duration_s: len as f64 / SAMPLE_RATE as f64,
            clip_s: clip_len as f64 / SAMPLE_RATE as f64,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count).map(|_| rng.random_range(0..=len - clip_len)).collect())
}

/// Cuts `round(duration · count_per_second)` clips at uniformly random
/// offsets from a 16 kHz recording. Labels come from the trace at each
/// frame's centre time, `clip_start + j · hop`.
pub fn sample_clips(
    trace: &PourTrace,
    waveform: &[f64],
    trace_id: &str,
    count_per_second: f64,
    seed: u64,
) -> Result<Vec<ClipSample>, TrainError> {
    let sr = SAMPLE_RATE as f64;
    let duration = waveform.len() as f64 / sr;
    let count = (duration * count_per_second).round() as usize;
    let starts = clip_starts(waveform.len(), CLIP_SAMPLES, count, seed)?;
    let stft = Stft::<f32>::new();
    let hop_s = HOP as f64 / sr;
    starts
        .into_iter()
        .map(|s| {
            let audio: Vec<f32> = waveform[s..s + CLIP_SAMPLES].iter().map(|&v| v as f32).collect();
            let spectrogram = stft.spectrogram(&audio)?;
            let clip_start = s as f64 / sr;
            let labels =
                (0..spectrogram.frames()).map(|j| trace.air_column_at(clip_start + j as f64 * hop_s) as f32).collect();
            Ok(ClipSample { spectrogram, labels, source_trace_id: trace_id.to_string(), clip_start })
        })
        .collect()
}
