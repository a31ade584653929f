use crate::model::InputNorm;
use crate::training::clips::ClipSample;
use crate::Scalar;

/// Global mean and standard deviation of every spectrogram value in `clips`.
pub fn fit_normalization(clips: &[&ClipSample]) -> InputNorm {
    let (mut n, mut sum) = (0usize, 0.0f64);
    for c in clips {
        n += c.spectrogram.as_slice().len();
        sum += c.spectrogram.as_slice().iter().map(|&v| v as f64).sum::<f64>();
    }
    if n == 0 {
        return InputNorm::default();
    }
    let mean = sum / n as f64;
    let ss: f64 = clips
        .iter()
        .map(|c| c.spectrogram.as_slice().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>())
        .sum();
    let std = (ss / n as f64).sqrt();
    InputNorm { mean, std: if std > 0.0 { std } else { 1.0 } }
}

/// Frame-major normalized copy of a spectrogram buffer.
pub fn normalize<T: Scalar>(values: &[f32], norm: &InputNorm) -> Vec<T> {
    let (m, s) = (T::of(norm.mean), T::of(norm.std));
    values.iter().map(|&v| (T::of(v as f64) - m) / s).collect()
}
