//! Mono 16-bit PCM WAV input and output.

use std::path::Path;

use crate::error::FormatError;

/// Writes samples in [-1, 1] (clipped) as 16-bit mono PCM.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<(), FormatError> {
    let spec = hound::WavSpec { channels: 1, sample_rate, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(path, spec)?;
    for &s in samples {
        w.write_sample((s.clamp(-1.0, 1.0) * i16::MAX as f64).round() as i16)?;
    }
    w.finalize()?;
    Ok(())
}

/// Reads a WAV file, averaging channels, scaled to [-1, 1]. Returns the
/// samples and the sample rate.
pub fn read_wav(path: &Path) -> Result<(Vec<f64>, u32), FormatError> {
    let mut r = hound::WavReader::open(path)?;
    let spec = r.spec();
    let channels = spec.channels.max(1) as usize;
    let raw: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let full = ((1i64 << (spec.bits_per_sample - 1)) - 1) as f64;
            r.samples::<i32>().map(|s| s.map(|v| v as f64 / full)).collect::<Result<_, _>>()?
        }
        hound::SampleFormat::Float => r.samples::<f32>().map(|s| s.map(|v| v as f64)).collect::<Result<_, _>>()?,
    };
    let mono = raw.chunks(channels).map(|c| c.iter().sum::<f64>() / channels as f64).collect();
    Ok((mono, spec.sample_rate))
}
