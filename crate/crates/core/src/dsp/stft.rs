use std::io::{Read, Write};

use num_complex::Complex;

use crate::dsp::fft::FftPlan;
use crate::error::{DspError, FormatError};
use crate::Scalar;

pub const SAMPLE_RATE: u32 = 16_000;
pub const FFT_SIZE: usize = 512;
pub const HOP: usize = 256;
pub const BINS: usize = FFT_SIZE / 2 + 1;

const MAGIC: [u8; 4] = *b"PSPG";
const VERSION: u32 = 1;

/// Magnitude spectrogram, `bins` rows by `frames` columns. Stored frame-major
/// so a time slice is one contiguous `bins`-vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<T> {
    bins: usize,
    frames: usize,
    data: Vec<T>,
    pub sample_rate: u32,
    pub hop: usize,
    pub window: usize,
}

impl<T: Scalar> Spectrogram<T> {
    /// Builds from frame-major data (`data[frame * bins + bin]`).
    pub fn from_frames(bins: usize, frames: usize, data: Vec<T>) -> Result<Self, DspError> {
        if data.len() != bins * frames {
            return Err(DspError::ShapeMismatch { rows: bins, cols: frames, got: data.len() });
        }
        Ok(Self { bins, frames, data, sample_rate: SAMPLE_RATE, hop: HOP, window: FFT_SIZE })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.bins, self.frames)
    }

    pub fn frame(&self, j: usize) -> &[T] {
        &self.data[j * self.bins..(j + 1) * self.bins]
    }

    pub fn get(&self, bin: usize, frame: usize) -> T {
        self.data[frame * self.bins + bin]
    }

    /// Frame-major samples.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn hop_seconds(&self) -> f64 {
        self.hop as f64 / self.sample_rate as f64
    }

    pub fn window_seconds(&self) -> f64 {
        self.window as f64 / self.sample_rate as f64
    }

    /// Centre time of frame `j` relative to the first audio sample.
    pub fn frame_time(&self, j: usize) -> f64 {
        j as f64 * self.hop_seconds()
    }

    /// Row index of the largest magnitude in frame `j`.
    pub fn peak_bin(&self, j: usize) -> usize {
        let f = self.frame(j);
        let mut best = 0;
        for (k, v) in f.iter().enumerate() {
            if *v > f[best] {
                best = k;
            }
        }
        best
    }

    pub fn bin_hz(&self, bin: usize) -> f64 {
        bin as f64 * self.sample_rate as f64 / self.window as f64
    }

    pub fn cast<U: Scalar>(&self) -> Spectrogram<U> {
        Spectrogram {
            bins: self.bins,
            frames: self.frames,
            data: self.data.iter().map(|v| U::of(v.f64())).collect(),
            sample_rate: self.sample_rate,
            hop: self.hop,
            window: self.window,
        }
    }

    /// Binary cache format: magic, version, rows, cols, sample rate, hop
    /// (samples), then row-major little-endian f32 with rows = bins.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), FormatError> {
        w.write_all(&MAGIC)?;
        for v in [VERSION, self.bins as u32, self.frames as u32, self.sample_rate, self.hop as u32] {
            w.write_all(&v.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.data.len() * 4);
        for bin in 0..self.bins {
            for frame in 0..self.frames {
                buf.extend_from_slice(&(self.get(bin, frame).f64() as f32).to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, FormatError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if magic != MAGIC {
            return Err(FormatError::BadMagic { found: magic, expected: MAGIC });
        }
        let mut word = || -> Result<u32, FormatError> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)?;
            Ok(u32::from_le_bytes(b))
        };
        let version = word()?;
        if version != VERSION {
            return Err(FormatError::Version(version));
        }
        let (rows, cols, sample_rate, hop) = (word()? as usize, word()? as usize, word()?, word()? as usize);
        let mut raw = vec![0u8; rows * cols * 4];
        r.read_exact(&mut raw)?;
        let mut data = vec![T::zero(); rows * cols];
        for (i, chunk) in raw.chunks_exact(4).enumerate() {
            let (bin, frame) = (i / cols, i % cols);
            data[frame * rows + bin] = T::of(f32::from_le_bytes(chunk.try_into().unwrap()) as f64);
        }
        Ok(Self { bins: rows, frames: cols, data, sample_rate, hop, window: FFT_SIZE })
    }
}

/// Reusable STFT front-end: 512-sample periodic Hann window, hop 256,
/// 256 samples of reflect padding on each side.
#[derive(Debug, Clone)]
pub struct Stft<T> {
    plan: FftPlan<T>,
    window: Vec<T>,
}

impl<T: Scalar> Default for Stft<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Stft<T> {
    pub fn new() -> Self {
        let window = (0..FFT_SIZE)
            .map(|i| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / FFT_SIZE as f64).cos()))
            .collect();
        Self { plan: FftPlan::new(FFT_SIZE).expect("512 is a power of two"), window }
    }

    /// Number of frames for `len` samples: `floor(len / hop) + 1`.
    pub fn frame_count(len: usize) -> usize {
        len / HOP + 1
    }

    pub fn spectrogram(&self, waveform: &[T]) -> Result<Spectrogram<T>, DspError> {
        if waveform.is_empty() {
            return Err(DspError::EmptyInput);
        }
        let frames = Self::frame_count(waveform.len());
        let mut data = vec![T::zero(); frames * BINS];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); FFT_SIZE];
        let pad = (FFT_SIZE / 2) as i64;
        for j in 0..frames {
            let start = (j * HOP) as i64 - pad;
            for (i, slot) in buf.iter_mut().enumerate() {
                let x = waveform[reflect(start + i as i64, waveform.len())];
                *slot = Complex::new(x * self.window[i], T::zero());
            }
            self.plan.process(&mut buf)?;
            for (out, c) in data[j * BINS..(j + 1) * BINS].iter_mut().zip(&buf) {
                *out = c.norm();
            }
        }
        Spectrogram::from_frames(BINS, frames, data)
    }
}

/// Index into a signal mirrored about its first and last samples (no edge
/// repeat), bouncing as often as needed.
fn reflect(i: i64, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < len as i64 { m } else { period - m }) as usize
}

/// Spectrogram of a 16 kHz waveform with the front-end's fixed parameters.
pub fn stft_spectrogram<T: Scalar>(waveform: &[T]) -> Result<Spectrogram<T>, DspError> {
    Stft::new().spectrogram(waveform)
}
