use crate::error::DspError;
use crate::Scalar;

/// Kernel half-width measured in periods of the lower of the two rates.
const HALF_TAPS: f64 = 16.0;
const KAISER_BETA: f64 = 6.0;
/// Above this many phases the kernel is evaluated per output sample.
const MAX_TABLE_PHASES: u64 = 8192;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    reach: i64,
    i0_beta: f64,
}

impl Kernel {
    fn new(from: u32, to: u32) -> Self {
        let cutoff = (to as f64 / from as f64).min(1.0);
        let half_width = HALF_TAPS / cutoff;
        Self { cutoff, half_width, reach: half_width.ceil() as i64, i0_beta: bessel_i0(KAISER_BETA) }
    }

    /// Low-pass impulse response at offset `tau` input samples.
    fn at(&self, tau: f64) -> f64 {
        let u = tau / self.half_width;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        let arg = std::f64::consts::PI * self.cutoff * tau;
        let sinc = if arg == 0.0 { 1.0 } else { arg.sin() / arg };
        let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / self.i0_beta;
        self.cutoff * sinc * window
    }

    /// Taps for input indices `i0 + j`, `j ∈ [1-reach, reach]`, at fractional
    /// position `frac`, normalized to unit DC gain.
    fn taps(&self, frac: f64) -> Vec<f64> {
        let mut w: Vec<f64> = (1 - self.reach..=self.reach).map(|j| self.at(frac - j as f64)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        w
    }
}

/// Band-limited resampling with a Kaiser-windowed sinc whose cutoff sits at
/// half the lower of the two rates. Output length is
/// `round(len · to / from)`. Samples outside the input count as zero.
pub fn resample<T: Scalar>(waveform: &[T], from_rate: u32, to_rate: u32) -> Result<Vec<T>, DspError> {
    if from_rate == 0 || to_rate == 0 {
        return Err(DspError::InvalidRate { from: from_rate, to: to_rate });
    }
    if from_rate == to_rate || waveform.is_empty() {
        return Ok(waveform.to_vec());
    }
    let g = gcd(from_rate as u64, to_rate as u64);
    let (up, down) = (to_rate as u64 / g, from_rate as u64 / g);
    let n = waveform.len() as u64;
    let out_len = ((2 * n * to_rate as u64 + from_rate as u64) / (2 * from_rate as u64)) as usize;
    let kernel = Kernel::new(from_rate, to_rate);
    let table: Option<Vec<Vec<T>>> = (up <= MAX_TABLE_PHASES).then(|| {
        (0..up)
            .map(|p| kernel.taps(p as f64 / up as f64).into_iter().map(T::of).collect())
            .collect()
    });
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len as u64 {
        let pos = m * down;
        let i0 = (pos / up) as i64;
        let phase = pos % up;
        let owned: Vec<T>;
        let taps: &[T] = match &table {
            Some(t) => &t[phase as usize],
            None => {
                owned = kernel.taps(phase as f64 / up as f64).into_iter().map(T::of).collect();
                &owned
            }
        };
        let start = i0 + 1 - kernel.reach;
        let mut acc = T::zero();
        for (j, &w) in taps.iter().enumerate() {
            let k = start + j as i64;
            if k >= 0 && (k as u64) < n {
                acc += w * waveform[k as usize];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_rates_match() {
        let x = vec![0.1_f64, -0.4, 0.9];
        assert_eq!(resample(&x, 16_000, 16_000).unwrap(), x);
    }

    #[test]
    fn empty_input_is_empty_output() {
        assert!(resample::<f64>(&[], 44_100, 16_000).unwrap().is_empty());
    }

    #[test]
    fn zero_rate_is_an_error() {
        assert!(resample(&[1.0_f64], 0, 16_000).is_err());
    }

    #[test]
    fn output_length_rounds() {
        let x = vec![0.0_f32; 44_100];
        assert_eq!(resample(&x, 44_100, 16_000).unwrap().len(), 16_000);
        let x = vec![0.0_f32; 1000];
        // 1000 * 16000 / 44100 = 362.8
        assert_eq!(resample(&x, 44_100, 16_000).unwrap().len(), 363);
        assert_eq!(resample(&x, 16_000, 44_100).unwrap().len(), 2756);
    }

    #[test]
    fn dc_is_preserved_in_the_interior() {
        let x = vec![1.0_f64; 4000];
        let y = resample(&x, 44_100, 16_000).unwrap();
        for v in &y[100..y.len() - 100] {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let y = resample(&x, 16_000, 22_050).unwrap();
        for v in &y[100..y.len() - 100] {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }
}
