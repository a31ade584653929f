use num_complex::Complex;

use crate::error::DspError;
use crate::Scalar;

/// Precomputed twiddles and bit-reversal permutation for one power-of-two size.
#[derive(Debug, Clone)]
pub struct FftPlan<T> {
    n: usize,
    twiddles: Vec<Complex<T>>,
    bitrev: Vec<usize>,
}

impl<T: Scalar> FftPlan<T> {
    pub fn new(n: usize) -> Result<Self, DspError> {
        if n == 0 || !n.is_power_of_two() {
            return Err(DspError::NotPowerOfTwo(n));
        }
        // each twiddle evaluated directly in f64; no recurrence drift
        let twiddles = (0..n / 2)
            .map(|k| {
                let ang = -2.0 * std::f64::consts::PI * k as f64 / n as f64;
                Complex::new(T::of(ang.cos()), T::of(ang.sin()))
            })
            .collect();
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        Ok(Self { n, twiddles, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward transform, `X[k] = Σ x[n] e^{-2πikn/N}`.
    pub fn process(&self, buf: &mut [Complex<T>]) -> Result<(), DspError> {
        if buf.len() != self.n {
            return Err(DspError::NotPowerOfTwo(buf.len()));
        }
        for i in 0..self.n {
            let j = self.bitrev[i];
            if i < j {
                buf.swap(i, j);
            }
        }
        let mut len = 2;
        while len <= self.n {
            let half = len / 2;
            let stride = self.n / len;
            for start in (0..self.n).step_by(len) {
                for k in 0..half {
                    let w = self.twiddles[k * stride];
                    let a = buf[start + k];
                    let b = buf[start + k + half] * w;
                    buf[start + k] = a + b;
                    buf[start + k + half] = a - b;
                }
            }
            len <<= 1;
        }
        Ok(())
    }
}

/// One-shot radix-2 FFT. Length must be a power of two.
pub fn fft<T: Scalar>(input: &[Complex<T>]) -> Result<Vec<Complex<T>>, DspError> {
    let plan = FftPlan::new(input.len())?;
    let mut buf = input.to_vec();
    plan.process(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_gives_flat_spectrum() {
        let mut x = vec![Complex::new(0.0_f64, 0.0); 64];
        x[0] = Complex::new(1.0, 0.0);
        for v in fft(&x).unwrap() {
            assert!((v - Complex::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn rejects_non_power_of_two() {
        let x = vec![Complex::new(0.0_f64, 0.0); 12];
        assert_eq!(fft(&x).unwrap_err(), DspError::NotPowerOfTwo(12));
        assert!(FftPlan::<f32>::new(0).is_err());
    }

    #[test]
    fn length_one_and_two() {
        let y = fft(&[Complex::new(3.0_f64, -1.0)]).unwrap();
        assert_eq!(y, vec![Complex::new(3.0, -1.0)]);
        let y = fft(&[Complex::new(1.0_f64, 0.0), Complex::new(2.0, 0.0)]).unwrap();
        assert_eq!(y, vec![Complex::new(3.0, 0.0), Complex::new(-1.0, 0.0)]);
    }

    #[test]
    fn cosine_lands_in_its_bin() {
        let n = 32;
        let x: Vec<Complex<f64>> = (0..n)
            .map(|i| Complex::new((2.0 * std::f64::consts::PI * 5.0 * i as f64 / n as f64).cos(), 0.0))
            .collect();
        let y = fft(&x).unwrap();
        assert!((y[5].re - 16.0).abs() < 1e-12);
        assert!((y[27].re - 16.0).abs() < 1e-12);
        assert!(y[4].norm() < 1e-12);
    }
}
