//! Scale-based ground truth: weight readings at 1 Hz are linearly
//! interpolated and mapped to liquid height through a per-container quadratic.

use serde::{Deserialize, Serialize};

use crate::acoustics::trace::PourTrace;
use crate::error::AcousticsError;
use crate::Scalar;

/// `height = a·w² + b·w + c` with `w` in grams and height in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoly<T> {
    pub coefficients: [T; 3],
    pub container: String,
    /// Euclidean norm of the fit residual over the calibration pairs.
    pub residual_norm: T,
}

impl<T: Scalar> CalibrationPoly<T> {
    pub fn eval(&self, weight_g: T) -> T {
        let [a, b, c] = self.coefficients;
        (a * weight_g + b) * weight_g + c
    }
}

/// Least-squares quadratic through `(weight g, height mm)` pairs, solved by
/// Householder QR on the column-scaled Vandermonde matrix.
pub fn fit_weight_to_height<T: Scalar>(
    container: &str,
    pairs: &[(T, T)],
) -> Result<CalibrationPoly<T>, AcousticsError> {
    let mut distinct: Vec<T> = pairs.iter().map(|p| p.0).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(AcousticsError::RankDeficient(distinct.len()));
    }
    let m = pairs.len();
    // columns: w², w, 1 (scaled to unit max so QR stays well conditioned)
    let wmax = pairs.iter().map(|p| p.0.abs()).fold(T::zero(), T::max).max(T::one());
    let mut a: Vec<[T; 3]> = pairs
        .iter()
        .map(|&(w, _)| {
            let s = w / wmax;
            [s * s, s, T::one()]
        })
        .collect();
    let mut y: Vec<T> = pairs.iter().map(|p| p.1).collect();

    for k in 0..3 {
        let norm = (k..m).map(|i| a[i][k] * a[i][k]).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(AcousticsError::RankDeficient(distinct.len()));
        }
        let alpha = if a[k][k] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = (k..m).map(|i| a[i][k]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|x| *x * *x).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        for j in k..3 {
            let proj: T = (k..m).map(|i| v[i - k] * a[i][j]).sum::<T>() * T::of(2.0) / vnorm2;
            for i in k..m {
                a[i][j] -= proj * v[i - k];
            }
        }
        let proj: T = (k..m).map(|i| v[i - k] * y[i]).sum::<T>() * T::of(2.0) / vnorm2;
        for i in k..m {
            y[i] -= proj * v[i - k];
        }
    }
    // back substitution on the 3x3 upper triangle
    let mut x = [T::zero(); 3];
    for k in (0..3).rev() {
        let mut s = y[k];
        for j in k + 1..3 {
            s -= a[k][j] * x[j];
        }
        x[k] = s / a[k][k];
    }
    let residual_norm = y[3..].iter().map(|r| *r * *r).sum::<T>().sqrt();
    Ok(CalibrationPoly {
        coefficients: [x[0] / (wmax * wmax), x[1] / wmax, x[2]],
        container: container.to_string(),
        residual_norm,
    })
}

/// Piecewise-linear interpolation of `(time s, weight g)` scale readings.
/// Queries outside the reading span are rejected.
pub fn interpolate_scale<T: Scalar>(readings: &[(T, T)], query_times: &[T]) -> Result<Vec<T>, AcousticsError> {
    if readings.len() < 2 {
        return Err(AcousticsError::InvalidReadings("need at least two readings".into()));
    }
    if readings.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(AcousticsError::InvalidReadings("timestamps must be strictly increasing".into()));
    }
    let (first, last) = (readings[0].0, readings[readings.len() - 1].0);
    query_times
        .iter()
        .map(|&q| {
            if !(q >= first && q <= last) {
                return Err(AcousticsError::Extrapolation { query_s: q.f64(), first_s: first.f64(), last_s: last.f64() });
            }
            let i = readings.partition_point(|r| r.0 <= q);
            if i == readings.len() {
                return Ok(readings[i - 1].1);
            }
            let (t0, w0) = readings[i - 1];
            let (t1, w1) = readings[i];
            Ok(w0 + (w1 - w0) * (q - t0) / (t1 - t0))
        })
        .collect()
}

/// What a scale with the given reading rate would have reported during a pour.
pub fn scale_readings(trace: &PourTrace, rate_hz: f64) -> Vec<(f64, f64)> {
    let t0 = trace.timestamps.first().copied().unwrap_or(0.0);
    let span = trace.duration();
    let n = (span * rate_hz).floor() as usize;
    (0..=n)
        .map(|k| {
            let t = t0 + k as f64 / rate_hz;
            let i = (((t - t0) * trace.sample_rate).round() as usize).min(trace.len() - 1);
            (t, trace.weight[i])
        })
        .collect()
}

/// Full scale pipeline: interpolate readings at `query_times` and convert the
/// weights to liquid heights.
pub fn heights_from_scale<T: Scalar>(
    readings: &[(T, T)],
    query_times: &[T],
    poly: &CalibrationPoly<T>,
) -> Result<Vec<T>, AcousticsError> {
    Ok(interpolate_scale(readings, query_times)?.into_iter().map(|w| poly.eval(w)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_data_gives_degenerate_quadratic() {
        let pairs: Vec<(f64, f64)> = (0..15).map(|i| (i as f64 * 20.0, i as f64 * 10.0)).collect();
        let p = fit_weight_to_height("lin", &pairs).unwrap();
        assert!(p.coefficients[0].abs() < 1e-12);
        assert!((p.coefficients[1] - 0.5).abs() < 1e-12);
        assert!(p.coefficients[2].abs() < 1e-9);
        assert!(p.residual_norm < 1e-9);
    }

    #[test]
    fn recovers_exact_quadratic() {
        let pairs: Vec<(f64, f64)> = (0..15)
            .map(|i| {
                let w = 10.0 + 25.0 * i as f64;
                (w, 0.001 * w * w + 0.2 * w + 1.0)
            })
            .collect();
        let p = fit_weight_to_height("q", &pairs).unwrap();
        assert!((p.coefficients[0] - 0.001).abs() < 1e-9);
        assert!((p.coefficients[1] - 0.2).abs() < 1e-9);
        assert!((p.coefficients[2] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rank_errors() {
        let pairs = [(1.0, 2.0), (1.0, 3.0), (2.0, 4.0), (2.0, 5.0)];
        assert_eq!(fit_weight_to_height("r", &pairs), Err(AcousticsError::RankDeficient(2)));
    }

    #[test]
    fn interpolation_examples() {
        let r = [(0.0, 0.0), (1.0, 10.0), (2.0, 30.0)];
        let out = interpolate_scale(&r, &[0.25, 1.0, 2.0, 1.5]).unwrap();
        assert_eq!(out, vec![2.5, 10.0, 30.0, 20.0]);
        assert!(matches!(interpolate_scale(&r, &[2.5]), Err(AcousticsError::Extrapolation { .. })));
        assert!(matches!(interpolate_scale(&r, &[-0.1]), Err(AcousticsError::Extrapolation { .. })));
        assert!(interpolate_scale(&r[..1], &[0.0]).is_err());
        assert!(interpolate_scale(&[(1.0, 0.0), (1.0, 2.0)], &[1.0]).is_err());
    }

    #[test]
    fn dense_queries_lie_on_the_chord() {
        let r = [(3.0_f64, 40.0), (4.0, 52.5)];
        let slope = 12.5;
        for k in 0..=100 {
            let t = 3.0 + k as f64 / 100.0;
            let w = interpolate_scale(&r, &[t]).unwrap()[0];
            assert!((w - (40.0 + slope * (t - 3.0))).abs() < 1e-12);
        }
    }
}
