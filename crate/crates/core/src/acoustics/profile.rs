use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::AcousticsError;

/// Sinusoidal perturbation of the mean flow rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wobble {
    /// Fraction of the mean rate.
    pub depth: f64,
    pub freq_hz: f64,
    pub phase: f64,
}

/// Volumetric flow into the target container as a function of time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowProfile {
    Constant { rate_ml_s: f64 },
    /// Raised-cosine onset and release around a wobbling mean rate.
    Smooth {
        mean_ml_s: f64,
        onset_s: f64,
        release_s: f64,
        wobble: Vec<Wobble>,
    },
    /// Linear interpolation between `(time s, rate ml/s)` knots, zero outside.
    Piecewise { knots: Vec<(f64, f64)> },
}

impl FlowProfile {
    /// Flow in ml/s at time `t` of a pour lasting `duration` seconds. Zero
    /// outside `[0, duration]`.
    pub fn rate(&self, t: f64, duration: f64) -> f64 {
        if !(0.0..=duration).contains(&t) {
            return 0.0;
        }
        match self {
            FlowProfile::Constant { rate_ml_s } => *rate_ml_s,
            FlowProfile::Smooth { mean_ml_s, onset_s, release_s, wobble } => {
                let mut env = 1.0;
                if *onset_s > 0.0 && t < *onset_s {
                    env *= 0.5 - 0.5 * (PI * t / onset_s).cos();
                }
                let until_end = duration - t;
                if *release_s > 0.0 && until_end < *release_s {
                    env *= 0.5 - 0.5 * (PI * until_end / release_s).cos();
                }
                let mut m = 1.0;
                for w in wobble {
                    m += w.depth * (2.0 * PI * w.freq_hz * t + w.phase).sin();
                }
                (mean_ml_s * env * m).max(0.0)
            }
            FlowProfile::Piecewise { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                let i = knots.partition_point(|k| k.0 <= t);
                if i == 0 || i == knots.len() {
                    return if i == knots.len() && knots[i - 1].0 == t { knots[i - 1].1 } else { 0.0 };
                }
                let (t0, q0) = knots[i - 1];
                let (t1, q1) = knots[i];
                q0 + (q1 - q0) * (t - t0) / (t1 - t0)
            }
        }
    }
}

/// One pour: flow over time, starting level and noise levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PourProfile {
    pub flow: FlowProfile,
    pub duration_s: f64,
    pub initial_liquid_height_mm: f64,
    /// Turbulence level relative to the resonance peak, in dB (negative).
    pub noise_floor_db: f64,
    /// Ratio of resonance power to white background noise, in dB.
    pub background_snr_db: f64,
}

impl PourProfile {
    pub const DEFAULT_SNR_DB: f64 = 20.0;
    pub const DEFAULT_NOISE_FLOOR_DB: f64 = -20.0;

    pub fn constant(rate_ml_s: f64, duration_s: f64, initial_liquid_height_mm: f64) -> Self {
        Self {
            flow: FlowProfile::Constant { rate_ml_s },
            duration_s,
            initial_liquid_height_mm,
            noise_floor_db: Self::DEFAULT_NOISE_FLOOR_DB,
            background_snr_db: Self::DEFAULT_SNR_DB,
        }
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.flow.rate(t, self.duration_s)
    }

    pub fn validate(&self) -> Result<(), AcousticsError> {
        if !(self.duration_s > 0.0 && self.duration_s.is_finite()) {
            return Err(AcousticsError::InvalidProfile("duration must be positive".into()));
        }
        if !(self.initial_liquid_height_mm >= 0.0) {
            return Err(AcousticsError::InvalidProfile("initial height must be non-negative".into()));
        }
        match &self.flow {
            FlowProfile::Constant { rate_ml_s } if !(*rate_ml_s >= 0.0) => {
                Err(AcousticsError::InvalidProfile("negative constant flow".into()))
            }
            FlowProfile::Smooth { mean_ml_s, wobble, .. } => {
                let depth: f64 = wobble.iter().map(|w| w.depth.abs()).sum();
                if !(*mean_ml_s >= 0.0) || depth >= 1.0 {
                    Err(AcousticsError::InvalidProfile("smooth flow may go negative".into()))
                } else {
                    Ok(())
                }
            }
            FlowProfile::Piecewise { knots } => {
                if knots.iter().any(|k| k.1 < 0.0) || knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    Err(AcousticsError::InvalidProfile("knots must be time-sorted and non-negative".into()))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_is_zero_outside_duration() {
        let p = PourProfile::constant(20.0, 5.0, 0.0);
        assert_eq!(p.rate(-0.1), 0.0);
        assert_eq!(p.rate(2.0), 20.0);
        assert_eq!(p.rate(5.01), 0.0);
    }

    #[test]
    fn smooth_envelope_starts_and_ends_at_zero() {
        let f = FlowProfile::Smooth {
            mean_ml_s: 30.0,
            onset_s: 0.3,
            release_s: 0.2,
            wobble: vec![Wobble { depth: 0.2, freq_hz: 0.7, phase: 0.1 }],
        };
        assert_eq!(f.rate(0.0, 6.0), 0.0);
        assert!(f.rate(6.0, 6.0).abs() < 1e-12);
        assert!(f.rate(3.0, 6.0) > 0.0);
    }

    #[test]
    fn piecewise_interpolates() {
        let f = FlowProfile::Piecewise { knots: vec![(0.0, 0.0), (1.0, 10.0), (2.0, 10.0)] };
        assert_eq!(f.rate(0.5, 3.0), 5.0);
        assert_eq!(f.rate(2.0, 3.0), 10.0);
        assert_eq!(f.rate(2.5, 3.0), 0.0);
    }

    #[test]
    fn validation() {
        let mut p = PourProfile::constant(-1.0, 5.0, 0.0);
        assert!(p.validate().is_err());
        p.flow = FlowProfile::Piecewise { knots: vec![(1.0, 1.0), (0.5, 1.0)] };
        assert!(p.validate().is_err());
        p.flow = FlowProfile::Constant { rate_ml_s: 3.0 };
        p.duration_s = 0.0;
        assert!(p.validate().is_err());
    }
}
