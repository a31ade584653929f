//! Closed-loop pouring in simulation: the controller listens to a sliding
//! audio window, estimates the air column and stops the flow at a target.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acoustics::{ContainerSpec, PourProfile, PourSimulator};
use crate::dsp::{Spectrogram, Stft, HOP, SAMPLE_RATE};
use crate::error::ControlError;
use crate::model::ModelParams;
use crate::training::{normalize, random_profile, ProfileRanges, CLIP_SAMPLES};

/// Wall-clock cost of one estimate, split by stage.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub spectrogram_ms: f64,
    pub model_ms: f64,
}

/// Anything that turns the most recent audio into an air-column estimate.
/// Only the audio window and the current simulated time are passed in, so an
/// estimator cannot peek at the simulator state.
pub trait HeightEstimator {
    /// `window` holds exactly one clip of 16 kHz audio ending at `time_s`.
    fn estimate(&mut self, window: &[f64], time_s: f64) -> Result<(f64, StageTimes), ControlError>;
}

/// The trained network on a sliding 4 s window. Recurrent state is not
/// carried between windows.
///
/// The estimate is read from the newest frame whose analysis window lies
/// entirely inside the buffer (the second to last). The very last frame is
/// centred on the buffer edge, half of it is reflect padding, and it is
/// markedly less accurate.
pub struct ModelEstimator<'a> {
    model: &'a ModelParams<f32>,
    stft: Stft<f32>,
    audio: Vec<f32>,
}

impl<'a> ModelEstimator<'a> {
    pub fn new(model: &'a ModelParams<f32>) -> Result<Self, ControlError> {
        model.check_inference_ready()?;
        Ok(Self { model, stft: Stft::new(), audio: Vec::with_capacity(CLIP_SAMPLES) })
    }
}

impl HeightEstimator for ModelEstimator<'_> {
    fn estimate(&mut self, window: &[f64], _time_s: f64) -> Result<(f64, StageTimes), ControlError> {
        let t0 = Instant::now();
        self.audio.clear();
        self.audio.extend(window.iter().map(|&v| v as f32));
        let raw = self.stft.spectrogram(&self.audio)?;
        let x: Vec<f32> = normalize(raw.as_slice(), &self.model.input_norm);
        let spec = Spectrogram::from_frames(raw.bins(), raw.frames(), x)?;
        let t1 = Instant::now();
        let pred = self.model.predict(&spec)?;
        let t2 = Instant::now();
        let last = pred[pred.len().saturating_sub(2)] as f64;
        Ok((
            last,
            StageTimes {
                spectrogram_ms: (t1 - t0).as_secs_f64() * 1e3,
                model_ms: (t2 - t1).as_secs_f64() * 1e3,
            },
        ))
    }
}

/// Bypasses the network: reports the exact air column of an uninterrupted
/// pour, integrated from the flow profile on its own fine grid.
pub struct OracleEstimator {
    container: ContainerSpec,
    profile: PourProfile,
    step_s: f64,
    t: f64,
    volume_ml: f64,
}

impl OracleEstimator {
    pub fn new(container: &ContainerSpec, profile: &PourProfile) -> Self {
        Self { container: container.clone(), profile: profile.clone(), step_s: 1e-4, t: 0.0, volume_ml: 0.0 }
    }
}

impl HeightEstimator for OracleEstimator {
    fn estimate(&mut self, _window: &[f64], time_s: f64) -> Result<(f64, StageTimes), ControlError> {
        while self.t < time_s {
            let dt = self.step_s.min(time_s - self.t);
            let q = 0.5 * (self.profile.rate(self.t) + self.profile.rate(self.t + dt));
            self.volume_ml += q * dt;
            self.t += dt;
        }
        let liquid = self.profile.initial_liquid_height_mm + self.volume_ml * 1000.0 / self.container.area_mm2();
        Ok((self.container.total_height_mm - liquid, StageTimes::default()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Simulated time between the stop decision and the flow actually
    /// stopping.
    pub actuator_delay_s: f64,
    /// No decisions before this much audio has been heard.
    pub warmup_s: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        Self { actuator_delay_s: 0.1, warmup_s: 1.0 }
    }
}

/// Everything recorded about one closed-loop pour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PourEpisodeResult {
    pub container: String,
    pub seed: u64,
    pub target_air_column_mm: f64,
    /// Ground truth once the flow has stopped (or at the end of the episode).
    pub achieved_air_column_mm: f64,
    /// Simulated time of the stop decision.
    pub decision_time_s: Option<f64>,
    /// Simulated time at which the flow stopped.
    pub stop_time_s: f64,
    pub episode_duration_s: f64,
    /// `target - achieved`; positive means filled past the target.
    pub overshoot_mm: f64,
    /// No decision before the profile ended, or the container overflowed.
    pub timeout: bool,
    pub overflow: bool,
    /// Last-frame estimate at every hop, mm.
    pub per_frame_predictions: Vec<f64>,
    /// Wall-clock time of each loop iteration, ms.
    pub loop_latencies_ms: Vec<f64>,
    pub spectrogram_latencies_ms: Vec<f64>,
    pub model_latencies_ms: Vec<f64>,
}

/// Runs one pour, stopping the flow when the estimate first reaches
/// `target_mm`. The simulator runs at 16 kHz so the window can be fed to the
/// estimator without resampling.
pub fn run_closed_loop(
    estimator: &mut dyn HeightEstimator,
    container: &ContainerSpec,
    profile: &PourProfile,
    target_mm: f64,
    seed: u64,
    config: &ControlConfig,
) -> Result<PourEpisodeResult, ControlError> {
    if !(target_mm > 0.0 && target_mm < container.total_height_mm) {
        return Err(ControlError::InvalidTarget { target_mm, total_height_mm: container.total_height_mm });
    }
    let mut sim = PourSimulator::new(container, profile, SAMPLE_RATE, seed)?;
    let total = sim.total_samples();
    let sr = SAMPLE_RATE as f64;
    let mut buffer = vec![0.0f64; CLIP_SAMPLES];
    let mut fresh = Vec::with_capacity(HOP);
    let mut heard = 0usize;
    let mut air = container.total_height_mm - profile.initial_liquid_height_mm;
    let mut decision = None;
    let mut overflow = false;
    let mut predictions = Vec::new();
    let (mut loop_ms, mut spec_ms, mut model_ms) = (Vec::new(), Vec::new(), Vec::new());

    'outer: while heard < total {
        let n = HOP.min(total - heard);
        fresh.clear();
        for _ in 0..n {
            match sim.next_sample() {
                Ok((s, truth)) => {
                    fresh.push(s);
                    air = truth.air_column_mm;
                }
                Err(crate::error::AcousticsError::Overflow { .. }) => {
                    overflow = true;
                    air = 0.0;
                    break 'outer;
                }
                Err(e) => return Err(e.into()),
            }
        }
        heard += n;
        let now = heard as f64 / sr;
        if let Some(d) = decision {
            buffer.drain(..n);
            buffer.extend_from_slice(&fresh);
            if now >= d + config.actuator_delay_s {
                break;
            }
            continue;
        }
        // the loop timer covers buffering and estimation, not the simulator
        let loop_start = Instant::now();
        buffer.drain(..n);
        buffer.extend_from_slice(&fresh);
        let (estimate, stages) = estimator.estimate(&buffer, now)?;
        predictions.push(estimate);
        loop_ms.push(loop_start.elapsed().as_secs_f64() * 1e3);
        spec_ms.push(stages.spectrogram_ms);
        model_ms.push(stages.model_ms);
        if now >= config.warmup_s && estimate <= target_mm {
            decision = Some(now);
            sim.stop_flow_at(now + config.actuator_delay_s);
        }
    }
    // the level no longer changes once the flow is cut, so the last
    // simulated sample is the achieved state
    let duration = total as f64 / sr;
    let stop_time = match decision {
        Some(d) if !overflow => (d + config.actuator_delay_s).min(duration),
        _ => (heard as f64 / sr).min(duration),
    };
    Ok(PourEpisodeResult {
        container: container.name.clone(),
        seed,
        target_air_column_mm: target_mm,
        achieved_air_column_mm: air,
        decision_time_s: decision,
        stop_time_s: stop_time,
        episode_duration_s: duration,
        overshoot_mm: target_mm - air,
        timeout: decision.is_none() || overflow,
        overflow,
        per_frame_predictions: predictions,
        loop_latencies_ms: loop_ms,
        spectrogram_latencies_ms: spec_ms,
        model_latencies_ms: model_ms,
    })
}

/// Summary of loop latencies in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub spectrogram_mean_ms: f64,
    pub model_mean_ms: f64,
    /// Mean spectrogram time over mean loop time.
    pub spectrogram_share: f64,
}

pub fn latency_summary(loop_ms: &[f64], spectrogram_ms: &[f64], model_ms: &[f64]) -> Result<LatencySummary, ControlError> {
    if loop_ms.is_empty() {
        return Err(ControlError::NoLatencies);
    }
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mut sorted = loop_ms.to_vec();
    sorted.sort_by(f64::total_cmp);
    // nearest-rank percentile
    let rank = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let mean_ms = mean(loop_ms);
    let spectrogram_mean_ms = mean(spectrogram_ms);
    Ok(LatencySummary {
        mean_ms,
        p95_ms: sorted[rank - 1],
        max_ms: sorted[sorted.len() - 1],
        spectrogram_mean_ms,
        model_mean_ms: mean(model_ms),
        spectrogram_share: if mean_ms > 0.0 { spectrogram_mean_ms / mean_ms } else { 0.0 },
    })
}

pub fn measure_loop_latency(result: &PourEpisodeResult) -> Result<LatencySummary, ControlError> {
    latency_summary(&result.loop_latencies_ms, &result.spectrogram_latencies_ms, &result.model_latencies_ms)
}

/// An episode pour drawn like the training pours, but starting at most 10 %
/// full and ending 20 to 25 mm below the rim, so every target between 25 mm
/// and 90 % of the height is crossed while the flow is running.
pub fn episode_profile(container: &ContainerSpec, seed: u64) -> PourProfile {
    let ranges = ProfileRanges { initial_fill: (0.0, 0.1), final_air_mm: (20.0, 25.0), ..ProfileRanges::default() };
    random_profile(container, &ranges, &mut ChaCha8Rng::seed_from_u64(seed))
}
