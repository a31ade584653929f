use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::acoustics::container::ContainerSpec;
use crate::acoustics::profile::PourProfile;
use crate::acoustics::resonance::quarter_wave_hz;
use crate::acoustics::trace::PourTrace;
use crate::error::AcousticsError;

/// Relative levels of the 2nd and 3rd harmonic (-12 dB, -18 dB).
const HARMONIC_GAIN: [f64; 2] = [0.251_188_643_150_958, 0.125_892_541_179_416_8];
/// Flow at which the resonance reaches half of its full excitation.
const HALF_EXCITATION_ML_S: f64 = 3.0;
/// Flow at which turbulence reaches the configured noise floor.
const REFERENCE_FLOW_ML_S: f64 = 40.0;
const ATTACK_S: f64 = 0.01;
const RING_DOWN_S: f64 = 0.03;
const TREMOLO_HZ: f64 = 6.0;
const TREMOLO_DEPTH: f64 = 0.15;
const TURBULENCE_BAND_HZ: (f64, f64) = (300.0, 4000.0);

/// Ground-truth state of the container after one audio sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    pub liquid_height_mm: f64,
    pub air_column_mm: f64,
    pub weight_g: f64,
}

/// Sample-by-sample pour simulator. `simulate_pour` drives it for a whole
/// recording; the closed-loop controller drives it hop by hop and may cut the
/// flow early with [`PourSimulator::stop_flow_at`].
pub struct PourSimulator {
    container: ContainerSpec,
    profile: PourProfile,
    sample_rate: f64,
    rng: ChaCha8Rng,
    area_mm2: f64,
    index: u64,
    volume_mm3: f64,
    last_rate: f64,
    stop_at: Option<f64>,
    phase: f64,
    excitation: f64,
    tremolo: f64,
    hp_state: (f64, f64),
    lp_state: f64,
    background_sigma: f64,
    turbulence_sigma: f64,
}

impl PourSimulator {
    pub fn new(
        container: &ContainerSpec,
        profile: &PourProfile,
        sample_rate: u32,
        seed: u64,
    ) -> Result<Self, AcousticsError> {
        container.validate()?;
        profile.validate()?;
        if sample_rate < 8000 {
            return Err(AcousticsError::SampleRateTooLow(sample_rate));
        }
        if profile.initial_liquid_height_mm >= container.total_height_mm {
            return Err(AcousticsError::Overflow {
                time_s: 0.0,
                liquid_mm: profile.initial_liquid_height_mm,
                total_height_mm: container.total_height_mm,
            });
        }
        let sr = sample_rate as f64;
        let tone_rms = container.resonance_gain / std::f64::consts::SQRT_2;
        let background_sigma = tone_rms * 10f64.powf(-profile.background_snr_db / 20.0);
        // one-pole band-pass keeps roughly (pi/2)(f_hi - f_lo) of the white
        // noise bandwidth; rescale so the band-limited RMS hits the target
        let kept = std::f64::consts::FRAC_PI_2 * (TURBULENCE_BAND_HZ.1 - TURBULENCE_BAND_HZ.0) / (sr / 2.0);
        let turbulence_sigma =
            container.resonance_gain * 10f64.powf(profile.noise_floor_db / 20.0) / kept.min(1.0).sqrt();
        Ok(Self {
            area_mm2: container.area_mm2(),
            container: container.clone(),
            profile: profile.clone(),
            sample_rate: sr,
            rng: ChaCha8Rng::seed_from_u64(seed),
            index: 0,
            volume_mm3: 0.0,
            last_rate: profile.rate(0.0),
            stop_at: None,
            phase: 0.0,
            excitation: 0.0,
            tremolo: 0.0,
            hp_state: (0.0, 0.0),
            lp_state: 0.0,
            background_sigma,
            turbulence_sigma,
        })
    }

    /// Number of samples in the full recording.
    pub fn total_samples(&self) -> usize {
        (self.profile.duration_s * self.sample_rate).round() as usize
    }

    pub fn time(&self) -> f64 {
        self.index as f64 / self.sample_rate
    }

    pub fn is_finished(&self) -> bool {
        self.index as usize >= self.total_samples()
    }

    /// Cuts the flow from time `t` on (the tap closes).
    pub fn stop_flow_at(&mut self, t: f64) {
        self.stop_at = Some(self.stop_at.map_or(t, |s| s.min(t)));
    }

    pub fn stop_time(&self) -> Option<f64> {
        self.stop_at
    }

    fn rate(&self, t: f64) -> f64 {
        match self.stop_at {
            Some(s) if t >= s => 0.0,
            _ => self.profile.rate(t),
        }
    }

    /// Liquid level implied by the volume poured so far.
    pub fn liquid_height_mm(&self) -> f64 {
        self.profile.initial_liquid_height_mm + self.volume_mm3 / self.area_mm2
    }

    /// Advances one sample and returns the audio value plus ground truth.
    pub fn next_sample(&mut self) -> Result<(f64, TraceSample), AcousticsError> {
        let dt = 1.0 / self.sample_rate;
        let t = self.index as f64 * dt;
        let q = self.rate(t);
        if self.index > 0 {
            // trapezoid; 1 ml = 1000 mm³
            self.volume_mm3 += 0.5 * (self.last_rate + q) * dt * 1000.0;
        }
        self.last_rate = q;
        let liquid = self.liquid_height_mm();
        let total = self.container.total_height_mm;
        if liquid > total {
            return Err(AcousticsError::Overflow { time_s: t, liquid_mm: liquid, total_height_mm: total });
        }
        let air = total - liquid;

        let target = q / (q + HALF_EXCITATION_ML_S);
        let tau = if target > self.excitation {
            ATTACK_S
        } else {
            RING_DOWN_S / self.container.material_damping
        };
        self.excitation += (target - self.excitation) * (1.0 - (-dt / tau).exp());

        let a = (-TAU * TREMOLO_HZ * dt).exp();
        let n_trem: f64 = StandardNormal.sample(&mut self.rng);
        self.tremolo = a * self.tremolo + (1.0 - a * a).sqrt() * n_trem;
        let depth = TREMOLO_DEPTH * self.container.material_damping;
        let amplitude =
            self.container.resonance_gain * self.excitation * (1.0 + depth * self.tremolo.clamp(-2.0, 2.0));

        let mut tone = 0.0;
        if air > 0.0 {
            let f = quarter_wave_hz(air, self.container.inner_diameter_mm);
            let (s1, c1) = self.phase.sin_cos();
            let nyquist = 0.5 * self.sample_rate;
            tone = s1;
            if 2.0 * f < 0.9 * nyquist {
                tone += HARMONIC_GAIN[0] * 2.0 * s1 * c1;
            }
            if 3.0 * f < 0.9 * nyquist {
                tone += HARMONIC_GAIN[1] * (3.0 * s1 - 4.0 * s1 * s1 * s1);
            }
            self.phase = (self.phase + TAU * f * dt) % TAU;
        }

        let white: f64 = StandardNormal.sample(&mut self.rng);
        let (fl, fh) = TURBULENCE_BAND_HZ;
        let a_hp = 1.0 / (1.0 + TAU * fl * dt);
        let x = white * self.turbulence_sigma * (q / REFERENCE_FLOW_ML_S);
        let hp = a_hp * (self.hp_state.1 + x - self.hp_state.0);
        self.hp_state = (x, hp);
        let b_lp = 1.0 - (-TAU * fh * dt).exp();
        self.lp_state += b_lp * (hp - self.lp_state);

        let bg: f64 = StandardNormal.sample(&mut self.rng);
        let sample = amplitude * tone + self.lp_state + bg * self.background_sigma;

        self.index += 1;
        Ok((
            sample,
            TraceSample {
                t,
                liquid_height_mm: liquid,
                air_column_mm: air,
                weight_g: liquid * self.area_mm2 / 1000.0,
            },
        ))
    }
}

/// Synthesizes a complete pour recording and its ground-truth trace.
pub fn simulate_pour(
    container: &ContainerSpec,
    profile: &PourProfile,
    sample_rate: u32,
    seed: u64,
) -> Result<(Vec<f64>, PourTrace), AcousticsError> {
    let mut sim = PourSimulator::new(container, profile, sample_rate, seed)?;
    let n = sim.total_samples();
    let mut wave = Vec::with_capacity(n);
    let mut trace = PourTrace::with_capacity(sample_rate as f64, n);
    for _ in 0..n {
        let (s, g) = sim.next_sample()?;
        wave.push(s);
        trace.push(g.t, g.liquid_height_mm, g.air_column_mm, g.weight_g);
    }
    Ok((wave, trace))
}
