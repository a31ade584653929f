//! Synthetic pour corpora: randomized profiles, files on disk, manifest, and
//! loading recordings back as training clips.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{simulate_pour, ContainerSpec, FlowProfile, PourProfile, PourTrace, Wobble};
use crate::dsp::{resample, SAMPLE_RATE};
use crate::error::{FormatError, TrainError};
use crate::training::clips::{sample_clips, ClipSample};
use crate::wav::{read_wav, write_wav};

/// Ranges the randomized pours are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRanges {
    pub duration_s: (f64, f64),
    /// Starting level as a fraction of the container height.
    pub initial_fill: (f64, f64),
    /// Air column left at the end of the pour, mm.
    pub final_air_mm: (f64, f64),
    pub noise_floor_db: (f64, f64),
    pub background_snr_db: (f64, f64),
}

impl Default for ProfileRanges {
    fn default() -> Self {
        Self {
            duration_s: (5.0, 11.0),
            initial_fill: (0.0, 0.25),
            final_air_mm: (20.0, 35.0),
            noise_floor_db: (-26.0, -16.0),
            background_snr_db: (15.0, 25.0),
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: (f64, f64)) -> f64 {
    if r.1 > r.0 {
        rng.random_range(r.0..r.1)
    } else {
        r.0
    }
}

/// A smooth pour with random duration, onset/release, wobble and noise
/// levels, whose mean rate is scaled so the container ends with the drawn
/// final air column.
pub fn random_profile(container: &ContainerSpec, ranges: &ProfileRanges, rng: &mut ChaCha8Rng) -> PourProfile {
    let h = container.total_height_mm;
    let duration_s = uniform(rng, ranges.duration_s);
    let initial = uniform(rng, ranges.initial_fill) * h;
    let final_air = uniform(rng, ranges.final_air_mm).min(h - initial - 1.0).max(0.0);
    let onset_s = rng.random_range(0.2..0.8);
    let release_s = rng.random_range(0.1..0.5);
    let wobble: Vec<Wobble> = (0..rng.random_range(1..=2))
        .map(|_| Wobble {
            depth: rng.random_range(0.02..0.15),
            freq_hz: rng.random_range(0.2..2.0),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        })
        .collect();
    let mut flow = FlowProfile::Smooth { mean_ml_s: 1.0, onset_s, release_s, wobble };
    // integral of the unit-mean profile on a fine grid
    let steps = (duration_s * 2000.0) as usize;
    let dt = duration_s / steps as f64;
    let unit: f64 = (0..steps).map(|i| flow.rate((i as f64 + 0.5) * dt, duration_s) * dt).sum();
    let volume_ml = (h - initial - final_air) * container.area_mm2() / 1000.0;
    if let FlowProfile::Smooth { mean_ml_s, .. } = &mut flow {
        *mean_ml_s = volume_ml / unit;
    }
    PourProfile {
        flow,
        duration_s,
        initial_liquid_height_mm: initial,
        noise_floor_db: uniform(rng, ranges.noise_floor_db),
        background_snr_db: uniform(rng, ranges.background_snr_db),
    }
}

/// Everything needed to synthesize one pour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PourPlan {
    pub trace_id: String,
    pub container: ContainerSpec,
    pub profile: PourProfile,
    pub seed: u64,
}

/// `count` pours cycling through `containers`, reproducible from `seed`.
pub fn plan_pours(containers: &[ContainerSpec], count: usize, ranges: &ProfileRanges, seed: u64) -> Vec<PourPlan> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let container = containers[i % containers.len()].clone();
            let profile = random_profile(&container, ranges, &mut rng);
            PourPlan { trace_id: format!("pour{i:04}_{}", container.name), container, profile, seed: rng.random() }
        })
        .collect()
}

/// One line of `manifest.jsonl`. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub trace_id: String,
    pub wav_path: String,
    pub trace_path: String,
    pub container_name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const MANIFEST: &str = "manifest.jsonl";

/// Trace files keep roughly 1 kHz of the per-sample ground truth.
fn decimation(sample_rate: u32) -> usize {
    ((sample_rate as f64 / 1000.0).round() as usize).max(1)
}

/// Synthesizes every plan into `dir/pours/` (WAV + trace CSV) and writes the
/// manifest last. Failed pours get a manifest entry carrying the error.
pub fn synthesize_dataset(dir: &Path, plans: &[PourPlan], sample_rate: u32) -> Result<Vec<ManifestRecord>, FormatError> {
    fs::create_dir_all(dir.join("pours"))?;
    let records: Vec<Result<ManifestRecord, FormatError>> = plans
        .par_iter()
        .map(|plan| {
            let wav_path = format!("pours/{}.wav", plan.trace_id);
            let trace_path = format!("pours/{}.csv", plan.trace_id);
            let mut rec = ManifestRecord {
                trace_id: plan.trace_id.clone(),
                wav_path: wav_path.clone(),
                trace_path: trace_path.clone(),
                container_name: plan.container.name.clone(),
                error: None,
            };
            match simulate_pour(&plan.container, &plan.profile, sample_rate, plan.seed) {
                Ok((audio, trace)) => {
                    write_wav(&dir.join(&wav_path), &audio, sample_rate)?;
                    let f = BufWriter::new(File::create(dir.join(&trace_path))?);
                    trace.decimate(decimation(sample_rate)).write_csv(f)?;
                }
                Err(e) => rec.error = Some(e.to_string()),
            }
            Ok(rec)
        })
        .collect();
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
    write_manifest(&dir.join(MANIFEST), &records)?;
    Ok(records)
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), FormatError> {
    let tmp = path.with_extension("jsonl.partial");
    {
        let mut w = BufWriter::new(File::create(&tmp)?);
        for r in records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>, FormatError> {
    let r = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// A recording loaded from disk, resampled to the model rate.
#[derive(Debug, Clone)]
pub struct Recording {
    pub trace_id: String,
    pub container_name: String,
    pub audio: Vec<f64>,
    pub trace: PourTrace,
}

pub fn load_recording(dir: &Path, rec: &ManifestRecord) -> Result<Recording, TrainError> {
    let io = |source: FormatError| TrainError::Format { what: rec.trace_id.clone(), source };
    let (audio, sr) = read_wav(&dir.join(&rec.wav_path)).map_err(io)?;
    let audio = resample(&audio, sr, SAMPLE_RATE)?;
    let f = File::open(dir.join(&rec.trace_path)).map_err(|e| io(e.into()))?;
    let trace = PourTrace::read_csv(BufReader::new(f)).map_err(io)?;
    Ok(Recording { trace_id: rec.trace_id.clone(), container_name: rec.container_name.clone(), audio, trace })
}

/// Loads every successful manifest entry of the dataset in `dir`.
pub fn load_recordings(dir: &Path) -> Result<Vec<Recording>, TrainError> {
    let path = dir.join(MANIFEST);
    let manifest =
        read_manifest(&path).map_err(|source| TrainError::Format { what: path.display().to_string(), source })?;
    manifest.par_iter().filter(|r| r.error.is_none()).map(|r| load_recording(dir, r)).collect()
}

/// Cuts clips from every recording. Each recording gets its own clip seed
/// derived from `seed` and its position.
pub fn clips_from_recordings(
    recordings: &[Recording],
    count_per_second: f64,
    seed: u64,
) -> Result<Vec<ClipSample>, TrainError> {
    let per: Vec<Vec<ClipSample>> = recordings
        .par_iter()
        .enumerate()
        .map(|(i, r)| sample_clips(&r.trace, &r.audio, &r.trace_id, count_per_second, seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)))
        .collect::<Result<_, _>>()?;
    Ok(per.into_iter().flatten().collect())
}
