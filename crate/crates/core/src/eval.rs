//! Evaluation protocol: threshold-accuracy curves, per-container error
//! tables in mm and ml, and side-by-side comparison of encoder variants.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::ContainerSpec;
use crate::dsp::Spectrogram;
use crate::error::EvalError;
use crate::model::ModelParams;
use crate::training::{normalize, ClipSample};

/// Fraction of `errors` strictly below each threshold.
pub fn threshold_accuracy(errors: &[f64], thresholds: &[f64]) -> Result<Vec<(f64, f64)>, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::Empty);
    }
    if let Some(&e) = errors.iter().find(|e| !(**e >= 0.0)) {
        return Err(EvalError::NegativeError(e));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    Ok(thresholds.iter().map(|&t| (t, sorted.partition_point(|&e| e < t) as f64 / n)).collect())
}

/// 0 to 10 mm in 0.25 mm steps.
pub fn default_thresholds() -> Vec<f64> {
    (0..=40).map(|i| i as f64 * 0.25).collect()
}

/// Height errors (mm) converted to liquid amounts (ml) for a cylinder.
pub fn amount_error(height_error_mm: &[f64], container: &ContainerSpec) -> Vec<f64> {
    let area = container.area_mm2();
    height_error_mm.iter().map(|e| e * area / 1000.0).collect()
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

pub fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len();
    if n == 0 {
        return MeanStd { mean: f64::NAN, std: f64::NAN, count: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    MeanStd { mean, std: var.sqrt(), count: n }
}

/// Absolute errors of one model on a clip set, kept per clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipErrors {
    pub container: String,
    /// |Ĥ − H| per frame, mm.
    pub frames: Vec<f64>,
}

impl ClipErrors {
    pub fn last(&self) -> f64 {
        self.frames.last().copied().unwrap_or(f64::NAN)
    }
}

/// Runs `model` over every clip (normalizing with the checkpoint's
/// constants). `containers` maps recording ids to container names.
pub fn clip_errors(
    model: &ModelParams<f32>,
    clips: &[ClipSample],
    container_of: &(dyn Fn(&ClipSample) -> String + Sync),
) -> Result<Vec<ClipErrors>, EvalError> {
    model.check_inference_ready()?;
    clips
        .par_iter()
        .map(|c| {
            let x: Vec<f32> = normalize(c.spectrogram.as_slice(), &model.input_norm);
            let spec = Spectrogram::from_frames(c.spectrogram.bins(), c.spectrogram.frames(), x)
                .expect("shape preserved by normalization");
            let pred = model.predict(&spec)?;
            let frames = pred.iter().zip(&c.labels).map(|(p, y)| (*p as f64 - *y as f64).abs()).collect();
            Ok(ClipErrors { container: container_of(c), frames })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerErrors {
    pub container: String,
    pub mean_mm: f64,
    pub std_mm: f64,
    pub mean_ml: f64,
    pub std_ml: f64,
}

/// Everything reported for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    /// Over all frames of all clips.
    pub curve: Vec<(f64, f64)>,
    pub mean_abs_error_mm: f64,
    pub fraction_below_2mm: f64,
    pub per_container: Vec<ContainerErrors>,
    /// Same quantities using only the last frame of each clip.
    pub final_curve: Vec<(f64, f64)>,
    pub final_mean_abs_error_mm: f64,
    pub final_per_container: Vec<ContainerErrors>,
}

fn container_table(
    errors: &[ClipErrors],
    pick: &dyn Fn(&ClipErrors) -> Vec<f64>,
    containers: &BTreeMap<String, ContainerSpec>,
) -> Result<Vec<ContainerErrors>, EvalError> {
    let mut grouped: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in errors {
        grouped.entry(e.container.as_str()).or_default().extend(pick(e));
    }
    grouped
        .into_iter()
        .map(|(name, mm)| {
            let spec = containers.get(name).ok_or_else(|| EvalError::UnknownContainer(name.to_string()))?;
            let (a, b) = (mean_std(&mm), mean_std(&amount_error(&mm, spec)));
            Ok(ContainerErrors { container: name.to_string(), mean_mm: a.mean, std_mm: a.std, mean_ml: b.mean, std_ml: b.std })
        })
        .collect()
}

pub fn variant_report(
    name: &str,
    errors: &[ClipErrors],
    containers: &BTreeMap<String, ContainerSpec>,
    thresholds: &[f64],
) -> Result<VariantReport, EvalError> {
    let all: Vec<f64> = errors.iter().flat_map(|e| e.frames.iter().copied()).collect();
    let last: Vec<f64> = errors.iter().map(ClipErrors::last).collect();
    let below = threshold_accuracy(&all, &[2.0])?[0].1;
    Ok(VariantReport {
        name: name.to_string(),
        curve: threshold_accuracy(&all, thresholds)?,
        mean_abs_error_mm: mean_std(&all).mean,
        fraction_below_2mm: below,
        per_container: container_table(errors, &|e| e.frames.clone(), containers)?,
        final_curve: threshold_accuracy(&last, thresholds)?,
        final_mean_abs_error_mm: mean_std(&last).mean,
        final_per_container: container_table(errors, &|e| vec![e.last()], containers)?,
    })
}

/// Comparison of several checkpoints on one clip set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variants: Vec<VariantReport>,
    pub meta: EvalMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub checkpoints: Vec<String>,
    pub dataset: String,
    pub seed: u64,
    pub clips: usize,
    pub frames: usize,
}

/// Evaluates every named checkpoint on the same clips. All checkpoints must
/// carry identical normalization constants.
pub fn compare_variants(
    models: &[(String, &ModelParams<f32>)],
    clips: &[ClipSample],
    container_of: &(dyn Fn(&ClipSample) -> String + Sync),
    containers: &BTreeMap<String, ContainerSpec>,
    meta: EvalMeta,
) -> Result<EvalReport, EvalError> {
    if models.is_empty() || clips.is_empty() {
        return Err(EvalError::Empty);
    }
    let (first_name, first) = &models[0];
    for (name, m) in &models[1..] {
        if m.input_norm != first.input_norm {
            return Err(EvalError::NormalizationMismatch { a: first_name.clone(), b: name.clone() });
        }
    }
    let thresholds = default_thresholds();
    let variants = models
        .iter()
        .map(|(name, m)| variant_report(name, &clip_errors(m, clips, container_of)?, containers, &thresholds))
        .collect::<Result<_, _>>()?;
    Ok(EvalReport { variants, meta })
}

fn write_curves(path: &Path, report: &EvalReport, final_frame: bool) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path).map_err(crate::error::FormatError::from)?));
    w.write_record(["variant", "threshold_mm", "fraction"]).map_err(crate::error::FormatError::from)?;
    for v in &report.variants {
        let curve = if final_frame { &v.final_curve } else { &v.curve };
        for (t, f) in curve {
            w.write_record([v.name.clone(), format!("{t}"), format!("{f}")]).map_err(crate::error::FormatError::from)?;
        }
    }
    w.flush().map_err(crate::error::FormatError::from)?;
    Ok(())
}

fn write_errors(path: &Path, report: &EvalReport, final_frame: bool) -> Result<(), EvalError> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path).map_err(crate::error::FormatError::from)?));
    w.write_record(["variant", "container", "mean_mm", "std_mm", "mean_ml", "std_ml"])
        .map_err(crate::error::FormatError::from)?;
    for v in &report.variants {
        let rows = if final_frame { &v.final_per_container } else { &v.per_container };
        for r in rows {
            w.write_record([
                v.name.clone(),
                r.container.clone(),
                format!("{}", r.mean_mm),
                format!("{}", r.std_mm),
                format!("{}", r.mean_ml),
                format!("{}", r.std_ml),
            ])
            .map_err(crate::error::FormatError::from)?;
        }
    }
    w.flush().map_err(crate::error::FormatError::from)?;
    Ok(())
}

/// Writes `curves.csv`, `errors.csv` (all frames), their `_final` last-frame
/// counterparts, and `report.json`.
pub fn write_report(dir: &Path, report: &EvalReport) -> Result<(), EvalError> {
    fs::create_dir_all(dir).map_err(crate::error::FormatError::from)?;
    write_curves(&dir.join("curves.csv"), report, false)?;
    write_curves(&dir.join("curves_final.csv"), report, true)?;
    write_errors(&dir.join("errors.csv"), report, false)?;
    write_errors(&dir.join("errors_final.csv"), report, true)?;
    let f = BufWriter::new(File::create(dir.join("report.json")).map_err(crate::error::FormatError::from)?);
    serde_json::to_writer_pretty(f, report).map_err(crate::error::FormatError::from)?;
    Ok(())
}
