//! Mini-batch training loop with a by-recording train/validation split.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::TrainError;
use crate::model::{EncoderKind, ForwardMode, ModelConfig, ModelParams};
use crate::training::adam::{Adam, AdamConfig};
use crate::training::clips::{ClipSample, CLIP_FRAMES, CLIP_SECONDS};
use crate::training::losses::{loss_height, loss_mono, loss_total, loss_total_grad};
use crate::training::normalize::{fit_normalization, normalize};
use crate::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub kind: EncoderKind,
    pub hidden: usize,
    pub head_hidden: usize,
    /// Weight of the monotonicity term.
    pub alpha: f64,
    pub clip_seconds: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Fraction of recordings held out for validation.
    pub val_fraction: f64,
    /// Clips cut per second of recording.
    pub count_per_second: f64,
    /// Network outputs are in units of this many mm.
    pub label_scale_mm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Lstm,
            hidden: ModelConfig::DEFAULT_HIDDEN,
            head_hidden: ModelConfig::DEFAULT_HEAD_HIDDEN,
            alpha: 0.01,
            clip_seconds: CLIP_SECONDS,
            learning_rate: 1e-3,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            val_fraction: 0.1,
            count_per_second: 0.625,
            label_scale_mm: ModelConfig::DEFAULT_OUTPUT_SCALE,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig::new(self.kind).with_hidden(self.hidden).with_head_hidden(self.head_hidden)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.alpha >= 0.0) {
            return bad("alpha must be >= 0");
        }
        if self.clip_seconds != CLIP_SECONDS {
            return bad("clip_seconds must be 4 (251 frames)");
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return bad("learning_rate, batch_size, hidden and head_hidden must be positive");
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return bad("val_fraction must be in [0, 1)");
        }
        if !(self.label_scale_mm > 0.0) {
            return bad("label_scale_mm must be positive");
        }
        Ok(())
    }
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_mono_loss: Option<f64>,
    pub wall_seconds: f64,
}

/// Recording identifiers on each side of the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub val: Vec<String>,
}

impl Split {
    /// Shuffles the distinct recording ids with `seed` and holds out
    /// `ceil(fraction · n)` of them (at least one when `fraction > 0`).
    pub fn by_trace(clips: &[ClipSample], fraction: f64, seed: u64) -> Self {
        let ids: BTreeSet<&str> = clips.iter().map(|c| c.source_trace_id.as_str()).collect();
        let mut ids: Vec<String> = ids.into_iter().map(String::from).collect();
        ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5011));
        let n_val = if fraction > 0.0 { ((ids.len() as f64 * fraction).ceil() as usize).max(1) } else { 0 };
        let val = ids.split_off(ids.len() - n_val.min(ids.len()));
        let mut train = ids;
        train.sort();
        let mut val = val;
        val.sort();
        Self { train, val }
    }
}

#[derive(Debug)]
pub struct TrainOutcome<T> {
    /// Weights from the epoch with the lowest validation loss (the last
    /// epoch when nothing is held out).
    pub model: ModelParams<T>,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub split: Split,
}

/// Normalized frame-major inputs and labels for a set of clips.
pub struct PreparedClips<T> {
    pub inputs: Vec<Vec<T>>,
    pub labels: Vec<Vec<T>>,
}

impl<T: Scalar> PreparedClips<T> {
    pub fn new(clips: &[&ClipSample], norm: &crate::model::InputNorm) -> Self {
        Self {
            inputs: clips.iter().map(|c| normalize(c.spectrogram.as_slice(), norm)).collect(),
            labels: clips.iter().map(|c| c.labels.iter().map(|&v| T::of(v as f64)).collect()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Mean per-clip losses of a set of clips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSummary {
    pub total: f64,
    pub height: f64,
    pub mono: f64,
}

/// Evaluates the model on `data` in chunks of `chunk` clips.
pub fn evaluate_losses<T: Scalar>(
    model: &mut ModelParams<T>,
    data: &PreparedClips<T>,
    alpha: f64,
    mode: ForwardMode,
    chunk: usize,
) -> Result<LossSummary, TrainError> {
    let (mut total, mut height, mut mono) = (0.0, 0.0, 0.0);
    for start in (0..data.len()).step_by(chunk.max(1)) {
        let end = (start + chunk.max(1)).min(data.len());
        let inputs: Vec<&[T]> = data.inputs[start..end].iter().map(|v| v.as_slice()).collect();
        let preds = model.forward_batch(&inputs, mode)?;
        model.clear_cache();
        for (p, y) in preds.iter().zip(&data.labels[start..end]) {
            total += loss_total(p, y, T::of(alpha))?.f64();
            height += loss_height(p, y)?.f64();
            mono += loss_mono(p).f64();
        }
    }
    let n = data.len().max(1) as f64;
    Ok(LossSummary { total: total / n, height: height / n, mono: mono / n })
}

/// Trains a fresh model on `clips`. `on_epoch` sees every log row as it is
/// produced.
pub fn train<T: Scalar>(
    clips: &[ClipSample],
    config: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome<T>, TrainError> {
    config.validate()?;
    if clips.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    if let Some(c) = clips.iter().find(|c| c.frames() != CLIP_FRAMES || c.spectrogram.frames() != CLIP_FRAMES) {
        return Err(TrainError::LengthMismatch { pred: c.spectrogram.frames(), truth: c.frames() });
    }
    let split = Split::by_trace(clips, config.val_fraction, config.seed);
    let in_set = |ids: &[String], c: &ClipSample| ids.binary_search(&c.source_trace_id).is_ok();
    let train_clips: Vec<&ClipSample> = clips.iter().filter(|c| in_set(&split.train, c)).collect();
    let val_clips: Vec<&ClipSample> = clips.iter().filter(|c| in_set(&split.val, c)).collect();
    if train_clips.is_empty() {
        return Err(TrainError::EmptySplit);
    }

    let norm = fit_normalization(&train_clips);
    let train_data = PreparedClips::<T>::new(&train_clips, &norm);
    let val_data = PreparedClips::<T>::new(&val_clips, &norm);

    let mut model = ModelParams::<T>::init(
        ModelConfig { output_scale: config.label_scale_mm, ..config.model_config() },
        config.seed,
    );
    model.input_norm = norm;
    let mut opt = Adam::<T>::new(AdamConfig { learning_rate: config.learning_rate, ..Default::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0xba7c_4e5);
    let alpha = T::of(config.alpha);
    let started = Instant::now();
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, ModelParams<T>)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let inputs: Vec<&[T]> = idx.iter().map(|&i| train_data.inputs[i].as_slice()).collect();
            let preds = model.forward_batch(&inputs, ForwardMode::Train { track_stats: true })?;
            let scale = T::one() / T::of_usize(idx.len());
            let mut loss = T::zero();
            let mut grads = Vec::with_capacity(idx.len());
            for (p, &i) in preds.iter().zip(idx) {
                let y = &train_data.labels[i];
                loss += loss_total(p, y, alpha)?;
                grads.push(loss_total_grad(p, y, alpha)?.into_iter().map(|g| g * scale).collect::<Vec<T>>());
            }
            let loss = (loss * scale).f64();
            if !loss.is_finite() {
                model.clear_cache();
                return Err(TrainError::NonFiniteLoss { epoch, batch: b });
            }
            model.zero_grad();
            model.backward(&inputs, &grads)?;
            opt.step(model.params_mut());
            epoch_loss += loss;
            batches += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        let (val_loss, val_mono) = if val_data.is_empty() {
            (None, None)
        } else {
            let s = evaluate_losses(&mut model, &val_data, config.alpha, ForwardMode::Inference, 64)?;
            (Some(s.total), Some(s.mono))
        };
        let row = EpochLog {
            epoch,
            train_loss,
            val_loss,
            val_mono_loss: val_mono,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        log.push(row);
        let score = val_loss.unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s || val_loss.is_none()) {
            best = Some((score, epoch, model.clone()));
        }
    }
    let (_, best_epoch, model) = best.unwrap_or((0.0, 0, model));
    Ok(TrainOutcome { model, log, best_epoch, split })
}

/// Writes the log as CSV: `epoch,train_loss,val_loss,val_mono_loss,wall_seconds`.
pub fn write_train_log<W: std::io::Write>(log: &[EpochLog], w: W) -> Result<(), crate::error::FormatError> {
    let mut wtr = csv::Writer::from_writer(w);
    for row in log {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}
