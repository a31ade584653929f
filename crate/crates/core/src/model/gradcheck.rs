//! Finite-difference verification of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::ModelError;
use crate::model::network::ForwardMode;
use crate::model::params::{EncoderKind, ModelConfig, ModelParams};

/// Outcome of one gradient check.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub kind: EncoderKind,
    pub frames: usize,
    pub seed: u64,
    /// Largest relative error over every checked scalar parameter.
    pub max_rel_error: f64,
    /// Parameter (tensor name and flat index) where it occurred.
    pub worst: (String, usize),
    pub checked: usize,
    /// Coordinates whose perturbation flipped a rectifier even at the
    /// smallest step; the derivative is undefined there and they are skipped.
    pub kinks: usize,
}

const EPS: f64 = 1e-4;
/// Denominator floor, relative to the largest gradient magnitude in the
/// model, so that entries that are zero up to rounding do not dominate.
const FLOOR: f64 = 1e-6;

fn objective(
    m: &mut ModelParams<f64>,
    inputs: &[&[f64]],
    g: &[Vec<f64>],
) -> Result<(f64, Vec<bool>), ModelError> {
    let out = m.forward_batch(inputs, ForwardMode::Train { track_stats: false })?;
    let pattern = m.cached_relu_pattern().unwrap_or_default();
    m.clear_cache();
    let v = out.iter().flatten().zip(g.iter().flatten()).map(|(a, b)| a * b).sum();
    Ok((v, pattern))
}

/// Compares back-propagated gradients with central differences for every
/// parameter of a freshly initialized model on a batch of three random clips
/// of `frames` frames. Batch normalization runs in training mode.
pub fn gradient_check(config: ModelConfig, frames: usize, seed: u64) -> Result<GradCheckReport, ModelError> {
    check(config, frames, seed, None)
}

/// Like [`gradient_check`], but first adds 1 % of the largest gradient
/// magnitude to every analytic gradient entry of `tensor`. A sound checker
/// must then fail and name that tensor.
pub fn gradient_check_corrupted(
    config: ModelConfig,
    frames: usize,
    seed: u64,
    tensor: &str,
) -> Result<GradCheckReport, ModelError> {
    check(config, frames, seed, Some(tensor))
}

fn check(config: ModelConfig, frames: usize, seed: u64, corrupt: Option<&str>) -> Result<GradCheckReport, ModelError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut m = ModelParams::<f64>::init(config, seed);
    let clips: Vec<Vec<f64>> =
        (0..3).map(|_| (0..frames * config.input).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let g: Vec<Vec<f64>> = (0..3).map(|_| (0..frames).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.01).collect()).collect();
    let inputs: Vec<&[f64]> = clips.iter().map(|c| c.as_slice()).collect();

    m.zero_grad();
    let (_, base_pattern) = {
        m.forward_batch(&inputs, ForwardMode::Train { track_stats: false })?;
        let p = m.cached_relu_pattern().unwrap_or_default();
        m.backward(&inputs, &g)?;
        ((), p)
    };
    let mut analytic: Vec<Vec<f64>> = m.params().iter().map(|p| p.grad.clone()).collect();
    let scale = analytic.iter().flatten().fold(0.0f64, |a, &b| a.max(b.abs()));
    if let Some(name) = corrupt {
        let names: Vec<String> = m.params().iter().map(|p| p.name.clone()).collect();
        let pi = names.iter().position(|n| n == name).ok_or_else(|| ModelError::UnknownTensor(name.to_string()))?;
        analytic[pi].iter_mut().for_each(|g| *g += 0.01 * scale);
    }
    let floor = FLOOR * scale.max(1e-12);

    let mut report = GradCheckReport {
        kind: config.kind,
        frames,
        seed,
        max_rel_error: 0.0,
        worst: (String::new(), 0),
        checked: 0,
        kinks: 0,
    };
    let n_params = analytic.len();
    for pi in 0..n_params {
        for idx in 0..analytic[pi].len() {
            let orig = m.params()[pi].value[idx];
            let mut eps = EPS;
            let mut numeric = None;
            for _ in 0..4 {
                let mut diffs = [0.0; 2];
                let mut clean = true;
                for (d, h) in diffs.iter_mut().zip([eps, eps / 2.0]) {
                    m.params_mut()[pi].value[idx] = orig + h;
                    let (plus, pp) = objective(&mut m, &inputs, &g)?;
                    m.params_mut()[pi].value[idx] = orig - h;
                    let (minus, pm) = objective(&mut m, &inputs, &g)?;
                    m.params_mut()[pi].value[idx] = orig;
                    clean &= pp == base_pattern && pm == base_pattern;
                    *d = (plus - minus) / (2.0 * h);
                }
                if clean {
                    // Richardson step cancels the O(ε²) truncation term.
                    numeric = Some((4.0 * diffs[1] - diffs[0]) / 3.0);
                    break;
                }
                eps /= 10.0;
            }
            let Some(numeric) = numeric else {
                report.kinks += 1;
                continue;
            };
            let a = analytic[pi][idx];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            report.checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = (m.params()[pi].name.clone(), idx);
            }
        }
    }
    Ok(report)
}

/// Model size used by the exhaustive checks: hidden and head width 8.
pub fn small_config(kind: EncoderKind, input: usize) -> ModelConfig {
    ModelConfig::new(kind).with_input(input).with_hidden(8).with_head_hidden(8)
}
