//! Forward passes (single-step inference and batched training) and the
//! matching reverse-mode gradients.

use rayon::prelude::*;

use crate::dsp::Spectrogram;
use crate::error::ModelError;
use crate::linalg::{dot, gemv_acc, gemv_t_acc, outer_acc};
use crate::model::cells::{GruWeights, LstmWeights, RecurrentTrace};
use crate::model::params::{BatchNorm, Encoder, EncoderKind, HiddenState, ModelParams};
use crate::Scalar;

/// How batch normalization behaves during [`ModelParams::forward_batch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Batch statistics; activations are cached for [`ModelParams::backward`].
    /// With `track_stats` the running statistics are updated.
    Train { track_stats: bool },
    /// Running statistics, nothing cached.
    Inference,
}

/// Per-frame air-column estimates for one spectrogram.
#[derive(Debug, Clone, PartialEq)]
pub struct SequencePrediction<T> {
    /// Ĥ in millimetres, one per frame.
    pub heights_mm: Vec<T>,
    /// Encoder state after every frame, when requested.
    pub hidden: Option<Vec<HiddenState<T>>>,
    /// State after the last frame, for continuing a stream.
    pub final_state: HiddenState<T>,
}

impl<T> SequencePrediction<T> {
    pub fn len(&self) -> usize {
        self.heights_mm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heights_mm.is_empty()
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BnCache<T> {
    pub xhat: Vec<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub(crate) struct BatchCache<T> {
    pub frames: Vec<usize>,
    pub traces: Vec<RecurrentTrace<T>>,
    pub fc_bn: Option<BnCache<T>>,
    /// Encoder output for every frame of the batch, `N × hidden`.
    pub features: Vec<T>,
    pub head_bn: BnCache<T>,
    /// Head activations after the rectifier, `N × head_hidden`.
    pub head_act: Vec<T>,
}

impl<T: Scalar> BatchCache<T> {
    /// Signs of every rectifier input in the batch.
    pub(crate) fn relu_pattern(&self) -> Vec<bool> {
        let mut out: Vec<bool> = self.head_act.iter().map(|&a| a > T::zero()).collect();
        if self.fc_bn.is_some() {
            out.extend(self.features.iter().map(|&a| a > T::zero()));
        }
        out
    }
}

fn bn_train<T: Scalar>(bn: &mut BatchNorm<T>, x: &mut [T], track: bool) -> BnCache<T> {
    let c = bn.features();
    let n = x.len() / c;
    let nf = T::of_usize(n);
    let mut mean = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nf);
    let mut var = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for k in 0..c {
            let d = row[k] - mean[k];
            var[k] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= nf);
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + bn.eps).sqrt()).collect();
    let mut xhat = vec![T::zero(); x.len()];
    for (row, hrow) in x.chunks_exact_mut(c).zip(xhat.chunks_exact_mut(c)) {
        for k in 0..c {
            let h = (row[k] - mean[k]) * inv_std[k];
            hrow[k] = h;
            row[k] = bn.gamma.value[k] * h + bn.beta.value[k];
        }
    }
    if track {
        let m = bn.momentum;
        let unbias = if n > 1 { nf / T::of_usize(n - 1) } else { T::one() };
        for k in 0..c {
            bn.running_mean[k] = (T::one() - m) * bn.running_mean[k] + m * mean[k];
            bn.running_var[k] = (T::one() - m) * bn.running_var[k] + m * var[k] * unbias;
        }
        bn.count += 1;
    }
    BnCache { xhat, inv_std }
}

fn bn_ready<T: Scalar>(bn: &BatchNorm<T>) -> Result<(), ModelError> {
    if bn.count == 0 {
        return Err(ModelError::UntrainedRunningStats(bn.name().to_string()));
    }
    Ok(())
}

fn bn_eval<T: Scalar>(bn: &BatchNorm<T>, x: &mut [T]) {
    let c = bn.features();
    for row in x.chunks_exact_mut(c) {
        for k in 0..c {
            let h = (row[k] - bn.running_mean[k]) / (bn.running_var[k] + bn.eps).sqrt();
            row[k] = bn.gamma.value[k] * h + bn.beta.value[k];
        }
    }
}

/// Accumulates γ/β gradients and overwrites `dy` with dL/dx.
fn bn_backward<T: Scalar>(bn: &mut BatchNorm<T>, cache: &BnCache<T>, dy: &mut [T]) {
    let c = bn.features();
    let n = dy.len() / c;
    let nf = T::of_usize(n);
    let mut sum_dy = vec![T::zero(); c];
    let mut sum_dy_xhat = vec![T::zero(); c];
    for (drow, hrow) in dy.chunks_exact(c).zip(cache.xhat.chunks_exact(c)) {
        for k in 0..c {
            sum_dy[k] += drow[k];
            sum_dy_xhat[k] += drow[k] * hrow[k];
        }
    }
    for k in 0..c {
        bn.beta.grad[k] += sum_dy[k];
        bn.gamma.grad[k] += sum_dy_xhat[k];
    }
    for (drow, hrow) in dy.chunks_exact_mut(c).zip(cache.xhat.chunks_exact(c)) {
        for k in 0..c {
            let scale = bn.gamma.value[k] * cache.inv_std[k] / nf;
            drow[k] = scale * (nf * drow[k] - sum_dy[k] - hrow[k] * sum_dy_xhat[k]);
        }
    }
}

fn relu<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

impl<T: Scalar> ModelParams<T> {
    fn check_frame(&self, x: &[T]) -> Result<(), ModelError> {
        if x.len() != self.config.input {
            return Err(ModelError::Shape { what: "input frame".into(), expected: self.config.input, got: x.len() });
        }
        Ok(())
    }

    fn check_state(&self, state: &HiddenState<T>) -> Result<(), ModelError> {
        let h = self.config.hidden;
        if state.h.len() != h {
            return Err(ModelError::Shape { what: "hidden state".into(), expected: h, got: state.h.len() });
        }
        if self.kind() == EncoderKind::Lstm {
            let got = state.c.as_ref().map_or(0, |c| c.len());
            if got != h {
                return Err(ModelError::Shape { what: "cell state".into(), expected: h, got });
            }
        }
        Ok(())
    }

    /// Verifies every batch-norm layer has running statistics.
    pub fn check_inference_ready(&self) -> Result<(), ModelError> {
        self.batch_norms().into_iter().try_for_each(bn_ready)
    }

    /// Advances the encoder by one spectrogram slice. The FC encoder ignores
    /// the incoming state and uses running batch-norm statistics.
    pub fn encoder_step(&self, x: &[T], state: &HiddenState<T>) -> Result<HiddenState<T>, ModelError> {
        self.check_frame(x)?;
        self.check_state(state)?;
        let n = self.config.hidden;
        match &self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => {
                let cell = LstmWeights { w_ih: &w_ih.value, w_hh: &w_hh.value, bias: &bias.value, hidden: n };
                let mut gates = vec![T::zero(); 4 * n];
                let mut c = vec![T::zero(); n];
                let mut h = vec![T::zero(); n];
                let c_prev = state.c.as_deref().unwrap_or(&[]);
                cell.step(x, &state.h, c_prev, &mut gates, &mut c, &mut h);
                Ok(HiddenState { h, c: Some(c) })
            }
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => {
                let cell = GruWeights {
                    w_ih: &w_ih.value,
                    w_hh: &w_hh.value,
                    b_ih: &b_ih.value,
                    b_hh: &b_hh.value,
                    hidden: n,
                };
                let mut aux = vec![T::zero(); 4 * n];
                let mut scratch = vec![T::zero(); 6 * n];
                let mut h = vec![T::zero(); n];
                cell.step(x, &state.h, &mut aux, &mut h, &mut scratch);
                Ok(HiddenState { h, c: None })
            }
            Encoder::Fc { w, bn } => {
                bn_ready(bn)?;
                let mut h = vec![T::zero(); n];
                gemv_acc(&mut h, &w.value, x);
                bn_eval(bn, &mut h);
                relu(&mut h);
                Ok(HiddenState { h, c: None })
            }
        }
    }

    /// Height predictor on encoder features, inference mode. Returns mm.
    pub fn predict_height(&self, features: &[T]) -> Result<T, ModelError> {
        if features.len() != self.config.hidden {
            return Err(ModelError::Shape {
                what: "encoder features".into(),
                expected: self.config.hidden,
                got: features.len(),
            });
        }
        bn_ready(&self.head.bn1)?;
        let mut u = vec![T::zero(); self.config.head_hidden];
        gemv_acc(&mut u, &self.head.w1.value, features);
        bn_eval(&self.head.bn1, &mut u);
        relu(&mut u);
        let out = dot(&self.head.w2.value, &u) + self.head.b2.value[0];
        Ok(out * T::of(self.config.output_scale))
    }

    /// Runs the encoder frame by frame from `initial`, then the predictor on
    /// every frame. Expects a normalized spectrogram.
    pub fn predict_sequence(
        &self,
        spec: &Spectrogram<T>,
        initial: &HiddenState<T>,
        keep_hidden: bool,
    ) -> Result<SequencePrediction<T>, ModelError> {
        if spec.bins() != self.config.input {
            return Err(ModelError::Shape { what: "spectrogram bins".into(), expected: self.config.input, got: spec.bins() });
        }
        self.check_inference_ready()?;
        let mut state = initial.clone();
        let mut heights = Vec::with_capacity(spec.frames());
        let mut hidden = keep_hidden.then(|| Vec::with_capacity(spec.frames()));
        for j in 0..spec.frames() {
            state = self.encoder_step(spec.frame(j), &state)?;
            heights.push(self.predict_height(&state.h)?);
            if let Some(hs) = hidden.as_mut() {
                hs.push(state.clone());
            }
        }
        Ok(SequencePrediction { heights_mm: heights, hidden, final_state: state })
    }

    /// Like [`predict_sequence`](Self::predict_sequence) from a zero state,
    /// returning only the heights.
    pub fn predict(&self, spec: &Spectrogram<T>) -> Result<Vec<T>, ModelError> {
        let zero = HiddenState::zeros(&self.config);
        Ok(self.predict_sequence(spec, &zero, false)?.heights_mm)
    }

    fn frames_of(&self, inputs: &[&[T]]) -> Result<Vec<usize>, ModelError> {
        if inputs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let i = self.config.input;
        inputs
            .iter()
            .map(|x| {
                if x.is_empty() || x.len() % i != 0 {
                    Err(ModelError::Shape { what: "clip length (multiple of input size)".into(), expected: i, got: x.len() })
                } else {
                    Ok(x.len() / i)
                }
            })
            .collect()
    }

    /// Batched forward over clips, each a frame-major `frames × input` slice
    /// starting from a zero state. Batch-norm statistics in training mode
    /// are taken over all frames of all clips. Returns mm per frame per clip.
    pub fn forward_batch(&mut self, inputs: &[&[T]], mode: ForwardMode) -> Result<Vec<Vec<T>>, ModelError> {
        let frames = self.frames_of(inputs)?;
        let training = matches!(mode, ForwardMode::Train { .. });
        let track = matches!(mode, ForwardMode::Train { track_stats: true });
        if !training {
            self.check_inference_ready()?;
        }
        self.cache = None;
        let n = self.config.hidden;
        let total: usize = frames.iter().sum();

        let mut traces = Vec::new();
        let mut fc_bn = None;
        let mut features = Vec::with_capacity(total * n);
        match &mut self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => {
                let cell = LstmWeights { w_ih: &w_ih.value, w_hh: &w_hh.value, bias: &bias.value, hidden: n };
                traces = inputs.par_iter().zip(&frames).map(|(x, &t)| cell.forward(x, t)).collect();
            }
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => {
                let cell = GruWeights {
                    w_ih: &w_ih.value,
                    w_hh: &w_hh.value,
                    b_ih: &b_ih.value,
                    b_hh: &b_hh.value,
                    hidden: n,
                };
                traces = inputs.par_iter().zip(&frames).map(|(x, &t)| cell.forward(x, t)).collect();
            }
            Encoder::Fc { w, bn } => {
                let i = self.config.input;
                for x in inputs {
                    for frame in x.chunks_exact(i) {
                        let start = features.len();
                        features.resize(start + n, T::zero());
                        gemv_acc(&mut features[start..], &w.value, frame);
                    }
                }
                if training {
                    fc_bn = Some(bn_train(bn, &mut features, track));
                } else {
                    bn_eval(bn, &mut features);
                }
                relu(&mut features);
            }
        }
        for tr in &traces {
            features.extend_from_slice(&tr.hidden);
        }

        let k = self.config.head_hidden;
        let head = &mut self.head;
        let mut act = vec![T::zero(); total * k];
        for (row, f) in act.chunks_exact_mut(k).zip(features.chunks_exact(n)) {
            gemv_acc(row, &head.w1.value, f);
        }
        let head_bn = if training {
            Some(bn_train(&mut head.bn1, &mut act, track))
        } else {
            bn_eval(&head.bn1, &mut act);
            None
        };
        relu(&mut act);
        let scale = T::of(self.config.output_scale);
        let b2 = head.b2.value[0];
        let mut out = Vec::with_capacity(inputs.len());
        let mut rows = act.chunks_exact(k);
        for &t in &frames {
            out.push((0..t).map(|_| (dot(&head.w2.value, rows.next().unwrap()) + b2) * scale).collect());
        }
        if let Some(head_bn) = head_bn {
            self.cache = Some(BatchCache { frames, traces, fc_bn, features, head_bn, head_act: act });
        }
        Ok(out)
    }

    /// Accumulates dL/dθ into every parameter's gradient, given dL/dĤ (per
    /// frame, mm) for the clips of the preceding training-mode forward pass.
    /// Consumes the cached activations.
    pub fn backward(&mut self, inputs: &[&[T]], loss_grad: &[Vec<T>]) -> Result<(), ModelError> {
        let cache = self.cache.take().ok_or(ModelError::NoForwardCache)?;
        let frames = self.frames_of(inputs)?;
        if frames != cache.frames {
            return Err(ModelError::Shape {
                what: "clip frames vs cached forward".into(),
                expected: cache.frames.iter().sum(),
                got: frames.iter().sum(),
            });
        }
        if loss_grad.len() != frames.len() {
            return Err(ModelError::Shape { what: "loss gradient clips".into(), expected: frames.len(), got: loss_grad.len() });
        }
        for (g, &t) in loss_grad.iter().zip(&frames) {
            if g.len() != t {
                return Err(ModelError::Shape { what: "loss gradient frames".into(), expected: t, got: g.len() });
            }
        }
        let (n, k) = (self.config.hidden, self.config.head_hidden);
        let scale = T::of(self.config.output_scale);
        let head = &mut self.head;

        let mut d_act = vec![T::zero(); cache.head_act.len()];
        let mut rows = cache.head_act.chunks_exact(k).zip(d_act.chunks_exact_mut(k));
        for &g in loss_grad.iter().flatten() {
            let (a, da) = rows.next().unwrap();
            let d_out = g * scale;
            head.b2.grad[0] += d_out;
            for j in 0..k {
                head.w2.grad[j] += d_out * a[j];
                da[j] = if a[j] > T::zero() { d_out * head.w2.value[j] } else { T::zero() };
            }
        }
        bn_backward(&mut head.bn1, &cache.head_bn, &mut d_act);
        let mut d_feat = vec![T::zero(); cache.features.len()];
        for ((du, f), df) in d_act.chunks_exact(k).zip(cache.features.chunks_exact(n)).zip(d_feat.chunks_exact_mut(n)) {
            outer_acc(&mut head.w1.grad, du, f);
            gemv_t_acc(df, &head.w1.value, du);
        }

        let offsets: Vec<usize> = frames
            .iter()
            .scan(0, |acc, &t| {
                let o = *acc;
                *acc += t * n;
                Some(o)
            })
            .collect();
        let clip_grads = |i: usize, t: usize| &d_feat[offsets[i]..offsets[i] + t * n];
        match &mut self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => {
                let cell = LstmWeights { w_ih: &w_ih.value, w_hh: &w_hh.value, bias: &bias.value, hidden: n };
                let grads: Vec<Vec<Vec<T>>> = (0..inputs.len())
                    .into_par_iter()
                    .map(|i| cell.backward(inputs[i], frames[i], &cache.traces[i], clip_grads(i, frames[i])))
                    .collect();
                reduce_into([&mut w_ih.grad, &mut w_hh.grad, &mut bias.grad], grads);
            }
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => {
                let cell = GruWeights {
                    w_ih: &w_ih.value,
                    w_hh: &w_hh.value,
                    b_ih: &b_ih.value,
                    b_hh: &b_hh.value,
                    hidden: n,
                };
                let grads: Vec<Vec<Vec<T>>> = (0..inputs.len())
                    .into_par_iter()
                    .map(|i| cell.backward(inputs[i], frames[i], &cache.traces[i], clip_grads(i, frames[i])))
                    .collect();
                reduce_into([&mut w_ih.grad, &mut w_hh.grad, &mut b_ih.grad, &mut b_hh.grad], grads);
            }
            Encoder::Fc { w, bn } => {
                for (df, f) in d_feat.iter_mut().zip(&cache.features) {
                    if *f <= T::zero() {
                        *df = T::zero();
                    }
                }
                let bn_cache = cache.fc_bn.as_ref().ok_or(ModelError::NoForwardCache)?;
                bn_backward(bn, bn_cache, &mut d_feat);
                let i = self.config.input;
                let xs = inputs.iter().flat_map(|x| x.chunks_exact(i));
                for (dz, x) in d_feat.chunks_exact(n).zip(xs) {
                    outer_acc(&mut w.grad, dz, x);
                }
            }
        }
        Ok(())
    }

    /// Signs of every rectifier input from the cached forward pass.
    pub(crate) fn cached_relu_pattern(&self) -> Option<Vec<bool>> {
        self.cache.as_ref().map(|c| c.relu_pattern())
    }

    /// Drops any cached activations.
    pub fn clear_cache(&mut self) {
        self.cache = None;
    }
}

/// Adds per-clip gradients into the accumulators in clip order, so the
/// result does not depend on how the clips were scheduled.
fn reduce_into<T: Scalar, const P: usize>(targets: [&mut Vec<T>; P], grads: Vec<Vec<Vec<T>>>) {
    let mut targets = targets;
    for clip in grads {
        for (dst, src) in targets.iter_mut().zip(clip) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}
