use rand::distr::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::network::BatchCache;
use crate::Scalar;

/// Which unit encodes the spectrogram slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderKind {
    Lstm,
    Gru,
    /// Feed-forward baseline (AudioFC): no recurrence.
    Fc,
}

impl EncoderKind {
    pub const ALL: [EncoderKind; 3] = [EncoderKind::Lstm, EncoderKind::Gru, EncoderKind::Fc];

    pub fn code(self) -> u32 {
        match self {
            EncoderKind::Lstm => 0,
            EncoderKind::Gru => 1,
            EncoderKind::Fc => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == code)
    }

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Lstm => "lstm",
            EncoderKind::Gru => "gru",
            EncoderKind::Fc => "fc",
        }
    }

    /// Gate blocks stacked in the input/recurrent weight matrices.
    pub fn gates(self) -> usize {
        match self {
            EncoderKind::Lstm => 4,
            EncoderKind::Gru => 3,
            EncoderKind::Fc => 1,
        }
    }
}

impl std::str::FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(EncoderKind::Lstm),
            "gru" => Ok(EncoderKind::Gru),
            "fc" => Ok(EncoderKind::Fc),
            other => Err(format!("unknown encoder kind `{other}` (lstm, gru, fc)")),
        }
    }
}

impl std::fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: EncoderKind,
    pub input: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    /// Network outputs are multiplied by this to give millimetres.
    pub output_scale: f64,
}

impl ModelConfig {
    pub const DEFAULT_HIDDEN: usize = 256;
    pub const DEFAULT_HEAD_HIDDEN: usize = 64;
    pub const DEFAULT_OUTPUT_SCALE: f64 = 100.0;

    pub fn new(kind: EncoderKind) -> Self {
        Self {
            kind,
            input: crate::dsp::BINS,
            hidden: Self::DEFAULT_HIDDEN,
            head_hidden: Self::DEFAULT_HEAD_HIDDEN,
            output_scale: Self::DEFAULT_OUTPUT_SCALE,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_head_hidden(mut self, head_hidden: usize) -> Self {
        self.head_hidden = head_hidden;
        self
    }

    pub fn with_input(mut self, input: usize) -> Self {
        self.input = input;
        self
    }
}

/// A trainable tensor and its gradient accumulator (same shape).
#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<T>,
    pub grad: Vec<T>,
}

impl<T: Scalar> Param<T> {
    pub fn zeros(name: impl Into<String>, shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { name: name.into(), shape: shape.to_vec(), value: vec![T::zero(); n], grad: vec![T::zero(); n] }
    }

    pub fn filled(name: impl Into<String>, shape: &[usize], v: T) -> Self {
        let mut p = Self::zeros(name, shape);
        p.value.iter_mut().for_each(|x| *x = v);
        p
    }

    pub fn uniform(name: impl Into<String>, shape: &[usize], bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let mut p = Self::zeros(name, shape);
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        p.value.iter_mut().for_each(|x| *x = T::of(dist.sample(rng)));
        p
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = T::zero());
    }
}

/// Batch normalization over the feature axis with exponential running
/// statistics (momentum 0.1, unbiased running variance).
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    /// Number of training batches folded into the running statistics.
    pub count: u64,
    pub momentum: T,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub const MOMENTUM: f64 = 0.1;
    pub const EPS: f64 = 1e-5;

    pub fn new(prefix: &str, features: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{prefix}.gamma"), &[features], T::one()),
            beta: Param::zeros(format!("{prefix}.beta"), &[features]),
            running_mean: vec![T::zero(); features],
            running_var: vec![T::one(); features],
            count: 0,
            momentum: T::of(Self::MOMENTUM),
            eps: T::of(Self::EPS),
        }
    }

    pub fn name(&self) -> &str {
        self.gamma.name.trim_end_matches(".gamma")
    }

    pub fn features(&self) -> usize {
        self.gamma.len()
    }
}

/// Encoder weights. Gate order follows the common convention:
/// LSTM `[input, forget, cell, output]`, GRU `[reset, update, new]`.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder<T> {
    Lstm { w_ih: Param<T>, w_hh: Param<T>, bias: Param<T> },
    Gru { w_ih: Param<T>, w_hh: Param<T>, b_ih: Param<T>, b_hh: Param<T> },
    /// Affine (no bias, batch norm follows) → batch norm → ReLU.
    Fc { w: Param<T>, bn: BatchNorm<T> },
}

/// Two-layer MLP: affine → batch norm → ReLU → affine → scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Head<T> {
    pub w1: Param<T>,
    pub bn1: BatchNorm<T>,
    pub w2: Param<T>,
    pub b2: Param<T>,
}

/// Spectrogram normalization constants learned on the training set and
/// carried alongside the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub mean: f64,
    pub std: f64,
}

impl Default for InputNorm {
    fn default() -> Self {
        Self { mean: 0.0, std: 1.0 }
    }
}

/// All trainable tensors of encoder and height predictor, plus batch-norm
/// running statistics and the input normalization.
#[derive(Debug)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    pub encoder: Encoder<T>,
    pub head: Head<T>,
    pub input_norm: InputNorm,
    pub(crate) cache: Option<BatchCache<T>>,
}

impl<T: Scalar> Clone for ModelParams<T> {
    fn clone(&self) -> Self {
        Self {
            config: self.config,
            encoder: self.encoder.clone(),
            head: self.head.clone(),
            input_norm: self.input_norm,
            cache: None,
        }
    }
}

impl<T: Scalar> PartialEq for ModelParams<T> {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config
            && self.encoder == other.encoder
            && self.head == other.head
            && self.input_norm == other.input_norm
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Uniform `±1/√fan_in` initialization; LSTM forget-gate bias starts at 1.
    pub fn init(config: ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (i, h, k) = (config.input, config.hidden, config.head_hidden);
        let bi = 1.0 / (i as f64).sqrt();
        let bh = 1.0 / (h as f64).sqrt();
        let encoder = match config.kind {
            EncoderKind::Lstm => {
                let w_ih = Param::uniform("encoder.w_ih", &[4 * h, i], bi, &mut rng);
                let w_hh = Param::uniform("encoder.w_hh", &[4 * h, h], bh, &mut rng);
                let mut bias = Param::uniform("encoder.bias", &[4 * h], bh, &mut rng);
                bias.value[h..2 * h].iter_mut().for_each(|b| *b = T::one());
                Encoder::Lstm { w_ih, w_hh, bias }
            }
            EncoderKind::Gru => Encoder::Gru {
                w_ih: Param::uniform("encoder.w_ih", &[3 * h, i], bi, &mut rng),
                w_hh: Param::uniform("encoder.w_hh", &[3 * h, h], bh, &mut rng),
                b_ih: Param::uniform("encoder.b_ih", &[3 * h], bh, &mut rng),
                b_hh: Param::uniform("encoder.b_hh", &[3 * h], bh, &mut rng),
            },
            EncoderKind::Fc => Encoder::Fc {
                w: Param::uniform("encoder.w", &[h, i], bi, &mut rng),
                bn: BatchNorm::new("encoder.bn", h),
            },
        };
        let bk = 1.0 / (k as f64).sqrt();
        let head = Head {
            w1: Param::uniform("head.w1", &[k, h], bh, &mut rng),
            bn1: BatchNorm::new("head.bn1", k),
            w2: Param::uniform("head.w2", &[1, k], bk, &mut rng),
            b2: Param::uniform("head.b2", &[1], bk, &mut rng),
        };
        Self { config, encoder, head, input_norm: InputNorm::default(), cache: None }
    }

    pub fn kind(&self) -> EncoderKind {
        self.config.kind
    }

    /// Trainable tensors in a fixed order (encoder first, then head).
    pub fn params(&self) -> Vec<&Param<T>> {
        let mut out: Vec<&Param<T>> = match &self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => vec![w_ih, w_hh, bias],
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => vec![w_ih, w_hh, b_ih, b_hh],
            Encoder::Fc { w, bn } => vec![w, &bn.gamma, &bn.beta],
        };
        let h = &self.head;
        out.extend([&h.w1, &h.bn1.gamma, &h.bn1.beta, &h.w2, &h.b2]);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = match &mut self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => vec![w_ih, w_hh, bias],
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => vec![w_ih, w_hh, b_ih, b_hh],
            Encoder::Fc { w, bn } => vec![w, &mut bn.gamma, &mut bn.beta],
        };
        let h = &mut self.head;
        out.extend([&mut h.w1, &mut h.bn1.gamma, &mut h.bn1.beta, &mut h.w2, &mut h.b2]);
        out
    }

    pub fn batch_norms(&self) -> Vec<&BatchNorm<T>> {
        let mut out = Vec::new();
        if let Encoder::Fc { bn, .. } = &self.encoder {
            out.push(bn);
        }
        out.push(&self.head.bn1);
        out
    }

    pub fn batch_norms_mut(&mut self) -> Vec<&mut BatchNorm<T>> {
        let mut out = Vec::new();
        if let Encoder::Fc { bn, .. } = &mut self.encoder {
            out.push(bn);
        }
        out.push(&mut self.head.bn1);
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    /// Converts to another precision (weights, statistics and config).
    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        fn p<T: Scalar, U: Scalar>(x: &Param<T>) -> Param<U> {
            Param {
                name: x.name.clone(),
                shape: x.shape.clone(),
                value: x.value.iter().map(|v| U::of(v.f64())).collect(),
                grad: x.grad.iter().map(|v| U::of(v.f64())).collect(),
            }
        }
        fn bn<T: Scalar, U: Scalar>(b: &BatchNorm<T>) -> BatchNorm<U> {
            BatchNorm {
                gamma: p(&b.gamma),
                beta: p(&b.beta),
                running_mean: b.running_mean.iter().map(|v| U::of(v.f64())).collect(),
                running_var: b.running_var.iter().map(|v| U::of(v.f64())).collect(),
                count: b.count,
                momentum: U::of(b.momentum.f64()),
                eps: U::of(b.eps.f64()),
            }
        }
        let encoder = match &self.encoder {
            Encoder::Lstm { w_ih, w_hh, bias } => Encoder::Lstm { w_ih: p(w_ih), w_hh: p(w_hh), bias: p(bias) },
            Encoder::Gru { w_ih, w_hh, b_ih, b_hh } => {
                Encoder::Gru { w_ih: p(w_ih), w_hh: p(w_hh), b_ih: p(b_ih), b_hh: p(b_hh) }
            }
            Encoder::Fc { w, bn: b } => Encoder::Fc { w: p(w), bn: bn(b) },
        };
        let h = &self.head;
        ModelParams {
            config: self.config,
            encoder,
            head: Head { w1: p(&h.w1), bn1: bn(&h.bn1), w2: p(&h.w2), b2: p(&h.b2) },
            input_norm: self.input_norm,
            cache: None,
        }
    }
}

/// Recurrent state carried between encoder steps.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenState<T> {
    /// Recurrent features.
    pub h: Vec<T>,
    /// LSTM cell state; `None` for GRU and FC.
    pub c: Option<Vec<T>>,
}

impl<T: Scalar> HiddenState<T> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Self {
            h: vec![T::zero(); config.hidden],
            c: (config.kind == EncoderKind::Lstm).then(|| vec![T::zero(); config.hidden]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.h.iter().chain(self.c.iter().flatten()).all(|v| v.is_finite())
    }
}
