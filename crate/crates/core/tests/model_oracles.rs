use pouring_core::dsp::Spectrogram;
use pouring_core::error::ModelError;
use pouring_core::model::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn randn(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn small(kind: EncoderKind) -> ModelConfig {
    ModelConfig::new(kind).with_input(12).with_hidden(6).with_head_hidden(5)
}

/// Gives every batch norm plausible running statistics.
fn prime_stats(m: &mut ModelParams<f64>, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for bn in m.batch_norms_mut() {
        for k in 0..bn.features() {
            bn.running_mean[k] = rng.random_range(-0.3..0.3);
            bn.running_var[k] = rng.random_range(0.5..2.0);
        }
        bn.count = 1;
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Element-by-element LSTM step written from the textbook equations.
fn lstm_oracle(m: &ModelParams<f64>, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let Encoder::Lstm { w_ih, w_hh, bias } = &m.encoder else { unreachable!() };
    let (n, i_dim) = (h.len(), x.len());
    let pre = |row: usize| {
        let mut s = bias.value[row];
        for j in 0..i_dim {
            s += w_ih.value[row * i_dim + j] * x[j];
        }
        for j in 0..n {
            s += w_hh.value[row * n + j] * h[j];
        }
        s
    };
    let mut h2 = vec![0.0; n];
    let mut c2 = vec![0.0; n];
    for k in 0..n {
        let i = sigmoid(pre(k));
        let f = sigmoid(pre(n + k));
        let g = pre(2 * n + k).tanh();
        let o = sigmoid(pre(3 * n + k));
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

fn gru_oracle(m: &ModelParams<f64>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let Encoder::Gru { w_ih, w_hh, b_ih, b_hh } = &m.encoder else { unreachable!() };
    let (n, i_dim) = (h.len(), x.len());
    let gi = |row: usize| b_ih.value[row] + (0..i_dim).map(|j| w_ih.value[row * i_dim + j] * x[j]).sum::<f64>();
    let gh = |row: usize| b_hh.value[row] + (0..n).map(|j| w_hh.value[row * n + j] * h[j]).sum::<f64>();
    (0..n)
        .map(|k| {
            let r = sigmoid(gi(k) + gh(k));
            let z = sigmoid(gi(n + k) + gh(n + k));
            let cand = (gi(2 * n + k) + r * gh(2 * n + k)).tanh();
            (1.0 - z) * cand + z * h[k]
        })
        .collect()
}

#[test]
fn zero_lstm_weights_give_zero_state() {
    let mut m = ModelParams::<f64>::init(small(EncoderKind::Lstm), 0);
    for p in m.params_mut() {
        p.value.iter_mut().for_each(|v| *v = 0.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let s = m.encoder_step(&randn(&mut rng, 12), &HiddenState::zeros(&m.config)).unwrap();
    assert!(s.h.iter().chain(s.c.as_ref().unwrap()).all(|&v| v == 0.0));
}

#[test]
fn gru_saturated_update_gate_copies_state() {
    let mut m = ModelParams::<f64>::init(small(EncoderKind::Gru), 2);
    if let Encoder::Gru { b_ih, .. } = &mut m.encoder {
        b_ih.value[6..12].iter_mut().for_each(|b| *b = 50.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let state = HiddenState { h: randn(&mut rng, 6), c: None };
    let next = m.encoder_step(&randn(&mut rng, 12), &state).unwrap();
    for (a, b) in next.h.iter().zip(&state.h) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn cell_steps_match_scalar_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..5 {
        let lstm = ModelParams::<f64>::init(small(EncoderKind::Lstm), seed);
        let gru = ModelParams::<f64>::init(small(EncoderKind::Gru), seed);
        let x = randn(&mut rng, 12);
        let h = randn(&mut rng, 6);
        let c = randn(&mut rng, 6);
        let got = lstm.encoder_step(&x, &HiddenState { h: h.clone(), c: Some(c.clone()) }).unwrap();
        let (eh, ec) = lstm_oracle(&lstm, &x, &h, &c);
        for (a, b) in got.h.iter().zip(&eh).chain(got.c.as_ref().unwrap().iter().zip(&ec)) {
            assert!((a - b).abs() < 1e-12);
        }
        let got = gru.encoder_step(&x, &HiddenState { h: h.clone(), c: None }).unwrap();
        for (a, b) in got.h.iter().zip(gru_oracle(&gru, &x, &h)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_errors() {
    let m = ModelParams::<f64>::init(small(EncoderKind::Lstm), 0);
    let z = HiddenState::zeros(&m.config);
    assert!(matches!(m.encoder_step(&[0.0; 11], &z), Err(ModelError::Shape { .. })));
    let no_cell = HiddenState { h: vec![0.0; 6], c: None };
    assert!(matches!(m.encoder_step(&[0.0; 12], &no_cell), Err(ModelError::Shape { .. })));
}

#[test]
fn gradients_match_finite_differences() {
    let start = std::time::Instant::now();
    let mut worst: f64 = 0.0;
    for kind in EncoderKind::ALL {
        for frames in [1, 3, 7] {
            for seed in 0..5 {
                let r = gradient_check(small_config(kind, 16), frames, seed).unwrap();
                assert!(r.max_rel_error <= 1e-4, "{r:?}");
                assert!(r.checked > 0);
                worst = worst.max(r.max_rel_error);
            }
        }
        // Full spectrogram width, three frames.
        let r = gradient_check(small_config(kind, 257), 3, 42).unwrap();
        assert!(r.max_rel_error <= 1e-4, "{r:?}");
        assert_eq!(r.kinks, 0);
    }
    eprintln!("max relative error {worst:.2e} in {:?}", start.elapsed());
}

fn batch(rng: &mut ChaCha8Rng, input: usize, frames: &[usize]) -> Vec<Vec<f64>> {
    frames.iter().map(|&t| randn(rng, t * input)).collect()
}

#[test]
fn zero_loss_gradient_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in EncoderKind::ALL {
        let mut m = ModelParams::<f64>::init(small(kind), 1);
        let clips = batch(&mut rng, 12, &[4, 2]);
        let inputs: Vec<&[f64]> = clips.iter().map(|c| c.as_slice()).collect();
        m.forward_batch(&inputs, ForwardMode::Train { track_stats: true }).unwrap();
        m.backward(&inputs, &[vec![0.0; 4], vec![0.0; 2]]).unwrap();
        assert!(m.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
    }
}

#[test]
fn backward_is_linear_in_the_loss_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for kind in EncoderKind::ALL {
        let mut m = ModelParams::<f64>::init(small(kind), 2);
        let clips = batch(&mut rng, 12, &[3, 5]);
        let inputs: Vec<&[f64]> = clips.iter().map(|c| c.as_slice()).collect();
        let g1 = vec![randn(&mut rng, 3), randn(&mut rng, 5)];
        let g2 = vec![randn(&mut rng, 3), randn(&mut rng, 5)];
        let sum: Vec<Vec<f64>> = g1.iter().zip(&g2).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        let mut grads = Vec::new();
        for g in [&g1, &g2, &sum] {
            m.zero_grad();
            m.forward_batch(&inputs, ForwardMode::Train { track_stats: false }).unwrap();
            m.backward(&inputs, g).unwrap();
            grads.push(m.params().iter().flat_map(|p| p.grad.clone()).collect::<Vec<f64>>());
        }
        for ((a, b), s) in grads[0].iter().zip(&grads[1]).zip(&grads[2]) {
            assert!((a + b - s).abs() <= 1e-10 * (1.0 + s.abs()));
        }
    }
}

#[test]
fn backward_without_forward_is_an_error() {
    let mut m = ModelParams::<f64>::init(small(EncoderKind::Gru), 0);
    let x = vec![0.0; 12];
    assert!(matches!(m.backward(&[&x], &[vec![1.0]]), Err(ModelError::NoForwardCache)));
    m.forward_batch(&[&x], ForwardMode::Train { track_stats: false }).unwrap();
    m.backward(&[&x], &[vec![1.0]]).unwrap();
    assert!(matches!(m.backward(&[&x], &[vec![1.0]]), Err(ModelError::NoForwardCache)));
}

#[test]
fn untrained_statistics_are_rejected() {
    for kind in EncoderKind::ALL {
        let m = ModelParams::<f64>::init(small(kind), 0);
        let spec = Spectrogram::from_frames(12, 2, vec![0.5; 24]).unwrap();
        assert!(matches!(m.predict(&spec), Err(ModelError::UntrainedRunningStats(_))));
    }
}

#[test]
fn single_frame_prediction_is_head_of_one_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kind in EncoderKind::ALL {
        let mut m = ModelParams::<f64>::init(small(kind), 3);
        prime_stats(&mut m, 3);
        let x = randn(&mut rng, 12);
        let spec = Spectrogram::from_frames(12, 1, x.clone()).unwrap();
        let pred = m.predict(&spec).unwrap();
        let z = HiddenState::zeros(&m.config);
        let direct = m.predict_height(&m.encoder_step(&x, &z).unwrap().h).unwrap();
        assert_eq!(pred, vec![direct]);
    }
}

#[test]
fn batched_inference_matches_stepwise_prediction() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for kind in EncoderKind::ALL {
        let mut m = ModelParams::<f64>::init(small(kind), 4);
        prime_stats(&mut m, 4);
        let clips = batch(&mut rng, 12, &[6, 1, 3]);
        let inputs: Vec<&[f64]> = clips.iter().map(|c| c.as_slice()).collect();
        let out = m.forward_batch(&inputs, ForwardMode::Inference).unwrap();
        for (clip, o) in clips.iter().zip(&out) {
            let spec = Spectrogram::from_frames(12, clip.len() / 12, clip.clone()).unwrap();
            for (a, b) in m.predict(&spec).unwrap().iter().zip(o) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn fc_baseline_ignores_time() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut m = ModelParams::<f64>::init(small(EncoderKind::Fc), 5);
    prime_stats(&mut m, 5);
    let frame = randn(&mut rng, 12);
    let constant = Spectrogram::from_frames(12, 9, frame.repeat(9)).unwrap();
    let p = m.predict(&constant).unwrap();
    assert!(p.iter().all(|&v| v == p[0]));

    let frames: Vec<Vec<f64>> = (0..7).map(|_| randn(&mut rng, 12)).collect();
    let perm = [3, 0, 6, 1, 5, 2, 4];
    let a = m.predict(&Spectrogram::from_frames(12, 7, frames.concat()).unwrap()).unwrap();
    let shuffled: Vec<f64> = perm.iter().flat_map(|&i| frames[i].clone()).collect();
    let b = m.predict(&Spectrogram::from_frames(12, 7, shuffled).unwrap()).unwrap();
    for (j, &i) in perm.iter().enumerate() {
        assert_eq!(b[j], a[i]);
    }
}

#[test]
fn predictions_are_deterministic_and_stateless_across_calls() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for kind in EncoderKind::ALL {
        let mut m = ModelParams::<f64>::init(small(kind), 6);
        prime_stats(&mut m, 6);
        let s1 = Spectrogram::from_frames(12, 5, randn(&mut rng, 60)).unwrap();
        let s2 = Spectrogram::from_frames(12, 8, randn(&mut rng, 96)).unwrap();
        let (a1, a2) = (m.predict(&s1).unwrap(), m.predict(&s2).unwrap());
        let (b2, b1) = (m.predict(&s2).unwrap(), m.predict(&s1).unwrap());
        assert_eq!(a1, b1);
        assert_eq!(a2, b2);
        let again = m.clone();
        assert_eq!(again.predict(&s1).unwrap(), a1);
    }
}

#[test]
fn continuing_from_final_state_equals_one_long_sequence() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for kind in [EncoderKind::Lstm, EncoderKind::Gru] {
        let mut m = ModelParams::<f64>::init(small(kind), 7);
        prime_stats(&mut m, 7);
        let data = randn(&mut rng, 12 * 10);
        let whole = m.predict(&Spectrogram::from_frames(12, 10, data.clone()).unwrap()).unwrap();
        let first = m
            .predict_sequence(&Spectrogram::from_frames(12, 4, data[..48].to_vec()).unwrap(), &HiddenState::zeros(&m.config), true)
            .unwrap();
        assert_eq!(first.hidden.as_ref().unwrap().len(), 4);
        let rest = m
            .predict_sequence(&Spectrogram::from_frames(12, 6, data[48..].to_vec()).unwrap(), &first.final_state, false)
            .unwrap();
        let joined: Vec<f64> = first.heights_mm.iter().chain(&rest.heights_mm).copied().collect();
        assert_eq!(joined, whole);
    }
}

#[test]
fn gradients_do_not_depend_on_thread_count() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let clips = batch(&mut rng, 12, &[5, 5, 5, 5, 5, 5]);
    let g: Vec<Vec<f64>> = (0..6).map(|_| randn(&mut rng, 5)).collect();
    for kind in EncoderKind::ALL {
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let mut m = ModelParams::<f64>::init(small(kind), 8);
                let inputs: Vec<&[f64]> = clips.iter().map(|c| c.as_slice()).collect();
                m.forward_batch(&inputs, ForwardMode::Train { track_stats: true }).unwrap();
                m.backward(&inputs, &g).unwrap();
                m.params().iter().flat_map(|p| p.grad.clone()).collect::<Vec<f64>>()
            })
        };
        let one = run(1);
        assert_eq!(one, run(4));
    }
}

#[test]
fn lstm_settles_on_constant_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut m = ModelParams::<f64>::init(ModelConfig::new(EncoderKind::Lstm).with_input(12).with_hidden(16), 9);
    prime_stats(&mut m, 9);
    let frame = randn(&mut rng, 12);
    let p = m.predict(&Spectrogram::from_frames(12, 200, frame.repeat(200)).unwrap()).unwrap();
    let steps: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let early = steps[20..40].iter().cloned().fold(0.0, f64::max);
    let late = steps[180..].iter().cloned().fold(0.0, f64::max);
    assert!(late < early.max(1e-12) && late < 1e-6, "early {early:e} late {late:e}");
}

#[test]
fn checkpoint_file_roundtrip_keeps_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let mut m = ModelParams::<f32>::init(ModelConfig::new(EncoderKind::Gru).with_hidden(16), 3);
    for bn in m.batch_norms_mut() {
        bn.count = 4;
    }
    m.input_norm = InputNorm { mean: 1.5, std: 0.25 };
    save_checkpoint(&m, &path).unwrap();
    let back: ModelParams<f32> = load_checkpoint(&path).unwrap();
    assert_eq!(back, m);
    let spec = Spectrogram::from_frames(257, 3, vec![0.1f32; 771]).unwrap();
    assert_eq!(back.predict(&spec).unwrap(), m.predict(&spec).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]
    #[test]
    fn states_stay_finite(seed in 0u64..1000, scale in 0.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for kind in EncoderKind::ALL {
            let mut m = ModelParams::<f64>::init(small(kind), seed);
            prime_stats(&mut m, seed);
            let mut s = HiddenState::zeros(&m.config);
            for _ in 0..20 {
                let x: Vec<f64> = randn(&mut rng, 12).iter().map(|v| v * scale).collect();
                s = m.encoder_step(&x, &s).unwrap();
                prop_assert!(s.is_finite());
            }
        }
    }
}
