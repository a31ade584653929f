use pouring_core::acoustics::{simulate_pour, ContainerSpec, PourProfile};
use pouring_core::dsp::Spectrogram;
use pouring_core::error::TrainError;
use pouring_core::model::{EncoderKind, ForwardMode};
use pouring_core::training::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..100.0)).collect()
}

#[test]
fn height_loss_matches_scalar_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..100 {
        let n = rng.random_range(1..300);
        let (p, t) = (rand_vec(&mut rng, n), rand_vec(&mut rng, n));
        let mut s = 0.0;
        for i in 0..n {
            s += (p[i] - t[i]) * (p[i] - t[i]);
        }
        assert!((loss_height(&p, &t).unwrap() - s / n as f64).abs() < 1e-12 * (1.0 + s / n as f64));
    }
}

#[test]
fn mono_loss_matches_pairwise_hinge() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let n = rng.random_range(0..50);
        let p = rand_vec(&mut rng, n);
        let mut s = 0.0;
        for i in 1..p.len() {
            if p[i] > p[i - 1] {
                s += p[i] - p[i - 1];
            }
        }
        assert!((loss_mono(&p) - s).abs() < 1e-12 * (1.0 + s));
    }
}

#[test]
fn total_loss_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (p, t) = (rand_vec(&mut rng, 20), rand_vec(&mut rng, 20));
        assert_eq!(loss_total(&p, &t, 0.0).unwrap(), loss_height(&p, &t).unwrap());
        let mut dec = p.clone();
        dec.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(loss_total(&dec, &t, 0.37).unwrap(), loss_height(&dec, &t).unwrap());
    }
    let v: f64 = loss_total(&[50.0, 52.0, 51.0], &[50.0; 3], 0.01).unwrap();
    assert!((v - 1.6867).abs() < 1e-4);
    assert!(matches!(loss_total(&[1.0, 2.0], &[1.0], 0.01), Err(TrainError::LengthMismatch { .. })));
}

proptest! {
    #[test]
    fn mono_is_zero_iff_non_increasing(v in prop::collection::vec(-100.0f64..100.0, 2..40)) {
        let non_increasing = v.windows(2).all(|w| w[1] <= w[0]);
        prop_assert_eq!(loss_mono(&v) == 0.0, non_increasing);
    }

    #[test]
    fn total_gradient_matches_finite_differences(
        p in prop::collection::vec(0.0f64..100.0, 2..30),
        alpha in 0.0f64..1.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rand_vec(&mut rng, p.len());
        // stay away from hinge kinks
        prop_assume!(p.windows(2).all(|w| (w[1] - w[0]).abs() > 1e-3));
        let g = loss_total_grad(&p, &t, alpha).unwrap();
        let eps = 1e-5;
        for i in 0..p.len() {
            let mut a = p.clone();
            let mut b = p.clone();
            a[i] += eps;
            b[i] -= eps;
            let fd = (loss_total(&a, &t, alpha).unwrap() - loss_total(&b, &t, alpha).unwrap()) / (2.0 * eps);
            prop_assert!((fd - g[i]).abs() <= 1e-6 * (1.0 + g[i].abs()), "i={} fd={} g={}", i, fd, g[i]);
        }
    }
}

#[test]
fn clip_starts_are_uniform() {
    // 8 s at 16 kHz: starts range over [0, 64000]
    let len = 8 * 16000;
    let starts = clip_starts(len, CLIP_SAMPLES, 10_000, 11).unwrap();
    let span = (len - CLIP_SAMPLES + 1) as f64;
    let bins = 10;
    let mut counts = vec![0usize; bins];
    for &s in &starts {
        assert!(s <= len - CLIP_SAMPLES);
        counts[((s as f64 / span) * bins as f64) as usize] += 1;
    }
    let expected = 10_000.0 / bins as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, p = 0.001
    assert!(chi2 < 27.88, "chi2 {chi2} counts {counts:?}");
}

#[test]
fn clip_labels_follow_constant_flow_trace() {
    let glass = ContainerSpec::builtin("glass").unwrap();
    let profile = PourProfile::constant(20.0, 8.0, 5.0);
    let (audio, trace) = simulate_pour(&glass, &profile, 16000, 4).unwrap();
    let clips = sample_clips(&trace, &audio, "c", 1.0, 9).unwrap();
    assert_eq!(clips.len(), 8);
    let area = glass.area_mm2();
    for c in &clips {
        assert!((0.0..=4.0).contains(&c.clip_start));
        assert_eq!(c.spectrogram.shape(), (257, 251));
        assert!(c.labels.windows(2).all(|w| w[1] <= w[0]));
        for (j, &l) in c.labels.iter().enumerate() {
            let t = c.clip_start + j as f64 * 0.016;
            let closed = glass.total_height_mm - 5.0 - 20_000.0 * t / area;
            assert!((l as f64 - closed).abs() < 1e-3, "frame {j}: {l} vs {closed}");
        }
    }
    let short = &audio[..64000];
    let one = sample_clips(&trace, short, "c", 3.0, 1).unwrap();
    assert_eq!(one.len(), 12);
    assert!(one.iter().all(|c| c.clip_start == 0.0 && c.spectrogram == one[0].spectrogram));
    assert!(matches!(sample_clips(&trace, &audio[..63000], "c", 1.0, 1), Err(TrainError::RecordingTooShort { .. })));
}

fn small_dataset(pours: usize, seed: u64) -> Vec<ClipSample> {
    let plans = plan_pours(&ContainerSpec::training_set(), pours, &ProfileRanges::default(), seed);
    let recs: Vec<Recording> = plans
        .iter()
        .map(|p| {
            let (audio, trace) = simulate_pour(&p.container, &p.profile, 16000, p.seed).unwrap();
            Recording { trace_id: p.trace_id.clone(), container_name: p.container.name.clone(), audio, trace }
        })
        .collect();
    clips_from_recordings(&recs, 0.5, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn split_never_shares_recordings(ids in prop::collection::vec(0u8..20, 1..80), frac in 0.05f64..0.9, seed in 0u64..100) {
        let clips: Vec<ClipSample> = ids
            .iter()
            .map(|i| ClipSample {
                spectrogram: Spectrogram::from_frames(1, 1, vec![0.0]).unwrap(),
                labels: vec![0.0],
                source_trace_id: format!("t{i}"),
                clip_start: 0.0,
            })
            .collect();
        let s = Split::by_trace(&clips, frac, seed);
        prop_assert!(!s.val.is_empty());
        for v in &s.val {
            prop_assert!(!s.train.contains(v));
        }
        let distinct: std::collections::BTreeSet<_> = ids.iter().collect();
        prop_assert_eq!(s.train.len() + s.val.len(), distinct.len());
    }
}

fn quick(kind: EncoderKind, seed: u64, epochs: usize) -> TrainConfig {
    TrainConfig { kind, hidden: 8, head_hidden: 8, epochs, seed, batch_size: 4, val_fraction: 0.25, ..Default::default() }
}

#[test]
fn training_is_reproducible() {
    let clips = small_dataset(6, 21);
    let cfg = quick(EncoderKind::Gru, 3, 2);
    let a = train::<f32>(&clips, &cfg, &mut |_| {}).unwrap();
    let b = train::<f32>(&clips, &cfg, &mut |_| {}).unwrap();
    assert_eq!(a.model, b.model);
    let strip = |l: &[EpochLog]| l.iter().map(|r| (r.train_loss, r.val_loss, r.val_mono_loss)).collect::<Vec<_>>();
    assert_eq!(strip(&a.log), strip(&b.log));
    assert!(a.split.val.iter().all(|v| !a.split.train.contains(v)));
}

#[test]
fn first_epoch_reduces_training_loss() {
    let clips = small_dataset(8, 31);
    let mut improved = 0;
    for seed in 0..10 {
        let cfg = TrainConfig { epochs: 1, learning_rate: 1e-2, ..quick(EncoderKind::Lstm, seed, 1) };
        let split = Split::by_trace(&clips, cfg.val_fraction, cfg.seed);
        let train_clips: Vec<&ClipSample> =
            clips.iter().filter(|c| split.train.contains(&c.source_trace_id)).collect();
        let norm = fit_normalization(&train_clips);
        let data = PreparedClips::<f32>::new(&train_clips, &norm);
        let mut fresh = pouring_core::model::ModelParams::<f32>::init(cfg.model_config(), seed);
        let before = evaluate_losses(&mut fresh, &data, cfg.alpha, ForwardMode::Train { track_stats: false }, 64).unwrap();
        let mut trained = train::<f32>(&clips, &cfg, &mut |_| {}).unwrap().model;
        let after = evaluate_losses(&mut trained, &data, cfg.alpha, ForwardMode::Train { track_stats: false }, 64).unwrap();
        if after.total < before.total {
            improved += 1;
        }
    }
    assert!(improved >= 9, "{improved}/10");
}

#[test]
fn non_finite_input_aborts_with_batch_id() {
    let mut clips = small_dataset(4, 41);
    for c in clips.iter_mut() {
        c.spectrogram.as_mut_slice()[0] = f32::NAN;
    }
    let err = train::<f32>(&clips, &quick(EncoderKind::Fc, 0, 1), &mut |_| {}).unwrap_err();
    assert!(matches!(err, TrainError::NonFiniteLoss { epoch: 1, batch: 0 }), "{err}");
}

#[test]
fn memorizes_a_single_clip() {
    let clips = small_dataset(1, 51);
    let one = vec![clips[0].clone()];
    let cfg = TrainConfig {
        kind: EncoderKind::Gru,
        hidden: 16,
        head_hidden: 16,
        epochs: 600,
        batch_size: 1,
        val_fraction: 0.0,
        learning_rate: 1e-2,
        ..Default::default()
    };
    let out = train::<f32>(&one, &cfg, &mut |_| {}).unwrap();
    let last = out.log.last().unwrap().train_loss;
    assert!(last < 0.1, "final training loss {last}");
}

#[test]
fn rejects_bad_configs() {
    let clips = small_dataset(2, 61);
    let bad = TrainConfig { alpha: -1.0, ..Default::default() };
    assert!(matches!(train::<f32>(&clips, &bad, &mut |_| {}), Err(TrainError::InvalidConfig(_))));
    let bad = TrainConfig { clip_seconds: 3.0, ..Default::default() };
    assert!(matches!(train::<f32>(&clips, &bad, &mut |_| {}), Err(TrainError::InvalidConfig(_))));
    assert!(matches!(train::<f32>(&[], &TrainConfig::default(), &mut |_| {}), Err(TrainError::EmptyDataset)));
}
