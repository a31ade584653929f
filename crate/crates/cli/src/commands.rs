use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pouring_core::control::{
    episode_profile, latency_summary, run_closed_loop, ControlConfig, HeightEstimator, LatencySummary, ModelEstimator,
    OracleEstimator, PourEpisodeResult,
};
use pouring_core::eval::{compare_variants, write_report, EvalMeta};
use pouring_core::model::{
    gradient_check, gradient_check_corrupted, load_checkpoint, save_checkpoint, small_config, GradCheckReport,
    ModelParams,
};
use pouring_core::training::{
    clips_from_recordings, load_recordings, plan_pours, synthesize_dataset, train, write_train_log, ProfileRanges,
    Split,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::{Command, VERSION};

pub fn dispatch(command: &Command, config: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&config.out).map_err(CliError::io(format!("creating {}", config.out.display())))?;
    match command {
        Command::Synth(_) => synth(config),
        Command::Train(_) => train_cmd(config),
        Command::Eval(_) => eval(config),
        Command::Pour(_) => pour(config),
        Command::Gradcheck(_) => gradcheck(config),
    }
}

#[derive(Serialize)]
struct Meta<'a> {
    command: &'a str,
    version: &'a str,
    config: &'a RunConfig,
}

/// `meta.json` plus a `config.toml` that reruns the command via `--config`.
fn write_meta(config: &RunConfig, command: &str) -> Result<(), CliError> {
    let path = config.out.join("meta.json");
    let mut text = serde_json::to_string_pretty(&Meta { command, version: VERSION, config })?;
    text.push('\n');
    fs::write(&path, text).map_err(CliError::io(path.display().to_string()))?;
    let path = config.out.join("config.toml");
    fs::write(&path, config.to_toml()?).map_err(CliError::io(path.display().to_string()))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).map_err(CliError::io(path.display().to_string()))?))
}

fn synth(config: &RunConfig) -> Result<(), CliError> {
    let containers = config
        .containers
        .iter()
        .map(|name| config.lookup_container(name))
        .collect::<Result<Vec<_>, _>>()?;
    if containers.is_empty() {
        return Err(CliError::Config("no containers given".into()));
    }
    let plans = plan_pours(&containers, config.pours, &ProfileRanges::default(), config.seed);
    let records = synthesize_dataset(&config.out, &plans, config.sample_rate)?;
    write_meta(config, "synth")?;
    let failed: Vec<_> = records.iter().filter_map(|r| r.error.as_ref().map(|e| (&r.trace_id, e))).collect();
    for (id, e) in &failed {
        eprintln!("{id}: {e}");
    }
    println!("{} of {} pours written to {}", records.len() - failed.len(), records.len(), config.out.display());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("{} of {} pours failed", failed.len(), records.len())))
    }
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    best_epoch: usize,
    best_val_loss: Option<f64>,
    clips: usize,
    split: &'a Split,
}

fn train_cmd(config: &RunConfig) -> Result<(), CliError> {
    let recordings = load_recordings(&config.data)?;
    let clips = clips_from_recordings(&recordings, config.count_per_second, config.seed)?;
    if config.verbose {
        eprintln!("{} recordings, {} clips", recordings.len(), clips.len());
    }
    let verbose = config.verbose;
    let outcome = train::<f32>(&clips, &config.train_config(), &mut |e| {
        if verbose {
            eprintln!(
                "epoch {:>3}  train {:.4}  val {}  ({:.1} s)",
                e.epoch,
                e.train_loss,
                e.val_loss.map_or("-".to_string(), |v| format!("{v:.4}")),
                e.wall_seconds
            );
        }
    })?;
    save_checkpoint(&outcome.model, &config.out.join("model.ckpt"))?;
    let mut log = create(&config.out.join("train_log.csv"))?;
    write_train_log(&outcome.log, &mut log)?;
    log.flush().map_err(CliError::io("train_log.csv"))?;
    let best_val_loss = outcome.log.get(outcome.best_epoch.wrapping_sub(1)).and_then(|e| e.val_loss);
    let summary = TrainSummary { best_epoch: outcome.best_epoch, best_val_loss, clips: clips.len(), split: &outcome.split };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(config.out.join("summary.json"), text).map_err(CliError::io("summary.json"))?;
    write_meta(config, "train")?;
    println!(
        "best epoch {} (val loss {}), checkpoint {}",
        outcome.best_epoch,
        best_val_loss.map_or("-".to_string(), |v| format!("{v:.4}")),
        config.out.join("model.ckpt").display()
    );
    Ok(())
}

fn parse_checkpoint(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, path)) => (name.to_string(), PathBuf::from(path)),
        None => {
            let path = PathBuf::from(spec);
            let name = path.file_stem().map_or_else(|| spec.to_string(), |s| s.to_string_lossy().into_owned());
            (name, path)
        }
    }
}

fn load_model(path: &Path) -> Result<ModelParams<f32>, CliError> {
    if !path.is_file() {
        return Err(CliError::Config(format!("checkpoint not found: {}", path.display())));
    }
    load_checkpoint(path).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

fn eval(config: &RunConfig) -> Result<(), CliError> {
    if config.checkpoints.is_empty() {
        return Err(CliError::Config("no checkpoints given".into()));
    }
    let named: Vec<(String, PathBuf)> = config.checkpoints.iter().map(|s| parse_checkpoint(s)).collect();
    let models = named.iter().map(|(_, p)| load_model(p)).collect::<Result<Vec<_>, _>>()?;
    let recordings = load_recordings(&config.data)?;
    let clips = clips_from_recordings(&recordings, config.count_per_second, config.seed)?;
    let container_of: HashMap<&str, &str> =
        recordings.iter().map(|r| (r.trace_id.as_str(), r.container_name.as_str())).collect();
    let lookup = |c: &pouring_core::training::ClipSample| {
        container_of.get(c.source_trace_id.as_str()).copied().unwrap_or("unknown").to_string()
    };
    let meta = EvalMeta {
        checkpoints: named.iter().map(|(_, p)| p.display().to_string()).collect(),
        dataset: config.data.display().to_string(),
        seed: config.seed,
        clips: clips.len(),
        frames: clips.iter().map(|c| c.labels.len()).sum(),
    };
    let variants: Vec<(String, &ModelParams<f32>)> = named.iter().map(|(n, _)| n.clone()).zip(models.iter()).collect();
    let report = compare_variants(&variants, &clips, &lookup, &config.container_library()?, meta)?;
    write_report(&config.out, &report)?;
    write_meta(config, "eval")?;
    for v in &report.variants {
        println!(
            "{:<12} mean {:.3} mm  <2mm {:.1} %  final-frame mean {:.3} mm",
            v.name,
            v.mean_abs_error_mm,
            100.0 * v.fraction_below_2mm,
            v.final_mean_abs_error_mm
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct TargetSummary {
    target_mm: f64,
    mean_abs_error_mm: f64,
    mean_overshoot_mm: f64,
    timeouts: usize,
}

#[derive(Serialize)]
struct PourSummary {
    container: String,
    episodes: usize,
    mean_abs_error_mm: f64,
    timeouts: usize,
    per_target: Vec<TargetSummary>,
    latency: Option<LatencySummary>,
}

/// Seed of the `repeat`-th pour; every target replays the same pours.
fn episode_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(repeat as u64 + 1)
}

fn pour(config: &RunConfig) -> Result<(), CliError> {
    let container = config.lookup_container(&config.container)?;
    let model = match (&config.model, config.oracle) {
        (_, true) => None,
        (Some(path), false) => Some(load_model(path)?),
        (None, false) => return Err(CliError::Config("--model is required unless --oracle is set".into())),
    };
    let control = ControlConfig { actuator_delay_s: config.actuator_delay_s, warmup_s: config.warmup_s };
    let jobs: Vec<(f64, usize)> =
        config.target_mm.iter().flat_map(|&t| (0..config.repeats).map(move |r| (t, r))).collect();
    let results = jobs
        .par_iter()
        .map(|&(target, repeat)| {
            let seed = episode_seed(config.seed, repeat);
            let profile = episode_profile(&container, seed);
            let mut estimator: Box<dyn HeightEstimator> = match &model {
                Some(m) => Box::new(ModelEstimator::new(m)?),
                None => Box::new(OracleEstimator::new(&container, &profile)),
            };
            run_closed_loop(estimator.as_mut(), &container, &profile, target, seed, &control)
        })
        .collect::<Result<Vec<PourEpisodeResult>, _>>()?;

    let mut w = create(&config.out.join("episodes.jsonl"))?;
    for r in &results {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(CliError::io("episodes.jsonl"))?;
    }
    w.flush().map_err(CliError::io("episodes.jsonl"))?;

    let mean_abs = |rs: &[&PourEpisodeResult]| rs.iter().map(|r| r.overshoot_mm.abs()).sum::<f64>() / rs.len().max(1) as f64;
    let per_target = config
        .target_mm
        .iter()
        .map(|&t| {
            let rs: Vec<&PourEpisodeResult> = results.iter().filter(|r| r.target_air_column_mm == t).collect();
            TargetSummary {
                target_mm: t,
                mean_abs_error_mm: mean_abs(&rs),
                mean_overshoot_mm: rs.iter().map(|r| r.overshoot_mm).sum::<f64>() / rs.len().max(1) as f64,
                timeouts: rs.iter().filter(|r| r.timeout).count(),
            }
        })
        .collect();
    let cat = |f: fn(&PourEpisodeResult) -> &Vec<f64>| results.iter().flat_map(|r| f(r).iter().copied()).collect::<Vec<_>>();
    let latency = if model.is_some() {
        Some(latency_summary(
            &cat(|r| &r.loop_latencies_ms),
            &cat(|r| &r.spectrogram_latencies_ms),
            &cat(|r| &r.model_latencies_ms),
        )?)
    } else {
        None
    };
    let all: Vec<&PourEpisodeResult> = results.iter().collect();
    let summary = PourSummary {
        container: container.name.clone(),
        episodes: results.len(),
        mean_abs_error_mm: mean_abs(&all),
        timeouts: results.iter().filter(|r| r.timeout).count(),
        per_target,
        latency,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(config.out.join("summary.json"), text).map_err(CliError::io("summary.json"))?;
    write_meta(config, "pour")?;

    for t in &summary.per_target {
        println!("target {:>5.1} mm  mean |error| {:.2} mm  timeouts {}", t.target_mm, t.mean_abs_error_mm, t.timeouts);
    }
    println!("{}: mean |achieved - target| {:.2} mm over {} pours", summary.container, summary.mean_abs_error_mm, summary.episodes);
    if let Some(l) = &summary.latency {
        println!(
            "loop latency mean {:.1} ms (p95 {:.1}, max {:.1}); spectrogram {:.0} % of the loop",
            l.mean_ms,
            l.p95_ms,
            l.max_ms,
            100.0 * l.spectrogram_share
        );
    }
    if summary.timeouts > 0 {
        return Err(CliError::Failed(format!("{} of {} pours timed out", summary.timeouts, summary.episodes)));
    }
    Ok(())
}

fn gradcheck(config: &RunConfig) -> Result<(), CliError> {
    let runs: Vec<_> = config
        .gradcheck_kinds
        .iter()
        .flat_map(|&k| config.gradcheck_frames.iter().flat_map(move |&f| (0..config.gradcheck_seeds).map(move |s| (k, f, s))))
        .collect();
    let reports = runs
        .par_iter()
        .map(|&(kind, frames, s)| {
            let model = small_config(kind, config.gradcheck_input)
                .with_hidden(config.gradcheck_hidden)
                .with_head_hidden(config.gradcheck_hidden);
            let seed = config.seed.wrapping_add(s);
            match &config.corrupt_gradient {
                Some(t) => gradient_check_corrupted(model, frames, seed, t),
                None => gradient_check(model, frames, seed),
            }
        })
        .collect::<Result<Vec<GradCheckReport>, _>>()?;

    let mut csv = String::from("kind,frames,seed,max_rel_error,worst_tensor,worst_index,checked,kinks,pass\n");
    let mut failures = Vec::new();
    for r in &reports {
        let pass = r.max_rel_error <= config.gradcheck_tolerance;
        writeln!(
            csv,
            "{},{},{},{:e},{},{},{},{},{}",
            r.kind, r.frames, r.seed, r.max_rel_error, r.worst.0, r.worst.1, r.checked, r.kinks, pass
        )
        .expect("writing to a String");
        println!(
            "{:<4} T={} seed={:<3} max rel error {:.2e} at {}[{}]  {}",
            r.kind.to_string(),
            r.frames,
            r.seed,
            r.max_rel_error,
            r.worst.0,
            r.worst.1,
            if pass { "ok" } else { "FAIL" }
        );
        if !pass {
            failures.push(r);
        }
    }
    fs::write(config.out.join("gradcheck.csv"), csv).map_err(CliError::io("gradcheck.csv"))?;
    write_meta(config, "gradcheck")?;
    if let Some(worst) = failures.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)) {
        for r in &failures {
            eprintln!(
                "gradient mismatch: {}[{}] relative error {:.3e} ({} T={} seed={})",
                r.worst.0, r.worst.1, r.max_rel_error, r.kind, r.frames, r.seed
            );
        }
        return Err(CliError::Failed(format!(
            "{} of {} checks exceed {:e}; worst tensor {}",
            failures.len(),
            reports.len(),
            config.gradcheck_tolerance,
            worst.worst.0
        )));
    }
    println!("all {} gradient checks within {:e}", reports.len(), config.gradcheck_tolerance);
    Ok(())
}
