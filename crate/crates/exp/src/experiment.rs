//! Multi-seed runs, sweeps and latent dumps on top of the core driver.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use loco_core::bench::{describe, make_pool, BenchmarkInstance};
use loco_core::collision::Setting;
use loco_core::driver::{
    latent_report, pretrain_encoder, regret_summary, run_with, EventKind, RegretPoint, RunContext,
    RunOutput, Strategy,
};
use loco_core::encoder::Encoder;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{describe_beta, ExperimentConfig};
use crate::io::{self, Checkpoint};

pub fn trace_file(seed: u64) -> String {
    format!("trace_seed{seed}.csv")
}

pub fn events_file(seed: u64) -> String {
    format!("events_seed{seed}.jsonl")
}

pub fn checkpoint_file(seed: u64) -> String {
    format!("checkpoint_seed{seed}.json")
}

pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_FILE: &str = "sweep.csv";

pub fn build_pool(cfg: &ExperimentConfig) -> Result<BenchmarkInstance> {
    make_pool(cfg.benchmark, cfg.pool_size, cfg.pool_seed)
        .with_context(|| format!("building the {} pool", cfg.benchmark.name()))
}

/// Creates a fresh `<base>/<label>_<timestamp>` directory. An existing
/// directory is never reused; a numeric suffix is added on a clash.
pub fn create_run_dir(base: &Path, label: &str) -> Result<PathBuf> {
    fs::create_dir_all(base).with_context(|| format!("creating {}", base.display()))?;
    let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%S%.3fZ");
    let stem = format!("{label}_{stamp}");
    for k in 0.. {
        let name = if k == 0 {
            stem.clone()
        } else {
            format!("{stem}-{k}")
        };
        let dir = base.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e).with_context(|| format!("creating {}", dir.display())),
        }
    }
    unreachable!()
}

/// Outcome of one seed.
pub struct SeedRun {
    pub seed: u64,
    pub result: Result<RunOutput, String>,
}

/// Autoencoder pretraining for every seed, in parallel. The result depends
/// only on the seed, pool and encoder settings, so runs that differ in
/// other settings can share it.
pub fn pretrain_all(
    cfg: &ExperimentConfig,
    pool: &BenchmarkInstance,
) -> Result<HashMap<u64, Encoder>> {
    if !matches!(
        cfg.strategy(),
        Strategy::Loco | Strategy::DwLoco | Strategy::Lso
    ) {
        return Ok(HashMap::new());
    }
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let pre = pretrain_encoder(&cfg.run_config(seed), pool)
                .with_context(|| format!("pretraining seed {seed}"))?;
            Ok((seed, pre.encoder))
        })
        .collect()
}

/// Runs every seed of `cfg` in parallel. Failures are reported per seed.
pub fn run_seeds(
    cfg: &ExperimentConfig,
    pool: &BenchmarkInstance,
    pretrained: Option<&HashMap<u64, Encoder>>,
) -> Vec<SeedRun> {
    cfg.seeds
        .par_iter()
        .map(|&seed| {
            let start = Instant::now();
            let clock = move || start.elapsed().as_secs_f64() * 1e3;
            let ctx = RunContext {
                pretrained: pretrained.and_then(|m| m.get(&seed)),
                clock: if cfg.timing {
                    Some(&clock as &dyn Fn() -> f64)
                } else {
                    None
                },
            };
            let result = run_with(&cfg.run_config(seed), pool, ctx).map_err(|e| e.to_string());
            SeedRun { seed, result }
        })
        .collect()
}

/// What [`write_results`] produced.
#[derive(Debug, Clone)]
pub struct Written {
    pub dir: PathBuf,
    pub completed: Vec<u64>,
    pub failed: Vec<(u64, String)>,
    pub aggregate: Vec<RegretPoint>,
    pub warnings: Vec<Value>,
    pub manifest: Value,
}

fn seed_entry(seed: u64, out: &RunOutput, has_checkpoint: bool) -> Value {
    let (lambda, rho, zeta) = match out.penalty {
        Some(p) => (json!(p.lambda), json!(p.rho), json!(p.zeta)),
        None => (Value::Null, Value::Null, Value::Null),
    };
    let count = |f: fn(&EventKind) -> bool| out.events.iter().filter(|e| f(&e.kind)).count();
    let last = out.rows.last();
    json!({
        "seed": seed,
        "trace": trace_file(seed),
        "events": events_file(seed),
        "checkpoint": if has_checkpoint { json!(checkpoint_file(seed)) } else { Value::Null },
        "initial_labeled": out.initial.len(),
        "noise_sd": out.noise_sd,
        "lambda": lambda,
        "rho": rho,
        "zeta": zeta,
        "final_beta": if out.final_beta.is_finite() { json!(out.final_beta) } else { Value::Null },
        "final_simple_regret": last.map(|r| r.simple_regret),
        "final_best_y": last.map(|r| r.best_y),
        "retrains": count(|k| matches!(k, EventKind::Retrained { .. })),
        "reverted_retrains": count(|k| matches!(k, EventKind::RetrainReverted { .. })),
        "beta_clamped_steps": count(|k| matches!(k, EventKind::BetaClamped)),
    })
}

/// Writes per-seed files, the aggregate and the manifest into `dir`.
/// Files are written one after another from the calling thread.
pub fn write_results(
    dir: &Path,
    cfg: &ExperimentConfig,
    pool: &BenchmarkInstance,
    runs: &[SeedRun],
    extra: Option<Value>,
) -> Result<Written> {
    let mut completed = Vec::new();
    let mut failed = Vec::new();
    let mut warnings = Vec::new();
    let mut traces = Vec::new();
    let mut seeds = Vec::new();
    for run in runs {
        match &run.result {
            Ok(out) => {
                let path = dir.join(trace_file(run.seed));
                io::write_trace(BufWriter::new(File::create(&path)?), &out.rows, cfg.timing)
                    .with_context(|| format!("writing {}", path.display()))?;
                let path = dir.join(events_file(run.seed));
                io::write_events(BufWriter::new(File::create(&path)?), run.seed, &out.events)
                    .with_context(|| format!("writing {}", path.display()))?;
                let ckpt = Checkpoint::from_run(run.seed, cfg.strategy().name(), pool, out);
                if let Some(c) = &ckpt {
                    let path = dir.join(checkpoint_file(run.seed));
                    fs::write(&path, serde_json::to_string(c)?)
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                seeds.push(seed_entry(run.seed, out, ckpt.is_some()));
                traces.push(out.rows.clone());
                completed.push(run.seed);
            }
            Err(message) => {
                warnings.push(json!({
                    "warning": "seed_failed",
                    "seed": run.seed,
                    "message": message,
                }));
                failed.push((run.seed, message.clone()));
            }
        }
    }
    let mut manifest = json!({
        "software": { "name": "loco", "version": env!("CARGO_PKG_VERSION") },
        "created": chrono::Utc::now().to_rfc3339(),
        "trace_schema": { "version": io::TRACE_SCHEMA_VERSION, "header": io::TRACE_HEADER },
        "config": cfg.to_json(),
        "benchmark": {
            "name": pool.name(),
            "description": describe(&pool.benchmark),
            "input_dim": pool.inputs.cols(),
            "pool_size": pool.len(),
            "pool_seed": pool.seed,
            "optimum": pool.optimum,
        },
        "beta_schedule": describe_beta(&cfg.run.beta),
        "initial_points_count_against_budget": false,
        "seeds": seeds,
        "failed": failed.iter().map(|(s, m)| json!({ "seed": s, "error": m })).collect::<Vec<_>>(),
        "warnings": warnings,
        "aggregate": AGGREGATE_FILE,
    });
    if let Some(extra) = extra {
        manifest["sweep"] = extra;
    }
    let aggregate = if traces.len() >= 2 {
        let points = regret_summary(&traces)?;
        io::write_aggregate(
            BufWriter::new(File::create(dir.join(AGGREGATE_FILE))?),
            &points,
        )?;
        points
    } else {
        manifest["aggregate"] = Value::Null;
        Vec::new()
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)? + "\n",
    )?;
    if traces.len() < 2 {
        bail!(
            "only {} of {} seeds completed; a standard error needs at least two ({})",
            traces.len(),
            runs.len(),
            failed
                .iter()
                .map(|(s, m)| format!("seed {s}: {m}"))
                .collect::<Vec<_>>()
                .join("; ")
        );
    }
    Ok(Written {
        dir: dir.to_path_buf(),
        completed,
        failed,
        aggregate,
        warnings,
        manifest,
    })
}

/// `run`: all seeds of one config into a fresh timestamped directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Written> {
    let pool = build_pool(cfg)?;
    let pretrained = pretrain_all(cfg, &pool)?;
    let runs = run_seeds(cfg, &pool, Some(&pretrained));
    let label = format!("{}_{}", cfg.benchmark.name(), cfg.strategy().name());
    let dir = create_run_dir(&cfg.output_dir, &label)?;
    write_results(&dir, cfg, &pool, &runs, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    Rho,
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Rho => "rho",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "lambda" => Ok(Self::Lambda),
            "rho" => Ok(Self::Rho),
            other => bail!("cannot sweep `{other}`; expected lambda or rho"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub dir: PathBuf,
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// One run directory per value, in the order given.
    pub runs: Vec<Written>,
}

/// `sweep`: one full run per value, all on the same seeds and sharing the
/// pretrained encoders, so values can be compared seed by seed.
pub fn sweep(cfg: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepOutcome> {
    ensure!(values.len() >= 2, "a sweep needs at least two values");
    let base = cfg.strategy().effective_penalty(&cfg.run.penalty);
    if param == SweepParam::Rho && base.rho == Setting::Fixed(0.0) {
        bail!(
            "strategy {} trains without the collision penalty; a rho sweep would not change it",
            cfg.strategy().name()
        );
    }
    let mut variants = Vec::with_capacity(values.len());
    for &v in values {
        let mut c = cfg.clone();
        match param {
            SweepParam::Lambda => c.run.penalty.lambda = Setting::Fixed(v),
            SweepParam::Rho => c.run.penalty.rho = Setting::Fixed(v),
        }
        c.run
            .penalty
            .validate()
            .with_context(|| format!("{} = {v}", param.name()))?;
        variants.push(c);
    }
    let pool = build_pool(cfg)?;
    let pretrained = pretrain_all(cfg, &pool)?;
    let label = format!(
        "{}_{}_sweep_{}",
        cfg.benchmark.name(),
        cfg.strategy().name(),
        param.name()
    );
    let dir = create_run_dir(&cfg.output_dir, &label)?;
    let mut runs = Vec::with_capacity(values.len());
    for (k, (c, &v)) in variants.iter().zip(values).enumerate() {
        let sub = dir.join(format!("{k:02}_{}={v}", param.name()));
        fs::create_dir(&sub)?;
        let seeds = run_seeds(c, &pool, Some(&pretrained));
        let extra = json!({ "param": param.name(), "value": v, "index": k });
        runs.push(write_results(&sub, c, &pool, &seeds, Some(extra))?);
    }
    let blocks: Vec<(f64, Vec<RegretPoint>)> = values
        .iter()
        .copied()
        .zip(runs.iter().map(|w| w.aggregate.clone()))
        .collect();
    io::write_sweep(BufWriter::new(File::create(dir.join(SWEEP_FILE))?), &blocks)?;
    Ok(SweepOutcome {
        dir,
        param,
        values: values.to_vec(),
        runs,
    })
}

/// `dump-latent`: per-candidate latents, posterior and point-wise λ for the
/// model saved in `checkpoint`. Returns the number of records written.
pub fn dump_latent(cfg: &ExperimentConfig, checkpoint: &Path, out: &Path) -> Result<usize> {
    let text = fs::read_to_string(checkpoint)
        .with_context(|| format!("reading checkpoint {}", checkpoint.display()))?;
    let ckpt: Checkpoint = serde_json::from_str(&text)
        .with_context(|| format!("parsing checkpoint {}", checkpoint.display()))?;
    ensure!(
        ckpt.benchmark == cfg.benchmark.name()
            && ckpt.input_dim == cfg.benchmark.input_dim()
            && ckpt.pool_size == cfg.pool_size
            && ckpt.pool_seed == cfg.pool_seed,
        "checkpoint was saved for pool {} (d={}, N={}, seed {}), config describes {} (d={}, N={}, seed {})",
        ckpt.benchmark,
        ckpt.input_dim,
        ckpt.pool_size,
        ckpt.pool_seed,
        cfg.benchmark.name(),
        cfg.benchmark.input_dim(),
        cfg.pool_size,
        cfg.pool_seed
    );
    let pool = build_pool(cfg)?;
    let model = ckpt.model().context("rebuilding the saved model")?;
    let records = latent_report(&model, &pool, &ckpt.observations, ckpt.final_beta)?;
    io::write_latents(BufWriter::new(File::create(out)?), &records)
        .with_context(|| format!("writing {}", out.display()))?;
    Ok(records.len())
}
