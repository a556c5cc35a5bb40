use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use loco_core::bench::{describe, make_pool, Benchmark};
use loco_exp::config::{ConfigError, ExperimentConfig, Origin};
use loco_exp::experiment::{self, SweepParam};
use loco_exp::io;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "loco",
    version,
    about = "Collision-regularized latent-space BO experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Seed list, e.g. 0,1,2 (replaces `seeds`).
    #[arg(long)]
    seeds: Option<String>,
    /// Output base directory (replaces `output.dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// `key=value` applied after the file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, ConfigError> {
        let mut overrides: Vec<(String, Origin)> = self
            .overrides
            .iter()
            .map(|o| (o.clone(), Origin::Override))
            .collect();
        if let Some(seeds) = &self.seeds {
            overrides.push((format!("seeds={}", json!(seeds)), Origin::Flag("seeds")));
        }
        if let Some(out) = &self.out {
            let dir = json!(out.display().to_string());
            overrides.push((format!("output.dir={dir}"), Origin::Flag("out")));
        }
        ExperimentConfig::load_tagged(&self.config, &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of a config and write traces, aggregate and manifest.
    Run(ConfigArgs),
    /// Repeat a run for several values of lambda or rho on common seeds.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Parameter to sweep: lambda or rho.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Write latents, posterior and point-wise lambda for a saved run.
    DumpLatent {
        #[command(flatten)]
        config: ConfigArgs,
        /// checkpoint_seed<s>.json from a run directory.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output JSON-lines file; defaults to latent_seed<s>.jsonl next to
        /// the checkpoint.
        #[arg(long = "dump")]
        dump: Option<PathBuf>,
    },
    /// Benchmark utilities.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Check a config and print every effective setting.
    Validate(ConfigArgs),
}

#[derive(Subcommand)]
enum BenchCommand {
    /// List the available benchmarks.
    List,
    /// Write a pool as CSV (id, features..., label).
    Export {
        #[arg(long)]
        name: String,
        #[arg(long, default_value_t = 2000)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Input dimension (image side for max_area).
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print_json(v: &serde_json::Value) {
    // a closed pipe (`| head`) is not an error worth reporting
    let text = serde_json::to_string_pretty(v).expect("serializable");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.load()?;
            let w = experiment::run_experiment(&cfg)?;
            for warning in &w.warnings {
                eprintln!("{warning}");
            }
            print_json(&json!({
                "dir": w.dir.display().to_string(),
                "completed": w.completed,
                "failed": w.failed.iter().map(|f| f.0).collect::<Vec<_>>(),
                "final_mean_simple_regret": w.aggregate.last().map(|p| p.mean),
                "final_se_simple_regret": w.aggregate.last().map(|p| p.se),
            }));
        }
        Command::Sweep {
            config,
            param,
            values,
        } => {
            let cfg = config.load()?;
            let param = SweepParam::from_name(&param)?;
            let s = experiment::sweep(&cfg, param, &values)?;
            for w in &s.runs {
                for warning in &w.warnings {
                    eprintln!("{warning}");
                }
            }
            print_json(&json!({
                "dir": s.dir.display().to_string(),
                "param": param.name(),
                "values": s.values,
                "runs": s.runs.iter().map(|w| json!({
                    "dir": w.dir.display().to_string(),
                    "final_mean_simple_regret": w.aggregate.last().map(|p| p.mean),
                    "final_se_simple_regret": w.aggregate.last().map(|p| p.se),
                })).collect::<Vec<_>>(),
            }));
        }
        Command::DumpLatent {
            config,
            checkpoint,
            dump,
        } => {
            let cfg = config.load()?;
            let out = match dump {
                Some(p) => p,
                None => {
                    let stem = checkpoint
                        .file_stem()
                        .and_then(|s| s.to_str())
                        .unwrap_or("checkpoint")
                        .replacen("checkpoint", "latent", 1);
                    checkpoint.with_file_name(format!("{stem}.jsonl"))
                }
            };
            let n = experiment::dump_latent(&cfg, &checkpoint, &out)?;
            print_json(&json!({ "file": out.display().to_string(), "records": n }));
        }
        Command::Bench(BenchCommand::List) => {
            for name in Benchmark::NAMES {
                let b = Benchmark::from_name(name)?;
                let _ = writeln!(std::io::stdout().lock(), "{name}\t{}", describe(&b));
            }
        }
        Command::Bench(BenchCommand::Export {
            name,
            size,
            seed,
            dim,
            out,
        }) => {
            let mut b = Benchmark::from_name(&name)?;
            if let Some(d) = dim {
                b = match b {
                    Benchmark::Rastrigin { .. } => Benchmark::Rastrigin { dim: d },
                    Benchmark::SumExp { .. } => Benchmark::SumExp { dim: d },
                    Benchmark::MaxArea { .. } => Benchmark::MaxArea { side: d },
                };
            }
            let pool = make_pool(b, size, seed)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            io::write_pool(BufWriter::new(file), &pool)?;
            print_json(&json!({
                "file": out.display().to_string(),
                "rows": pool.len(),
                "optimum": pool.optimum,
            }));
        }
        Command::Validate(args) => {
            let cfg = args.load()?;
            print_json(&cfg.to_json());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = match e.downcast_ref::<ConfigError>() {
                Some(c) => c.record(),
                None => json!({ "error": "runtime", "message": format!("{e:#}") }),
            };
            eprintln!("{record}");
            ExitCode::from(if e.is::<ConfigError>() { 2 } else { 1 })
        }
    }
}
