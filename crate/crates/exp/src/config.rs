//! Experiment configuration: one flat JSON object with dotted keys.
//!
//! Only `benchmark` and `strategy` are required. Every other key has a
//! default, and unknown keys are rejected with the line they appear on.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use loco_core::acquisition::BetaSchedule;
use loco_core::bench::{Benchmark, BenchmarkInstance};
use loco_core::collision::{PenaltyConfig, Setting};
use loco_core::driver::{RunConfig, Strategy};
use loco_core::gp::GpHyper;
use serde_json::{json, Map, Value};

/// Every key a config document may contain.
pub const KEYS: &[&str] = &[
    "benchmark",
    "strategy",
    "bench.dim",
    "pool.size",
    "pool.seed",
    "seeds",
    "output.dir",
    "budget",
    "initial.labeled",
    "noise.sd",
    "retrain.interval",
    "retrain.epochs",
    "retrain.lr",
    "penalty.lambda",
    "penalty.rho",
    "penalty.zeta",
    "beta.schedule",
    "beta.value",
    "beta.delta",
    "beta.pi_squared",
    "beta.radius",
    "beta.lipschitz",
    "encoder.hidden",
    "encoder.latent_dim",
    "encoder.leaky_slope",
    "pretrain.epochs",
    "pretrain.lr",
    "gp.signal_var",
    "gp.lengthscale",
    "gp.noise_var",
    "trace.timing",
];

/// Where a setting came from, for diagnostics.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    Line(usize),
    Override,
    Flag(&'static str),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Line(l) => write!(f, "line {l}"),
            Origin::Override => f.write_str("--override"),
            Origin::Flag(name) => write!(f, "--{name}"),
            Origin::Default => f.write_str("default"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed JSON at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("config must be a JSON object of dotted keys")]
    NotAnObject,
    #[error("unknown key `{key}` ({origin})")]
    UnknownKey { key: String, origin: Origin },
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("bad value for `{key}` ({origin}): {message}")]
    Invalid {
        key: String,
        origin: Origin,
        message: String,
    },
    #[error("malformed override `{0}`, expected key=value")]
    BadOverride(String),
}

impl ConfigError {
    /// Machine-readable form written to stderr by the CLI.
    pub fn record(&self) -> Value {
        let mut rec = json!({ "error": "config", "message": self.to_string() });
        let origin = match self {
            ConfigError::Syntax { line, column, .. } => {
                rec["line"] = json!(line);
                rec["column"] = json!(column);
                None
            }
            ConfigError::UnknownKey { key, origin } | ConfigError::Invalid { key, origin, .. } => {
                rec["key"] = json!(key);
                Some(origin)
            }
            ConfigError::Missing { key } => {
                rec["key"] = json!(key);
                None
            }
            _ => None,
        };
        match origin {
            Some(Origin::Line(l)) => rec["line"] = json!(l),
            Some(o) => rec["source"] = json!(o.to_string()),
            None => {}
        }
        rec
    }
}

type Entries = Vec<(String, Value, Origin)>;

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub benchmark: Benchmark,
    pub pool_size: usize,
    pub pool_seed: u64,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Template for every seed's run; its `seed` field is replaced per run.
    pub run: RunConfig,
    /// Fill the `ms` trace column with wall-clock time. Off by default so
    /// traces stay byte-reproducible.
    pub timing: bool,
}

fn line_of(text: &str, key: &str) -> usize {
    let needle = format!("\"{key}\"");
    let mut from = 0;
    while let Some(pos) = text[from..].find(&needle) {
        let at = from + pos;
        let rest = text[at + needle.len()..].trim_start();
        if rest.starts_with(':') {
            return text[..at].matches('\n').count() + 1;
        }
        from = at + needle.len();
    }
    0
}

fn parse_entries(text: &str) -> Result<Entries, ConfigError> {
    let doc: Value = serde_json::from_str(text).map_err(|e| ConfigError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let Value::Object(map) = doc else {
        return Err(ConfigError::NotAnObject);
    };
    Ok(map
        .into_iter()
        .map(|(k, v)| {
            let line = line_of(text, &k);
            (k, v, Origin::Line(line))
        })
        .collect())
}

/// Splits `key=value`. The value is read as JSON when it parses, otherwise
/// as a bare string, so `strategy=loco` and `penalty.rho=10` both work.
pub fn parse_override(raw: &str) -> Result<(String, Value), ConfigError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| ConfigError::BadOverride(raw.into()))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(ConfigError::BadOverride(raw.into()));
    }
    let value = value.trim();
    let parsed = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.into()));
    Ok((key.into(), parsed))
}

struct Reader<'a> {
    key: &'a str,
    value: &'a Value,
    origin: &'a Origin,
}

impl Reader<'_> {
    fn fail<T>(&self, message: impl Into<String>) -> Result<T, ConfigError> {
        Err(ConfigError::Invalid {
            key: self.key.into(),
            origin: self.origin.clone(),
            message: message.into(),
        })
    }

    fn f64(&self) -> Result<f64, ConfigError> {
        match self.value.as_f64() {
            Some(v) if v.is_finite() => Ok(v),
            _ => self.fail(format!("expected a finite number, got {}", self.value)),
        }
    }

    fn u64(&self) -> Result<u64, ConfigError> {
        match self.value.as_u64() {
            Some(v) => Ok(v),
            None => self.fail(format!(
                "expected a non-negative integer, got {}",
                self.value
            )),
        }
    }

    fn usize(&self) -> Result<usize, ConfigError> {
        let v = self.u64()?;
        usize::try_from(v).or_else(|_| self.fail("integer too large"))
    }

    fn bool(&self) -> Result<bool, ConfigError> {
        match self.value.as_bool() {
            Some(v) => Ok(v),
            None => self.fail(format!("expected true or false, got {}", self.value)),
        }
    }

    fn str(&self) -> Result<&str, ConfigError> {
        match self.value.as_str() {
            Some(v) => Ok(v),
            None => self.fail(format!("expected a string, got {}", self.value)),
        }
    }

    fn is_auto(&self) -> bool {
        self.value.as_str() == Some("auto")
    }

    fn setting(&self) -> Result<Setting, ConfigError> {
        if self.is_auto() {
            Ok(Setting::Auto)
        } else {
            self.f64().map(Setting::Fixed)
        }
    }

    fn usize_list(&self) -> Result<Vec<usize>, ConfigError> {
        let Some(items) = self.value.as_array() else {
            return self.fail(format!("expected an array of integers, got {}", self.value));
        };
        items
            .iter()
            .map(|v| Reader { value: v, ..*self }.usize())
            .collect()
    }

    fn seeds(&self) -> Result<Vec<u64>, ConfigError> {
        // accept an array or a comma-separated string ("0,1,2")
        if let Some(s) = self.value.as_str() {
            return parse_seed_list(s).or_else(|m| self.fail(m));
        }
        let Some(items) = self.value.as_array() else {
            return self.fail(format!("expected an array of seeds, got {}", self.value));
        };
        items
            .iter()
            .map(|v| Reader { value: v, ..*self }.u64())
            .collect()
    }
}

/// Parses `a,b,c` into seeds.
pub fn parse_seed_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .map_err(|_| format!("`{}` is not a seed", p.trim()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy)]
struct BetaFields {
    kind: BetaKind,
    value: f64,
    delta: f64,
    pi_squared: bool,
    radius: f64,
    lipschitz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BetaKind {
    Constant,
    Discrete,
    Continuous,
}

impl Default for BetaFields {
    fn default() -> Self {
        Self {
            kind: BetaKind::Constant,
            value: 4.0,
            delta: 0.1,
            pi_squared: false,
            radius: 1.0,
            lipschitz: 1.0,
        }
    }
}

impl ExperimentConfig {
    /// Reads and resolves a config file, then applies `overrides` in order.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let tagged: Vec<_> = overrides
            .iter()
            .map(|o| (o.clone(), Origin::Override))
            .collect();
        Self::load_tagged(path, &tagged)
    }

    /// Like [`Self::load`], with each override carrying its own origin for
    /// diagnostics (for example a dedicated command-line flag).
    pub fn load_tagged(path: &Path, overrides: &[(String, Origin)]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json_tagged(&text, overrides)
    }

    pub fn from_json_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let tagged: Vec<_> = overrides
            .iter()
            .map(|o| (o.clone(), Origin::Override))
            .collect();
        Self::from_json_tagged(text, &tagged)
    }

    pub fn from_json_tagged(
        text: &str,
        overrides: &[(String, Origin)],
    ) -> Result<Self, ConfigError> {
        let mut entries = parse_entries(text)?;
        for (raw, origin) in overrides {
            let (key, value) = parse_override(raw)?;
            entries.retain(|e| e.0 != key);
            entries.push((key, value, origin.clone()));
        }
        Self::from_entries(&entries)
    }

    fn from_entries(entries: &Entries) -> Result<Self, ConfigError> {
        if let Some((key, _, origin)) = entries.iter().find(|e| !KEYS.contains(&e.0.as_str())) {
            return Err(ConfigError::UnknownKey {
                key: key.clone(),
                origin: origin.clone(),
            });
        }
        let reader = |name: &str| {
            entries
                .iter()
                .find(|e| e.0 == name)
                .map(|(key, value, origin)| Reader { key, value, origin })
        };
        let required =
            |name: &str| reader(name).ok_or_else(|| ConfigError::Missing { key: name.into() });

        let bench_key = required("benchmark")?;
        let mut benchmark = match Benchmark::from_name(bench_key.str()?) {
            Ok(b) => b,
            Err(e) => return bench_key.fail(e.to_string()),
        };
        let strategy_key = required("strategy")?;
        let strategy = match Strategy::from_name(strategy_key.str()?) {
            Ok(s) => s,
            Err(e) => return strategy_key.fail(e.to_string()),
        };
        if let Some(r) = reader("bench.dim") {
            let d = r.usize()?;
            if d == 0 {
                return r.fail("must be >= 1");
            }
            benchmark = match benchmark {
                Benchmark::Rastrigin { .. } => Benchmark::Rastrigin { dim: d },
                Benchmark::SumExp { .. } => Benchmark::SumExp { dim: d },
                Benchmark::MaxArea { .. } => Benchmark::MaxArea { side: d },
            };
        }

        let mut cfg = ExperimentConfig {
            benchmark,
            pool_size: 2000,
            pool_seed: 0,
            seeds: (0..8).collect(),
            output_dir: PathBuf::from("runs"),
            run: RunConfig::new(strategy, 200, 0),
            timing: false,
        };
        let mut beta = BetaFields::default();
        let run = &mut cfg.run;
        let (mut sv, mut ls, mut nv) = (1.0, 1.0, 1e-2);

        for (key, _, _) in entries {
            let r = reader(key).expect("present");
            match key.as_str() {
                "benchmark" | "strategy" | "bench.dim" => {}
                "pool.size" => cfg.pool_size = r.usize()?,
                "pool.seed" => cfg.pool_seed = r.u64()?,
                "seeds" => cfg.seeds = r.seeds()?,
                "output.dir" => cfg.output_dir = PathBuf::from(r.str()?),
                "budget" => run.budget = r.usize()?,
                "initial.labeled" => {
                    run.initial_labeled = if r.is_auto() { None } else { Some(r.usize()?) }
                }
                "noise.sd" => run.noise_sd = if r.is_auto() { None } else { Some(r.f64()?) },
                "retrain.interval" => run.retrain.interval = r.usize()?,
                "retrain.epochs" => run.retrain.epochs = r.usize()?,
                "retrain.lr" => run.retrain.lr = r.f64()?,
                "penalty.lambda" => run.penalty.lambda = r.setting()?,
                "penalty.rho" => run.penalty.rho = r.setting()?,
                "penalty.zeta" => run.penalty.zeta = r.f64()?,
                "beta.schedule" => {
                    beta.kind = match r.str()? {
                        "constant" => BetaKind::Constant,
                        "discrete" => BetaKind::Discrete,
                        "continuous" => BetaKind::Continuous,
                        other => return r.fail(format!(
                            "unknown schedule `{other}`; expected constant, discrete or continuous"
                        )),
                    }
                }
                "beta.value" => beta.value = r.f64()?,
                "beta.delta" => beta.delta = r.f64()?,
                "beta.pi_squared" => beta.pi_squared = r.bool()?,
                "beta.radius" => beta.radius = r.f64()?,
                "beta.lipschitz" => beta.lipschitz = r.f64()?,
                "encoder.hidden" => run.encoder_hidden = r.usize_list()?,
                "encoder.latent_dim" => run.latent_dim = r.usize()?,
                "encoder.leaky_slope" => run.leaky_slope = r.f64()?,
                "pretrain.epochs" => run.pretrain.epochs = r.usize()?,
                "pretrain.lr" => run.pretrain.lr = r.f64()?,
                "gp.signal_var" => sv = r.f64()?,
                "gp.lengthscale" => ls = r.f64()?,
                "gp.noise_var" => nv = r.f64()?,
                "trace.timing" => cfg.timing = r.bool()?,
                _ => unreachable!("key list checked above"),
            }
        }

        let gp_key = ["gp.signal_var", "gp.lengthscale", "gp.noise_var"]
            .into_iter()
            .find_map(&reader);
        run.gp = match GpHyper::new(sv, ls, nv) {
            Ok(h) => h,
            Err(e) => return gp_key.expect("defaults are valid").fail(e.to_string()),
        };
        let feature_dim = if strategy == Strategy::GpRaw {
            cfg.benchmark.input_dim()
        } else {
            run.latent_dim
        };
        run.beta = match beta.kind {
            BetaKind::Constant => BetaSchedule::Constant(beta.value),
            BetaKind::Discrete => BetaSchedule::Discrete {
                pool_size: cfg.pool_size,
                delta: beta.delta,
                pi_squared: beta.pi_squared,
            },
            BetaKind::Continuous => BetaSchedule::Continuous {
                dim: feature_dim,
                radius: beta.radius,
                lipschitz: beta.lipschitz,
                delta: beta.delta,
            },
        };
        cfg.check(&reader)?;
        Ok(cfg)
    }

    /// Checks that cannot wait until a run starts: the core validation plus
    /// the harness's own constraints.
    fn check<'a>(&self, reader: &impl Fn(&str) -> Option<Reader<'a>>) -> Result<(), ConfigError> {
        let blame = |key: &'static str, message: String| -> ConfigError {
            match reader(key) {
                Some(r) => ConfigError::Invalid {
                    key: key.into(),
                    origin: r.origin.clone(),
                    message,
                },
                None => ConfigError::Invalid {
                    key: key.into(),
                    origin: Origin::Default,
                    message,
                },
            }
        };
        if self.pool_size < 2 {
            return Err(blame("pool.size", "must be >= 2".into()));
        }
        if self.seeds.len() < 2 {
            return Err(blame(
                "seeds",
                "at least two seeds are needed for a standard error".into(),
            ));
        }
        let mut unique = self.seeds.clone();
        unique.sort_unstable();
        unique.dedup();
        if unique.len() != self.seeds.len() {
            return Err(blame("seeds", "seeds must be distinct".into()));
        }
        let run = &self.run;
        let fail = |key: &'static str, e: loco_core::Error| Err(blame(key, e.to_string()));
        let positive = |key: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(blame(key, format!("must be positive, got {v}")))
            }
        };
        positive("retrain.lr", run.retrain.lr)?;
        positive("pretrain.lr", run.pretrain.lr)?;
        if !(run.leaky_slope.is_finite() && run.leaky_slope >= 0.0) {
            return Err(blame(
                "encoder.leaky_slope",
                "must be finite and >= 0".into(),
            ));
        }
        if run.latent_dim == 0 {
            return Err(blame("encoder.latent_dim", "must be >= 1".into()));
        }
        let base = PenaltyConfig::loco();
        for (key, p) in [
            (
                "penalty.lambda",
                PenaltyConfig {
                    lambda: run.penalty.lambda,
                    ..base
                },
            ),
            (
                "penalty.rho",
                PenaltyConfig {
                    rho: run.penalty.rho,
                    ..base
                },
            ),
            (
                "penalty.zeta",
                PenaltyConfig {
                    zeta: run.penalty.zeta,
                    ..base
                },
            ),
        ] {
            if let Err(e) = p.validate() {
                return fail(key, e);
            }
        }
        if let Err(e) = run.beta.validate() {
            let key = ["beta.value", "beta.delta", "beta.radius", "beta.lipschitz"]
                .into_iter()
                .find(|k| reader(k).is_some())
                .unwrap_or("beta.schedule");
            return fail(key, e);
        }
        if let Err(e) = run.encoder_spec(self.benchmark.input_dim()).validate() {
            return fail("encoder.hidden", e);
        }
        // a stand-in pool with the right size is enough for the remaining checks
        let probe = self.probe_instance();
        if let Err(e) = run.validate(&probe) {
            let key = if run.budget == 0 {
                "budget"
            } else if run.retrain.interval == 0 {
                "retrain.interval"
            } else if run
                .noise_sd
                .is_some_and(|sd| !(sd >= 0.0 && sd.is_finite()))
            {
                "noise.sd"
            } else if run.strategy != Strategy::Random && run.initial_count(&probe) < 2 {
                "initial.labeled"
            } else {
                "budget"
            };
            return fail(key, e);
        }
        Ok(())
    }

    /// Pool-free instance with the right shape and size, used only for
    /// validation.
    fn probe_instance(&self) -> BenchmarkInstance {
        let d = self.benchmark.input_dim();
        let n = self.pool_size;
        let inputs = loco_core::Tensor::zeros(n, d);
        let labels: Vec<f64> = (0..n).map(|i| i as f64).collect();
        BenchmarkInstance::from_parts(self.benchmark, inputs, labels, self.pool_seed)
            .expect("consistent shapes")
    }

    /// Run settings for one seed.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        RunConfig {
            seed,
            ..self.run.clone()
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.run.strategy
    }

    /// Every effective setting as a flat map, in the same key space as the
    /// input document. `auto` stays `auto`; resolved values are reported per
    /// seed in the manifest.
    pub fn effective(&self) -> BTreeMap<String, Value> {
        let run = &self.run;
        let setting = |s: Setting| match s {
            Setting::Auto => json!("auto"),
            Setting::Fixed(v) => json!(v),
        };
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: Value| {
            m.insert(k.to_string(), v);
        };
        put("benchmark", json!(self.benchmark.name()));
        put("strategy", json!(run.strategy.name()));
        let dim = match self.benchmark {
            Benchmark::Rastrigin { dim } | Benchmark::SumExp { dim } => dim,
            Benchmark::MaxArea { side } => side,
        };
        put("bench.dim", json!(dim));
        put("pool.size", json!(self.pool_size));
        put("pool.seed", json!(self.pool_seed));
        put("seeds", json!(self.seeds));
        put("output.dir", json!(self.output_dir.display().to_string()));
        put("budget", json!(run.budget));
        put(
            "initial.labeled",
            match run.initial_labeled {
                Some(n) => json!(n),
                None => json!(self.benchmark.default_initial_labeled()),
            },
        );
        put(
            "noise.sd",
            match run.noise_sd {
                Some(v) => json!(v),
                None => json!("auto"),
            },
        );
        put("retrain.interval", json!(run.retrain.interval));
        put("retrain.epochs", json!(run.retrain.epochs));
        put("retrain.lr", json!(run.retrain.lr));
        let eff = run.strategy.effective_penalty(&run.penalty);
        put("penalty.lambda", setting(eff.lambda));
        put("penalty.rho", setting(eff.rho));
        put("penalty.zeta", json!(eff.zeta));
        match run.beta {
            BetaSchedule::Constant(v) => {
                put("beta.schedule", json!("constant"));
                put("beta.value", json!(v));
            }
            BetaSchedule::Discrete {
                delta, pi_squared, ..
            } => {
                put("beta.schedule", json!("discrete"));
                put("beta.delta", json!(delta));
                put("beta.pi_squared", json!(pi_squared));
            }
            BetaSchedule::Continuous {
                radius,
                lipschitz,
                delta,
                ..
            } => {
                put("beta.schedule", json!("continuous"));
                put("beta.delta", json!(delta));
                put("beta.radius", json!(radius));
                put("beta.lipschitz", json!(lipschitz));
            }
        }
        put("encoder.hidden", json!(run.encoder_hidden));
        put("encoder.latent_dim", json!(run.latent_dim));
        put("encoder.leaky_slope", json!(run.leaky_slope));
        put("pretrain.epochs", json!(run.pretrain.epochs));
        put("pretrain.lr", json!(run.pretrain.lr));
        put("gp.signal_var", json!(run.gp.signal_var()));
        put("gp.lengthscale", json!(run.gp.lengthscale()));
        put("gp.noise_var", json!(run.gp.noise_var()));
        put("trace.timing", json!(self.timing));
        m
    }

    /// [`Self::effective`] as a JSON object.
    pub fn to_json(&self) -> Value {
        Value::Object(self.effective().into_iter().collect::<Map<_, _>>())
    }
}

/// Human-readable β schedule for manifests.
pub fn describe_beta(beta: &BetaSchedule) -> Value {
    match *beta {
        BetaSchedule::Constant(v) => json!({ "kind": "constant", "value": v }),
        BetaSchedule::Discrete {
            pool_size,
            delta,
            pi_squared,
        } => json!({
            "kind": "discrete",
            "pool_size": pool_size,
            "delta": delta,
            "pi_squared": pi_squared,
        }),
        BetaSchedule::Continuous {
            dim,
            radius,
            lipschitz,
            delta,
        } => json!({
            "kind": "continuous",
            "dim": dim,
            "radius": radius,
            "lipschitz": lipschitz,
            "delta": delta,
        }),
    }
}
