//! The optimization loop: acquire from the pool, observe, retrain the deep
//! kernel every `R` observations, and emit one [`TraceRow`] per step.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::acquisition::{select, ucb_score, BetaSchedule};
use crate::bench::BenchmarkInstance;
use crate::collision::{
    calibrate_rho, collision_metric, estimate_lambda, pair_loss_graph, pointwise_lambda,
    raw_penalty, PenaltyConfig, ResolvedPenalty, Setting,
};
use crate::diffmath::{Adam, Graph, Var};
use crate::encoder::{pretrain_autoencoder, Encoder, EncoderSpec, PretrainConfig, Pretrained};
use crate::gp::{GpHyper, GpState, HyperParams, PosteriorMoments};
use crate::{Error, Result, Tensor};

const STREAM_ENCODER: u64 = 0;
const STREAM_INITIAL: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_RANDOM: u64 = 3;

/// Independent random stream `stream` of run seed `seed`.
fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Collision-regularized deep kernel with uniform pair weights.
    Loco,
    /// Collision-regularized deep kernel with label-weighted pairs.
    DwLoco,
    /// Deep kernel trained on the likelihood alone.
    Lso,
    /// GP-UCB directly on the raw inputs.
    GpRaw,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Loco,
        Strategy::DwLoco,
        Strategy::Lso,
        Strategy::GpRaw,
        Strategy::Random,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Loco => "loco",
            Self::DwLoco => "dw_loco",
            Self::Lso => "lso",
            Self::GpRaw => "gp_raw",
            Self::Random => "random",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{name}`")))
    }

    fn uses_encoder(&self) -> bool {
        matches!(self, Self::Loco | Self::DwLoco | Self::Lso)
    }

    /// The penalty settings this strategy actually trains with.
    pub fn effective_penalty(&self, base: &PenaltyConfig) -> PenaltyConfig {
        match self {
            Self::Loco => PenaltyConfig { zeta: 0.0, ..*base },
            Self::DwLoco => *base,
            Self::Lso | Self::GpRaw | Self::Random => PenaltyConfig {
                rho: Setting::Fixed(0.0),
                ..*base
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrainConfig {
    /// Retrain after every `interval` acquisitions.
    pub interval: usize,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for RetrainConfig {
    fn default() -> Self {
        Self {
            interval: 50,
            epochs: 100,
            lr: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub strategy: Strategy,
    /// Number of acquisitions `T`.
    pub budget: usize,
    pub retrain: RetrainConfig,
    pub penalty: PenaltyConfig,
    pub beta: BetaSchedule,
    pub seed: u64,
    /// Observation noise standard deviation; `None` means 1% of the pool
    /// label range.
    pub noise_sd: Option<f64>,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub leaky_slope: f64,
    pub pretrain: PretrainConfig,
    /// Labeled warm-start points; `None` uses the benchmark default.
    pub initial_labeled: Option<usize>,
    pub gp: GpHyper,
}

impl RunConfig {
    pub fn new(strategy: Strategy, budget: usize, seed: u64) -> Self {
        Self {
            strategy,
            budget,
            retrain: RetrainConfig::default(),
            penalty: PenaltyConfig::dw_loco(),
            beta: BetaSchedule::default(),
            seed,
            noise_sd: None,
            encoder_hidden: vec![1000, 500, 50],
            latent_dim: 1,
            leaky_slope: 0.01,
            pretrain: PretrainConfig::default(),
            initial_labeled: None,
            gp: GpHyper::new(1.0, 1.0, 1e-2).expect("valid defaults"),
        }
    }

    pub fn encoder_spec(&self, input_dim: usize) -> EncoderSpec {
        EncoderSpec {
            input_dim,
            hidden: self.encoder_hidden.clone(),
            latent_dim: self.latent_dim,
            leaky_slope: self.leaky_slope,
        }
    }

    pub fn initial_count(&self, instance: &BenchmarkInstance) -> usize {
        self.initial_labeled
            .unwrap_or_else(|| instance.benchmark.default_initial_labeled())
    }

    /// Noise level for `instance`.
    pub fn resolved_noise_sd(&self, instance: &BenchmarkInstance) -> f64 {
        self.noise_sd.unwrap_or_else(|| {
            let lo = instance
                .labels
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            0.01 * (instance.optimum - lo)
        })
    }

    pub fn validate(&self, instance: &BenchmarkInstance) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.budget < 1 {
            return bad("budget must be >= 1".into());
        }
        if self.retrain.interval < 1 {
            return bad("retrain.interval must be >= 1".into());
        }
        if !(self.retrain.lr > 0.0) {
            return bad(format!(
                "retrain.lr must be positive, got {}",
                self.retrain.lr
            ));
        }
        if let Some(sd) = self.noise_sd {
            if !(sd >= 0.0 && sd.is_finite()) {
                return bad(format!("noise.sd must be finite and >= 0, got {sd}"));
            }
        }
        self.penalty.validate()?;
        self.beta.validate()?;
        self.gp.validate()?;
        self.encoder_spec(instance.benchmark.input_dim())
            .validate()?;
        let initial = match self.strategy {
            Strategy::Random => 0,
            _ => self.initial_count(instance),
        };
        if self.strategy != Strategy::Random && initial < 2 {
            return bad("model-based strategies need at least 2 initial labeled points".into());
        }
        if initial + self.budget > instance.len() {
            return bad(format!(
                "budget {} plus {} initial points exceeds the pool size {}",
                self.budget,
                initial,
                instance.len()
            ));
        }
        Ok(())
    }
}

/// One acquisition step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub seed: u64,
    pub iter: usize,
    pub pool_id: usize,
    /// Observed (noisy) label.
    pub y: f64,
    /// Best observed label so far.
    pub best_y: f64,
    /// Pool optimum minus the best true label acquired so far.
    pub simple_regret: f64,
    /// `Σ_t (pool optimum − f(x_t))`.
    pub cumulative_regret: f64,
    pub collision_metric: f64,
    pub nll: f64,
    pub mse: f64,
    pub beta: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    BetaClamped,
    Retrained {
        lambda: f64,
        rho: f64,
        initial_loss: f64,
        final_loss: f64,
    },
    RetrainReverted {
        reason: String,
    },
}

/// Something worth flagging that does not fit a trace column. `iter` 0 is
/// the warm start before the first acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub iter: usize,
    pub kind: EventKind,
}

/// Label standardization `(y − mean) / scale`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(labels: &[f64]) -> Self {
        let n = labels.len() as f64;
        if labels.is_empty() {
            return Self {
                mean: 0.0,
                scale: 1.0,
            };
        }
        let mean = labels.iter().sum::<f64>() / n;
        let var = labels.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
        let sd = sqrt(var);
        Self {
            mean,
            scale: if sd > 0.0 && sd.is_finite() { sd } else { 1.0 },
        }
    }

    pub fn apply(&self, labels: &[f64]) -> Vec<f64> {
        labels
            .iter()
            .map(|y| (y - self.mean) / self.scale)
            .collect()
    }

    /// Moments in original label units.
    pub fn invert(&self, m: &PosteriorMoments) -> PosteriorMoments {
        PosteriorMoments {
            mean: self.mean + self.scale * m.mean,
            variance: self.scale * self.scale * m.variance,
        }
    }
}

/// Encoder (absent for raw-input GPs) plus trainable GP hyperparameters.
#[derive(Debug, Clone)]
pub struct DeepKernel {
    encoder: Option<Encoder>,
    hyper: HyperParams,
}

/// A GP fitted to standardized labels on the current features.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub gp: GpState,
    pub standardizer: Standardizer,
}

impl FittedModel {
    /// Training MSE in original label units.
    pub fn train_mse(&self) -> f64 {
        self.standardizer.scale * self.standardizer.scale * self.gp.train_mse()
    }
}

impl DeepKernel {
    pub fn new(encoder: Option<Encoder>, hyper: &GpHyper) -> Self {
        Self {
            encoder,
            hyper: HyperParams::new(hyper),
        }
    }

    pub fn encoder(&self) -> Option<&Encoder> {
        self.encoder.as_ref()
    }

    pub fn hyper(&self) -> GpHyper {
        self.hyper.current()
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hyper
    }

    /// Latent codes, or the inputs themselves without an encoder.
    pub fn features(&self, inputs: &Tensor) -> Result<Tensor> {
        match &self.encoder {
            Some(e) => e.encode_batch(inputs),
            None => Ok(inputs.clone()),
        }
    }

    fn forward(&self, graph: &mut Graph, inputs: &Tensor) -> Result<Var> {
        match &self.encoder {
            Some(e) => {
                let x = graph.input("x", inputs.clone());
                e.forward(graph, x)
            }
            None => Ok(graph.constant(inputs.clone())),
        }
    }

    pub fn fit_features(&self, features: &Tensor, labels: &[f64]) -> Result<FittedModel> {
        let standardizer = Standardizer::fit(labels);
        let gp = GpState::fit(features, &standardizer.apply(labels), &self.hyper())?;
        Ok(FittedModel { gp, standardizer })
    }

    pub fn fit(&self, inputs: &Tensor, labels: &[f64]) -> Result<FittedModel> {
        self.fit_features(&self.features(inputs)?, labels)
    }

    fn reset_optimizers(&mut self) {
        if let Some(e) = &mut self.encoder {
            e.params_mut().reset_optimizer();
        }
        self.hyper.store_mut().reset_optimizer();
    }

    fn adam_step(&mut self, opt: &Adam) -> Result<()> {
        if let Some(e) = &mut self.encoder {
            e.params_mut().adam_step(opt)?;
        }
        self.hyper.store_mut().adam_step(opt)
    }
}

/// Outcome of one retrain.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainReport {
    pub penalty: ResolvedPenalty,
    /// Pair loss before each epoch's update, then the final value.
    pub losses: Vec<f64>,
    /// Set when training hit a non-finite loss or a failed factorization;
    /// the parameters were restored.
    pub reverted: Option<String>,
}

/// λ and ρ for the observation set, resolving `Auto` settings against the
/// current parameters. Like the model itself this works in standardized
/// label units, so λ is a latent distance per label standard deviation.
pub fn resolve_penalty(
    model: &DeepKernel,
    inputs: &Tensor,
    labels: &[f64],
    penalty: &PenaltyConfig,
) -> Result<ResolvedPenalty> {
    let std_labels = Standardizer::fit(labels).apply(labels);
    let lambda = match penalty.lambda {
        Setting::Fixed(l) => l,
        Setting::Auto => estimate_lambda(inputs, &std_labels)?,
    };
    let rho = match penalty.rho {
        Setting::Fixed(r) => r,
        Setting::Auto => {
            let z = model.features(inputs)?;
            let nll = GpState::fit(&z, &std_labels, &model.hyper())?.nll();
            calibrate_rho(nll, raw_penalty(&z, &std_labels, lambda, penalty.zeta)?)
        }
    };
    Ok(ResolvedPenalty {
        lambda,
        rho,
        zeta: penalty.zeta,
    })
}

/// Full-batch Adam descent of the pair loss for `epochs` epochs, starting
/// from the current parameters. Labels are standardized first; both the
/// likelihood and the collision penalty see the standardized values.
pub fn retrain(
    model: &mut DeepKernel,
    inputs: &Tensor,
    labels: &[f64],
    penalty: &PenaltyConfig,
    config: &RetrainConfig,
) -> Result<RetrainReport> {
    if labels.len() < 2 {
        return Err(Error::Config(
            "retraining needs at least two observations".into(),
        ));
    }
    let snapshot = model.clone();
    let resolved = match resolve_penalty(model, inputs, labels, penalty) {
        Err(Error::Cholesky { condition }) => {
            return Ok(RetrainReport {
                penalty: ResolvedPenalty {
                    lambda: f64::NAN,
                    rho: f64::NAN,
                    zeta: penalty.zeta,
                },
                losses: Vec::new(),
                reverted: Some(format!("factorization failed (condition {condition:e})")),
            })
        }
        other => other?,
    };
    let std_labels = Standardizer::fit(labels).apply(labels);
    let opt = Adam::with_lr(config.lr);
    model.reset_optimizers();
    let mut losses = Vec::with_capacity(config.epochs + 1);
    let revert = |model: &mut DeepKernel, losses: Vec<f64>, reason: String| {
        *model = snapshot.clone();
        Ok(RetrainReport {
            penalty: resolved,
            losses,
            reverted: Some(reason),
        })
    };
    for epoch in 0..=config.epochs {
        let mut g = Graph::new();
        let z = model.forward(&mut g, inputs)?;
        let loss =
            match pair_loss_graph(&mut g, z, &std_labels, &std_labels, &model.hyper, &resolved) {
                Ok(l) => l,
                Err(Error::Cholesky { condition }) => {
                    return revert(
                        model,
                        losses,
                        format!("factorization failed at epoch {epoch} (condition {condition:e})"),
                    )
                }
                Err(e) => return Err(e),
            };
        let value = g.value(loss.total).item();
        losses.push(value);
        if !value.is_finite() {
            return revert(model, losses, format!("non-finite loss at epoch {epoch}"));
        }
        if epoch == config.epochs {
            break;
        }
        let grads = g.backward(loss.total)?;
        if let Some(e) = &mut model.encoder {
            grads.accumulate_into(e.params_mut());
        }
        grads.accumulate_into(model.hyper.store_mut());
        model.adam_step(&opt)?;
    }
    Ok(RetrainReport {
        penalty: resolved,
        losses,
        reverted: None,
    })
}

/// Autoencoder pretraining on the whole (unlabeled) pool. Depends only on the
/// seed, the pool and the encoder settings, so strategies sharing a seed can
/// share the result.
pub fn pretrain_encoder(config: &RunConfig, instance: &BenchmarkInstance) -> Result<Pretrained> {
    let mut rng = stream_rng(config.seed, STREAM_ENCODER);
    pretrain_autoencoder(
        config.encoder_spec(instance.benchmark.input_dim()),
        &instance.inputs,
        &config.pretrain,
        &mut rng,
    )
}

/// Optional inputs to [`run_with`].
#[derive(Default, Clone, Copy)]
pub struct RunContext<'a> {
    /// Output of [`pretrain_encoder`] for the same seed and pool; computed
    /// when absent.
    pub pretrained: Option<&'a Encoder>,
    /// Millisecond clock for the `ms` column; the column is 0 without one.
    pub clock: Option<&'a dyn Fn() -> f64>,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub rows: Vec<TraceRow>,
    pub events: Vec<Event>,
    /// Pool indices of the warm-start points, which do not count against
    /// the budget or the regret.
    pub initial: Vec<usize>,
    /// `(pool index, observed label)` in observation order, warm start first.
    pub observations: Vec<(usize, f64)>,
    pub noise_sd: f64,
    /// Penalty values from the last retrain (`None` for random search).
    pub penalty: Option<ResolvedPenalty>,
    /// β at the final step.
    pub final_beta: f64,
    /// Final model (`None` for random search).
    pub model: Option<DeepKernel>,
}

pub fn run(config: &RunConfig, instance: &BenchmarkInstance) -> Result<RunOutput> {
    run_with(config, instance, RunContext::default())
}

struct Loop<'a> {
    config: &'a RunConfig,
    instance: &'a BenchmarkInstance,
    penalty: PenaltyConfig,
    model: DeepKernel,
    obs_ids: Vec<usize>,
    obs_y: Vec<f64>,
    pool_features: Tensor,
    resolved: ResolvedPenalty,
    events: Vec<Event>,
}

impl Loop<'_> {
    fn observed_inputs(&self) -> Tensor {
        self.instance.inputs.select_rows(&self.obs_ids)
    }

    fn retrain(&mut self, iter: usize) -> Result<()> {
        let inputs = self.observed_inputs();
        let report = retrain(
            &mut self.model,
            &inputs,
            &self.obs_y,
            &self.penalty,
            &self.config.retrain,
        )?;
        match report.reverted {
            Some(reason) => self.events.push(Event {
                iter,
                kind: EventKind::RetrainReverted { reason },
            }),
            None => {
                self.resolved = report.penalty;
                self.events.push(Event {
                    iter,
                    kind: EventKind::Retrained {
                        lambda: report.penalty.lambda,
                        rho: report.penalty.rho,
                        initial_loss: report.losses[0],
                        final_loss: *report.losses.last().expect("at least one loss"),
                    },
                });
            }
        }
        self.pool_features = self.model.features(&self.instance.inputs)?;
        Ok(())
    }

    fn fit(&self) -> Result<FittedModel> {
        let z = self.pool_features.select_rows(&self.obs_ids);
        self.model.fit_features(&z, &self.obs_y)
    }
}

/// Runs `config.budget` acquisitions on `instance`.
pub fn run_with(
    config: &RunConfig,
    instance: &BenchmarkInstance,
    ctx: RunContext<'_>,
) -> Result<RunOutput> {
    config.validate(instance)?;
    let n = instance.len();
    let noise_sd = config.resolved_noise_sd(instance);
    let mut noise_rng = stream_rng(config.seed, STREAM_NOISE);
    let observed: Vec<f64> = instance
        .labels
        .iter()
        .map(|&f| {
            let e: f64 = noise_rng.sample(StandardNormal);
            f + noise_sd * e
        })
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(config.seed, STREAM_INITIAL));
    let initial: Vec<usize> = if config.strategy == Strategy::Random {
        Vec::new()
    } else {
        order[..config.initial_count(instance)].to_vec()
    };
    let mut chosen = vec![false; n];
    for &i in &initial {
        chosen[i] = true;
    }

    let now = |ctx: &RunContext<'_>| ctx.clock.map_or(0.0, |c| c());
    let mut rows = Vec::with_capacity(config.budget);
    let mut best_y = f64::NEG_INFINITY;
    let mut best_f = f64::NEG_INFINITY;
    let mut cumulative = 0.0;
    let mut record = |rows: &mut Vec<TraceRow>, iter, idx: usize, diag: [f64; 4], ms| {
        let y = observed[idx];
        best_y = best_y.max(y);
        best_f = best_f.max(instance.labels[idx]);
        cumulative += instance.optimum - instance.labels[idx];
        rows.push(TraceRow {
            seed: config.seed,
            iter,
            pool_id: idx,
            y,
            best_y,
            simple_regret: instance.optimum - best_f,
            cumulative_regret: cumulative,
            collision_metric: diag[0],
            nll: diag[1],
            mse: diag[2],
            beta: diag[3],
            ms,
        });
    };

    if config.strategy == Strategy::Random {
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut stream_rng(config.seed, STREAM_RANDOM));
        let mut events = Vec::new();
        let mut beta = f64::NAN;
        for (k, &idx) in perm[..config.budget].iter().enumerate() {
            let t0 = now(&ctx);
            let b = config.beta.beta(k + 1)?;
            beta = b.value;
            if b.clamped {
                events.push(Event {
                    iter: k + 1,
                    kind: EventKind::BetaClamped,
                });
            }
            let nan = f64::NAN;
            record(
                &mut rows,
                k + 1,
                idx,
                [nan, nan, nan, b.value],
                now(&ctx) - t0,
            );
        }
        return Ok(RunOutput {
            rows,
            events,
            initial,
            observations: perm[..config.budget]
                .iter()
                .map(|&i| (i, observed[i]))
                .collect(),
            noise_sd,
            penalty: None,
            final_beta: beta,
            model: None,
        });
    }

    let encoder = if config.strategy.uses_encoder() {
        Some(match ctx.pretrained {
            Some(e) => e.clone(),
            None => pretrain_encoder(config, instance)?.encoder,
        })
    } else {
        None
    };
    let model = DeepKernel::new(encoder, &config.gp);
    let pool_features = model.features(&instance.inputs)?;
    let mut lp = Loop {
        config,
        instance,
        penalty: config.strategy.effective_penalty(&config.penalty),
        model,
        obs_y: initial.iter().map(|&i| observed[i]).collect(),
        obs_ids: initial.clone(),
        pool_features,
        resolved: ResolvedPenalty {
            lambda: f64::NAN,
            rho: f64::NAN,
            zeta: 0.0,
        },
        events: Vec::new(),
    };
    lp.retrain(0)?;
    let mut fitted = lp.fit()?;
    let mut beta = f64::NAN;

    for t in 1..=config.budget {
        let t0 = now(&ctx);
        let b = config.beta.beta(t)?;
        beta = b.value;
        if b.clamped {
            lp.events.push(Event {
                iter: t,
                kind: EventKind::BetaClamped,
            });
        }
        let moments = fitted.gp.posterior_batch(&lp.pool_features)?;
        let scores: Vec<f64> = moments.iter().map(|m| ucb_score(m, b.value)).collect();
        let idx = select(&scores, &chosen)?;
        chosen[idx] = true;
        lp.obs_ids.push(idx);
        lp.obs_y.push(observed[idx]);
        if t % config.retrain.interval == 0 {
            lp.retrain(t)?;
        }
        fitted = lp.fit()?;
        let z = lp.pool_features.select_rows(&lp.obs_ids);
        let std_y = fitted.standardizer.apply(&lp.obs_y);
        let collision = collision_metric(&z, &std_y, lp.resolved.lambda)?;
        let diag = [collision, fitted.gp.nll(), fitted.train_mse(), b.value];
        record(&mut rows, t, idx, diag, now(&ctx) - t0);
    }

    Ok(RunOutput {
        rows,
        observations: lp
            .obs_ids
            .iter()
            .copied()
            .zip(lp.obs_y.iter().copied())
            .collect(),
        events: lp.events,
        initial,
        noise_sd,
        penalty: Some(lp.resolved),
        final_beta: beta,
        model: Some(lp.model),
    })
}

/// Mean and standard error of simple regret at one iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretPoint {
    pub iter: usize,
    pub mean: f64,
    pub se: f64,
}

/// Per-iteration mean and standard error (`sd / sqrt(n)`, sample sd) across
/// seeds. Each series is one seed's simple regret by iteration.
pub fn summarize(series: &[Vec<f64>]) -> Result<Vec<RegretPoint>> {
    if series.len() < 2 {
        return Err(Error::TooFewSeeds(series.len()));
    }
    let len = series[0].len();
    if let Some(s) = series.iter().find(|s| s.len() != len) {
        return Err(Error::RaggedSeeds(len, s.len()));
    }
    let k = series.len() as f64;
    let mut column = Vec::with_capacity(series.len());
    Ok((0..len)
        .map(|t| {
            column.clear();
            column.extend(series.iter().map(|s| s[t]));
            // sorting makes the sums independent of seed order
            column.sort_by(f64::total_cmp);
            let mean = column.iter().sum::<f64>() / k;
            let ss: f64 = column.iter().map(|v| (v - mean) * (v - mean)).sum();
            RegretPoint {
                iter: t + 1,
                mean,
                se: sqrt(ss / (k - 1.0)) / sqrt(k),
            }
        })
        .collect())
}

/// [`summarize`] over the simple-regret column of per-seed traces.
pub fn regret_summary(traces: &[Vec<TraceRow>]) -> Result<Vec<RegretPoint>> {
    let series: Vec<Vec<f64>> = traces
        .iter()
        .map(|rows| rows.iter().map(|r| r.simple_regret).collect())
        .collect();
    summarize(&series)
}

/// Per-candidate view of a fitted model over the whole pool.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentRecord {
    pub pool_id: usize,
    pub latent: Vec<f64>,
    /// Observed label when `observed`, the true label otherwise.
    pub y: f64,
    pub observed: bool,
    pub mean: f64,
    pub variance: f64,
    pub ucb: f64,
    /// Smallest latent distance per unit (standardized) label gap to any
    /// other candidate.
    pub pointwise_lambda: Option<f64>,
}

/// Latent codes, posterior moments and UCB scores (original label units) for
/// every pool candidate, given the observations the model was fitted on.
pub fn latent_report(
    model: &DeepKernel,
    instance: &BenchmarkInstance,
    observations: &[(usize, f64)],
    beta: f64,
) -> Result<Vec<LatentRecord>> {
    if observations.is_empty() {
        return Err(Error::Empty);
    }
    let z = model.features(&instance.inputs)?;
    let ids: Vec<usize> = observations.iter().map(|o| o.0).collect();
    if let Some(&bad) = ids.iter().find(|&&i| i >= instance.len()) {
        return Err(Error::Config(format!(
            "observation index {bad} outside the pool"
        )));
    }
    let labels: Vec<f64> = observations.iter().map(|o| o.1).collect();
    let fitted = model.fit_features(&z.select_rows(&ids), &labels)?;
    let moments = fitted.gp.posterior_batch(&z)?;
    let mut y = instance.labels.clone();
    let mut observed = vec![false; instance.len()];
    for &(i, v) in observations {
        y[i] = v;
        observed[i] = true;
    }
    let lambdas = pointwise_lambda(&z, &fitted.standardizer.apply(&y))?;
    Ok(moments
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let raw = fitted.standardizer.invert(m);
            LatentRecord {
                pool_id: i,
                latent: z.row(i).to_vec(),
                y: y[i],
                observed: observed[i],
                mean: raw.mean,
                variance: raw.variance,
                ucb: ucb_score(&raw, beta),
                pointwise_lambda: lambdas[i],
            }
        })
        .collect())
}
