//! File formats. CSV is UTF-8 with LF line endings and `.` decimals; floats
//! use Rust's shortest round-trip formatting, so identical runs give
//! identical bytes.

use std::io::{self, Write};

use loco_core::bench::BenchmarkInstance;
use loco_core::driver::{
    DeepKernel, Event, EventKind, LatentRecord, RegretPoint, RunOutput, TraceRow,
};
use loco_core::encoder::{Encoder, EncoderSpec};
use loco_core::gp::GpHyper;
use loco_core::Tensor;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const TRACE_SCHEMA_VERSION: u32 = 1;
pub const TRACE_HEADER: &str =
    "seed,iter,pool_id,y,best_y,simple_regret,collision_metric,nll,mse,beta,ms";
pub const AGGREGATE_HEADER: &str = "iter,mean_simple_regret,se_simple_regret";

/// Writes one seed's trace. `ms` is written as 0 unless `timing` is set.
pub fn write_trace<W: Write>(mut w: W, rows: &[TraceRow], timing: bool) -> io::Result<()> {
    writeln!(w, "{TRACE_HEADER}")?;
    for r in rows {
        let ms = if timing { r.ms } else { 0.0 };
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.iter,
            r.pool_id,
            r.y,
            r.best_y,
            r.simple_regret,
            r.collision_metric,
            r.nll,
            r.mse,
            r.beta,
            ms
        )?;
    }
    w.flush()
}

pub fn write_aggregate<W: Write>(mut w: W, points: &[RegretPoint]) -> io::Result<()> {
    writeln!(w, "{AGGREGATE_HEADER}")?;
    for p in points {
        writeln!(w, "{},{},{}", p.iter, p.mean, p.se)?;
    }
    w.flush()
}

/// Sweep results: one aggregate block per swept value.
pub fn write_sweep<W: Write>(mut w: W, blocks: &[(f64, Vec<RegretPoint>)]) -> io::Result<()> {
    writeln!(w, "value,{AGGREGATE_HEADER}")?;
    for (value, points) in blocks {
        for p in points {
            writeln!(w, "{value},{},{},{}", p.iter, p.mean, p.se)?;
        }
    }
    w.flush()
}

fn num(v: f64) -> Value {
    // JSON has no NaN; absent values become null
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

pub fn event_record(seed: u64, e: &Event) -> Value {
    match &e.kind {
        EventKind::BetaClamped => json!({ "seed": seed, "iter": e.iter, "kind": "beta_clamped" }),
        EventKind::Retrained {
            lambda,
            rho,
            initial_loss,
            final_loss,
        } => json!({
            "seed": seed,
            "iter": e.iter,
            "kind": "retrained",
            "lambda": num(*lambda),
            "rho": num(*rho),
            "initial_loss": num(*initial_loss),
            "final_loss": num(*final_loss),
        }),
        EventKind::RetrainReverted { reason } => json!({
            "seed": seed,
            "iter": e.iter,
            "kind": "retrain_reverted",
            "reason": reason,
        }),
    }
}

pub fn write_events<W: Write>(mut w: W, seed: u64, events: &[Event]) -> io::Result<()> {
    for e in events {
        writeln!(w, "{}", event_record(seed, e))?;
    }
    w.flush()
}

pub fn latent_record(r: &LatentRecord) -> Value {
    json!({
        "pool_id": r.pool_id,
        "latent": r.latent,
        "y": r.y,
        "observed": r.observed,
        "mean": r.mean,
        "variance": r.variance,
        "ucb": r.ucb,
        "pointwise_lambda": r.pointwise_lambda,
    })
}

pub fn write_latents<W: Write>(mut w: W, records: &[LatentRecord]) -> io::Result<()> {
    for r in records {
        writeln!(w, "{}", latent_record(r))?;
    }
    w.flush()
}

/// Pool as CSV: `id,x0,..,x{d-1},label`.
pub fn write_pool<W: Write>(mut w: W, pool: &BenchmarkInstance) -> io::Result<()> {
    let d = pool.inputs.cols();
    let mut header = String::from("id");
    for c in 0..d {
        header.push_str(&format!(",x{c}"));
    }
    writeln!(w, "{header},label")?;
    for i in 0..pool.len() {
        write!(w, "{i}")?;
        for v in pool.inputs.row(i) {
            write!(w, ",{v}")?;
        }
        writeln!(w, ",{}", pool.labels[i])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedArray {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub leaky_slope: f64,
    pub arrays: Vec<NamedArray>,
}

/// Saved model and observations of a finished run, enough to rebuild the
/// posterior over the pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub seed: u64,
    pub strategy: String,
    pub benchmark: String,
    pub input_dim: usize,
    pub pool_size: usize,
    pub pool_seed: u64,
    pub encoder: Option<EncoderState>,
    pub signal_var: f64,
    pub lengthscale: f64,
    pub noise_var: f64,
    pub observations: Vec<(usize, f64)>,
    pub final_beta: f64,
}

impl Checkpoint {
    /// `None` for runs without a model (random search).
    pub fn from_run(
        seed: u64,
        strategy: &str,
        pool: &BenchmarkInstance,
        out: &RunOutput,
    ) -> Option<Self> {
        let model = out.model.as_ref()?;
        let encoder = model.encoder().map(|e| {
            let spec = e.spec();
            EncoderState {
                input_dim: spec.input_dim,
                hidden: spec.hidden.clone(),
                latent_dim: spec.latent_dim,
                leaky_slope: spec.leaky_slope,
                arrays: e
                    .named_arrays()
                    .map(|(name, t)| NamedArray {
                        name: name.into(),
                        rows: t.rows(),
                        cols: t.cols(),
                        data: t.as_slice().to_vec(),
                    })
                    .collect(),
            }
        });
        let h = model.hyper();
        Some(Self {
            seed,
            strategy: strategy.into(),
            benchmark: pool.name().into(),
            input_dim: pool.inputs.cols(),
            pool_size: pool.len(),
            pool_seed: pool.seed,
            encoder,
            signal_var: h.signal_var(),
            lengthscale: h.lengthscale(),
            noise_var: h.noise_var(),
            observations: out.observations.clone(),
            final_beta: out.final_beta,
        })
    }

    pub fn model(&self) -> loco_core::Result<DeepKernel> {
        let hyper = GpHyper::new(self.signal_var, self.lengthscale, self.noise_var)?;
        let encoder = match &self.encoder {
            None => None,
            Some(s) => {
                let spec = EncoderSpec {
                    input_dim: s.input_dim,
                    hidden: s.hidden.clone(),
                    latent_dim: s.latent_dim,
                    leaky_slope: s.leaky_slope,
                };
                let arrays = s
                    .arrays
                    .iter()
                    .map(|a| {
                        Ok((
                            a.name.as_str(),
                            Tensor::new(a.rows, a.cols, a.data.clone())?,
                        ))
                    })
                    .collect::<loco_core::Result<Vec<_>>>()?;
                Some(Encoder::from_named_arrays(spec, arrays)?)
            }
        };
        Ok(DeepKernel::new(encoder, &hyper))
    }
}
