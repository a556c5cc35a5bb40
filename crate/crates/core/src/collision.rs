//! Collision penalty on learned latent codes, its importance weights, the
//! regularized pair loss, and the rules for choosing λ and ρ.
//!
//! A pair of observations collides when their latent codes are closer than
//! λ times their label gap. The penalty for a pair is
//! `max(λ|y_i − y_j| − ‖z_i − z_j‖, 0)`; the regularizer is the
//! importance-weighted sum of pair penalties over all ordered pairs
//! (self-pairs included), scaled by `ρ / n²`.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, sqrt};

use crate::diffmath::{Graph, Var};
use crate::gp::HyperParams;
use crate::{Error, Result, Tensor};

/// Offset in the ρ calibration ratio.
pub const RHO_EPS: f64 = 1e-8;

/// A parameter that is either fixed or resolved from data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Setting {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyConfig {
    pub lambda: Setting,
    pub rho: Setting,
    /// 0 gives uniform weights; positive values favour high-label pairs.
    pub zeta: f64,
}

impl PenaltyConfig {
    /// Uniform weights, λ = 1, ρ calibrated.
    pub fn loco() -> Self {
        Self {
            lambda: Setting::Fixed(1.0),
            rho: Setting::Auto,
            zeta: 0.0,
        }
    }

    /// Softmax weights with ζ = 1, λ = 1, ρ calibrated.
    pub fn dw_loco() -> Self {
        Self {
            zeta: 1.0,
            ..Self::loco()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Setting::Fixed(l) = self.lambda {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::Config(alloc::format!(
                    "lambda must be positive, got {l}"
                )));
            }
        }
        if let Setting::Fixed(r) = self.rho {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(Error::Config(alloc::format!(
                    "rho must be non-negative, got {r}"
                )));
            }
        }
        if !self.zeta.is_finite() || self.zeta < 0.0 {
            return Err(Error::Config(alloc::format!(
                "zeta must be finite and >= 0, got {}",
                self.zeta
            )));
        }
        Ok(())
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self::loco()
    }
}

/// Penalty parameters with λ and ρ resolved to numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResolvedPenalty {
    pub lambda: f64,
    pub rho: f64,
    pub zeta: f64,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Collision penalty of a single pair.
pub fn penalty(zi: &[f64], yi: f64, zj: &[f64], yj: f64, lambda: f64) -> f64 {
    let excess = lambda * (yi - yj).abs() - dist(zi, zj);
    if excess > 0.0 {
        excess
    } else {
        0.0
    }
}

/// All ordered pairs `(i, j)` of an observation set, row-major, with latent
/// distances and label gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    n: usize,
    distances: Vec<f64>,
    label_gaps: Vec<f64>,
}

impl PairBatch {
    pub fn new(latents: &Tensor, labels: &[f64]) -> Result<Self> {
        let n = latents.rows();
        if n != labels.len() {
            return Err(Error::Dimension {
                expected: n,
                got: labels.len(),
            });
        }
        let mut distances = vec![0.0; n * n];
        let mut label_gaps = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = dist(latents.row(i), latents.row(j));
                let gap = (labels[i] - labels[j]).abs();
                distances[i * n + j] = d;
                distances[j * n + i] = d;
                label_gaps[i * n + j] = gap;
                label_gaps[j * n + i] = gap;
            }
        }
        Ok(Self {
            n,
            distances,
            label_gaps,
        })
    }

    /// Number of observations (the batch holds `n²` pairs).
    pub fn observations(&self) -> usize {
        self.n
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn label_gaps(&self) -> &[f64] {
        &self.label_gaps
    }

    /// Per-pair penalties, row-major.
    pub fn penalties(&self, lambda: f64) -> Vec<f64> {
        self.distances
            .iter()
            .zip(&self.label_gaps)
            .map(|(&d, &gap)| {
                let excess = lambda * gap - d;
                if excess > 0.0 {
                    excess
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// `Σ_ij w_ij p_ij`, summed in row-major order.
    pub fn weighted_sum(&self, lambda: f64, weights: &[f64]) -> f64 {
        debug_assert_eq!(weights.len(), self.n * self.n);
        self.penalties(lambda)
            .iter()
            .zip(weights)
            .map(|(p, w)| w * p)
            .sum()
    }
}

/// Softmax importance weights `e^{ζ(y_i+y_j)} / Σ e^{ζ(y_m+y_n)}` over all
/// ordered pairs, row-major, computed with a max shift.
pub fn weights(labels: &[f64], zeta: f64) -> Vec<f64> {
    let n = labels.len();
    let mut scores = Vec::with_capacity(n * n);
    for &yi in labels {
        for &yj in labels {
            scores.push(zeta * (yi + yj));
        }
    }
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in &mut scores {
        *s = exp(*s - max);
        total += *s;
    }
    scores.iter_mut().for_each(|s| *s /= total);
    scores
}

/// The regularizer at ρ = 1: `(1/n²) Σ_ij w_ij p_ij`.
pub fn raw_penalty(latents: &Tensor, labels: &[f64], lambda: f64, zeta: f64) -> Result<f64> {
    let batch = PairBatch::new(latents, labels)?;
    let n = labels.len() as f64;
    Ok(batch.weighted_sum(lambda, &weights(labels, zeta)) / (n * n))
}

/// Records `(ρ/n²) Σ_ij w_ij p_ij` on `graph` for the latent rows in
/// `latents`.
pub fn penalty_graph(
    graph: &mut Graph,
    latents: Var,
    labels: &[f64],
    penalty: &ResolvedPenalty,
) -> Result<Var> {
    let n = labels.len();
    if graph.value(latents).rows() != n {
        return Err(Error::Dimension {
            expected: graph.value(latents).rows(),
            got: n,
        });
    }
    let mut gaps = Tensor::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            gaps.set(i, j, penalty.lambda * (labels[i] - labels[j]).abs());
        }
    }
    let scale = penalty.rho / (n * n) as f64;
    let w: Vec<f64> = weights(labels, penalty.zeta)
        .into_iter()
        .map(|w| w * scale)
        .collect();
    let d = graph.pair_dist(latents);
    let gaps = graph.constant(gaps);
    let excess = graph.sub(gaps, d)?;
    let p = graph.relu(excess);
    let w = graph.constant(Tensor::new(n, n, w)?);
    let weighted = graph.mul(p, w)?;
    Ok(graph.sum(weighted))
}

/// Graph handles of one pair-loss evaluation.
#[derive(Debug, Clone, Copy)]
pub struct PairLoss {
    pub total: Var,
    pub nll: Var,
    /// `None` when ρ = 0: the regularizer is not recorded at all.
    pub penalty: Option<Var>,
}

/// GP negative log marginal likelihood of `gp_labels` plus the collision
/// regularizer on the raw `labels`.
///
/// The two label vectors differ when the GP is fitted to standardized
/// targets; the penalty always sees observed values.
pub fn pair_loss_graph(
    graph: &mut Graph,
    latents: Var,
    gp_labels: &[f64],
    labels: &[f64],
    hyper: &HyperParams,
    penalty: &ResolvedPenalty,
) -> Result<PairLoss> {
    let nll = hyper.nll_graph(graph, latents, gp_labels)?;
    if penalty.rho == 0.0 {
        return Ok(PairLoss {
            total: nll,
            nll,
            penalty: None,
        });
    }
    let reg = penalty_graph(graph, latents, labels, penalty)?;
    let total = graph.add(nll, reg)?;
    Ok(PairLoss {
        total,
        nll,
        penalty: Some(reg),
    })
}

/// Largest λ with zero total input-space collision:
/// `min_{y_i ≠ y_j} ‖x_i − x_j‖ / |y_i − y_j|`.
pub fn estimate_lambda(inputs: &Tensor, labels: &[f64]) -> Result<f64> {
    let n = inputs.rows();
    if n != labels.len() {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in 0..i {
            let gap = (labels[i] - labels[j]).abs();
            if gap > 0.0 {
                best = best.min(dist(inputs.row(i), inputs.row(j)) / gap);
            }
        }
    }
    if best == f64::INFINITY {
        return Err(Error::LambdaUnconstrained);
    }
    if best <= 0.0 {
        return Err(Error::LambdaDegenerate);
    }
    // the division can round up by an ulp; step down until every pair is
    // satisfied so the input-space penalty is exactly zero
    loop {
        let violated = (0..n).any(|i| {
            (0..i).any(|j| {
                best * (labels[i] - labels[j]).abs() - dist(inputs.row(i), inputs.row(j)) > 0.0
            })
        });
        if !violated {
            return Ok(best);
        }
        best = best.next_down();
    }
}

/// ρ that puts the regularizer on the scale of the NLL:
/// `|nll| / (raw + ε)`, or 1 when the raw penalty is zero.
pub fn calibrate_rho(nll: f64, raw_penalty: f64) -> f64 {
    if raw_penalty == 0.0 {
        return 1.0;
    }
    nll.abs() / (raw_penalty + RHO_EPS)
}

/// Mean pair penalty over all ordered pairs. Diagnostic only.
pub fn collision_metric(latents: &Tensor, labels: &[f64], lambda: f64) -> Result<f64> {
    let batch = PairBatch::new(latents, labels)?;
    let n = labels.len();
    if n == 0 {
        return Ok(0.0);
    }
    Ok(batch.penalties(lambda).iter().sum::<f64>() / (n * n) as f64)
}

/// For each point, `min_{j ≠ i, y_j ≠ y_i} ‖z_i − z_j‖ / |y_i − y_j|`, or
/// `None` if every other label equals its own.
pub fn pointwise_lambda(latents: &Tensor, labels: &[f64]) -> Result<Vec<Option<f64>>> {
    let n = latents.rows();
    if n != labels.len() {
        return Err(Error::Dimension {
            expected: n,
            got: labels.len(),
        });
    }
    Ok((0..n)
        .map(|i| {
            let mut best: Option<f64> = None;
            for j in 0..n {
                let gap = (labels[i] - labels[j]).abs();
                if j == i || gap == 0.0 {
                    continue;
                }
                let r = dist(latents.row(i), latents.row(j)) / gap;
                best = Some(best.map_or(r, |b| b.min(r)));
            }
            best
        })
        .collect())
}
