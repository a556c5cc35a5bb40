//! Exact Gaussian process regression over latent codes with a squared
//! exponential kernel. Composed with an [`crate::encoder::Encoder`] this is
//! the deep kernel `k(g(x), g(x'))`.

use alloc::vec::Vec;

use libm::{exp, log, log1p};

use crate::diffmath::{Graph, ParamId, ParamStore, Var};
use crate::linalg::Cholesky;
use crate::{Error, Result, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Variances below zero by more than this (relative to the signal variance
/// when that exceeds 1) are treated as numerical breakdown.
const VARIANCE_TOLERANCE: f64 = 1e-10;

/// Log-parameterized SE kernel and noise hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpHyper {
    pub log_signal_var: f64,
    pub log_lengthscale: f64,
    pub log_noise_var: f64,
}

impl GpHyper {
    pub fn new(signal_var: f64, lengthscale: f64, noise_var: f64) -> Result<Self> {
        let h = Self {
            log_signal_var: log(signal_var),
            log_lengthscale: log(lengthscale),
            log_noise_var: log(noise_var),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn signal_var(&self) -> f64 {
        exp(self.log_signal_var)
    }

    pub fn lengthscale(&self) -> f64 {
        exp(self.log_lengthscale)
    }

    pub fn noise_var(&self) -> f64 {
        exp(self.log_noise_var)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.signal_var()) && ok(self.lengthscale()) && ok(self.noise_var()) {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!(
                "GP hyperparameters must be positive and finite: {self:?}"
            )))
        }
    }
}

/// Predictive mean and variance at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMoments {
    pub mean: f64,
    pub variance: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `σ²_SE · exp(−‖z1 − z2‖² / (2l))`.
pub fn se_kernel(z1: &[f64], z2: &[f64], hyper: &GpHyper) -> f64 {
    debug_assert_eq!(z1.len(), z2.len());
    hyper.signal_var() * exp(-sq_dist(z1, z2) / (2.0 * hyper.lengthscale()))
}

/// Gram matrix of the SE kernel over the rows of `latents`.
pub fn kernel_matrix(latents: &Tensor, hyper: &GpHyper) -> Tensor {
    let n = latents.rows();
    let sv = hyper.signal_var();
    let mut k = Tensor::zeros(n, n);
    for i in 0..n {
        k.set(i, i, sv);
        for j in 0..i {
            let v = se_kernel(latents.row(i), latents.row(j), hyper);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// A fitted GP: training data, the Cholesky factor of `K + σ²I` and the
/// solved vector `(K + σ²I)⁻¹ y`. Immutable once fitted.
#[derive(Debug, Clone)]
pub struct GpState {
    latents: Tensor,
    labels: Vec<f64>,
    hyper: GpHyper,
    factor: Cholesky,
    alpha: Vec<f64>,
}

impl GpState {
    pub fn fit(latents: &Tensor, labels: &[f64], hyper: &GpHyper) -> Result<Self> {
        if latents.rows() == 0 {
            return Err(Error::Empty);
        }
        if latents.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: latents.rows(),
                got: labels.len(),
            });
        }
        if labels.iter().any(|y| !y.is_finite()) {
            return Err(Error::Config("labels must be finite".into()));
        }
        hyper.validate()?;
        let mut k = kernel_matrix(latents, hyper);
        let noise = hyper.noise_var();
        for i in 0..k.rows() {
            k.set(i, i, k.get(i, i) + noise);
        }
        let factor = Cholesky::new(&k, hyper.signal_var())?;
        let alpha = factor.solve(labels);
        Ok(Self {
            latents: latents.clone(),
            labels: labels.to_vec(),
            hyper: *hyper,
            factor,
            alpha,
        })
    }

    pub fn hyper(&self) -> &GpHyper {
        &self.hyper
    }

    pub fn latents(&self) -> &Tensor {
        &self.latents
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn factor(&self) -> &Cholesky {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    fn clamp_variance(&self, var: f64) -> Result<f64> {
        if var >= 0.0 {
            return Ok(var);
        }
        let tol = VARIANCE_TOLERANCE * self.hyper.signal_var().max(1.0);
        if var >= -tol {
            Ok(0.0)
        } else {
            Err(Error::NegativeVariance(var))
        }
    }

    pub fn posterior(&self, z: &[f64]) -> Result<PosteriorMoments> {
        if z.len() != self.latents.cols() {
            return Err(Error::Dimension {
                expected: self.latents.cols(),
                got: z.len(),
            });
        }
        let kz: Vec<f64> = (0..self.len())
            .map(|i| se_kernel(self.latents.row(i), z, &self.hyper))
            .collect();
        let mean = kz.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let mut v = kz;
        self.factor.solve_lower_in_place(&mut v);
        let var = self.hyper.signal_var() - v.iter().map(|x| x * x).sum::<f64>();
        Ok(PosteriorMoments {
            mean,
            variance: self.clamp_variance(var)?,
        })
    }

    /// Moments for every row of `queries`; same arithmetic as
    /// [`GpState::posterior`] organised as one multi-RHS triangular solve.
    pub fn posterior_batch(&self, queries: &Tensor) -> Result<Vec<PosteriorMoments>> {
        if queries.cols() != self.latents.cols() {
            return Err(Error::Dimension {
                expected: self.latents.cols(),
                got: queries.cols(),
            });
        }
        let (t, m) = (self.len(), queries.rows());
        let mut cross = Tensor::zeros(t, m);
        for i in 0..t {
            let zi = self.latents.row(i);
            for (j, c) in cross.row_mut(i).iter_mut().enumerate() {
                *c = se_kernel(zi, queries.row(j), &self.hyper);
            }
        }
        let mut means = alloc::vec![0.0; m];
        for i in 0..t {
            let a = self.alpha[i];
            for (mu, &k) in means.iter_mut().zip(cross.row(i)) {
                *mu += k * a;
            }
        }
        self.factor.solve_lower_matrix(&mut cross);
        let mut reduction = alloc::vec![0.0; m];
        for i in 0..t {
            for (r, &v) in reduction.iter_mut().zip(cross.row(i)) {
                *r += v * v;
            }
        }
        let sv = self.hyper.signal_var();
        means
            .into_iter()
            .zip(reduction)
            .map(|(mean, red)| {
                Ok(PosteriorMoments {
                    mean,
                    variance: self.clamp_variance(sv - red)?,
                })
            })
            .collect()
    }

    /// `½ yᵀ(K+σ²I)⁻¹y + ½ log det(K+σ²I) + (t/2) log 2π`.
    pub fn nll(&self) -> f64 {
        let fit: f64 = self
            .labels
            .iter()
            .zip(&self.alpha)
            .map(|(a, b)| a * b)
            .sum();
        0.5 * fit + 0.5 * self.factor.log_det() + 0.5 * self.len() as f64 * LN_2PI
    }

    /// Posterior means at the training latents, `y − (σ² + jitter)·α`.
    pub fn train_means(&self) -> Vec<f64> {
        let shift = self.hyper.noise_var() + self.factor.jitter();
        self.labels
            .iter()
            .zip(&self.alpha)
            .map(|(y, a)| y - shift * a)
            .collect()
    }

    /// Mean squared error of [`GpState::train_means`] against the labels.
    pub fn train_mse(&self) -> f64 {
        let means = self.train_means();
        let n = self.len() as f64;
        means
            .iter()
            .zip(&self.labels)
            .map(|(m, y)| (m - y) * (m - y))
            .sum::<f64>()
            / n
    }
}

/// `½ Σ_t log(1 + σ⁻² σ²_{t−1}(z_t))` from the sequence of predictive
/// variances at the chosen points.
pub fn information_gain(variances: &[f64], noise_var: f64) -> f64 {
    0.5 * variances.iter().map(|v| log1p(v / noise_var)).sum::<f64>()
}

/// GP hyperparameters as trainable `1 x 1` parameters.
#[derive(Debug, Clone)]
pub struct HyperParams {
    store: ParamStore,
    log_signal_var: ParamId,
    log_lengthscale: ParamId,
    log_noise_var: ParamId,
}

impl HyperParams {
    pub fn new(init: &GpHyper) -> Self {
        let mut store = ParamStore::new();
        let log_signal_var = store.add("gp.log_signal_var", Tensor::scalar(init.log_signal_var));
        let log_lengthscale = store.add("gp.log_lengthscale", Tensor::scalar(init.log_lengthscale));
        let log_noise_var = store.add("gp.log_noise_var", Tensor::scalar(init.log_noise_var));
        Self {
            store,
            log_signal_var,
            log_lengthscale,
            log_noise_var,
        }
    }

    pub fn current(&self) -> GpHyper {
        GpHyper {
            log_signal_var: self.store.value(self.log_signal_var).item(),
            log_lengthscale: self.store.value(self.log_lengthscale).item(),
            log_noise_var: self.store.value(self.log_noise_var).item(),
        }
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Records the GP negative log marginal likelihood of `labels` given the
    /// latent rows held by `latents`.
    pub fn nll_graph(&self, graph: &mut Graph, latents: Var, labels: &[f64]) -> Result<Var> {
        let n = graph.value(latents).rows();
        if n != labels.len() {
            return Err(Error::Dimension {
                expected: n,
                got: labels.len(),
            });
        }
        let log_sv = graph.param(&self.store, self.log_signal_var);
        let log_l = graph.param(&self.store, self.log_lengthscale);
        let log_noise = graph.param(&self.store, self.log_noise_var);
        let sv = graph.exp(log_sv);
        let neg_log_l = graph.scale(log_l, -1.0);
        let inv_l = graph.exp(neg_log_l);
        let coef = graph.scale(inv_l, -0.5);
        let d2 = graph.pair_sq_dist(latents);
        let scaled = graph.mul_scalar(d2, coef)?;
        let corr = graph.exp(scaled);
        let k = graph.mul_scalar(corr, sv)?;
        let noise = graph.exp(log_noise);
        let cov = graph.add_diag(k, noise)?;
        let y = graph.constant(Tensor::column(labels.to_vec()));
        let jitter_scale = graph.value(sv).item();
        graph.gaussian_nll(cov, y, jitter_scale)
    }
}
