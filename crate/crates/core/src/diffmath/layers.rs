use alloc::format;

use libm::sqrt;
use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use crate::{Error, Result, Tensor};

/// Elementwise nonlinearity applied after a dense layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    LeakyRelu(f64),
}

impl Activation {
    /// LeakyReLU with the default negative slope.
    pub const LEAKY: Activation = Activation::LeakyRelu(0.01);

    pub fn apply(self, graph: &mut Graph, x: Var) -> Var {
        match self {
            Activation::Identity => x,
            Activation::Tanh => graph.tanh(x),
            Activation::LeakyRelu(slope) => graph.leaky_relu(x, slope),
        }
    }

    pub fn eval(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => libm::tanh(x),
            Activation::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }
}

/// Affine map `x·W + b` followed by an activation. Inputs are batches of
/// row vectors (`n x in_dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

impl Dense {
    /// Registers `{prefix}.weight` and `{prefix}.bias` in `store`. Weights are
    /// uniform in `±sqrt(6 / (in + out))`, biases zero.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!(
                "dense layer `{prefix}` needs positive dims, got {in_dim} -> {out_dim}"
            )));
        }
        let limit = sqrt(6.0 / (in_dim + out_dim) as f64);
        let mut w = Tensor::zeros(in_dim, out_dim);
        for v in w.as_mut_slice() {
            *v = rng.random_range(-limit..limit);
        }
        let weight = store.add(&format!("{prefix}.weight"), w);
        let bias = store.add(&format!("{prefix}.bias"), Tensor::zeros(1, out_dim));
        Ok(Self {
            weight,
            bias,
            in_dim,
            out_dim,
            activation,
        })
    }

    pub fn forward(&self, graph: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = graph.param(store, self.weight);
        let b = graph.param(store, self.bias);
        let h = graph.matmul(x, w)?;
        let h = graph.add_bias(h, b)?;
        Ok(self.activation.apply(graph, h))
    }

    /// Same computation as [`Dense::forward`] without recording a graph.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Tensor {
        let mut h = x.matmul(store.value(self.weight));
        let b = store.value(self.bias).as_slice();
        for r in 0..h.rows() {
            for (o, &bv) in h.row_mut(r).iter_mut().zip(b) {
                *o = self.activation.eval(*o + bv);
            }
        }
        h
    }
}
