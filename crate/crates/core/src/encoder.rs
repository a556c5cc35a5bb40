//! The latent map `g: X -> Z` as a dense feed-forward network, with
//! autoencoder pretraining on unlabeled inputs.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::diffmath::{Activation, Adam, Dense, Graph, ParamStore, Var};
use crate::{Error, Result, Tensor};

/// Architecture of the encoder. Every layer, including the output layer, uses
/// LeakyReLU.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    pub leaky_slope: f64,
}

impl EncoderSpec {
    /// Hidden widths 1000, 500, 50 and a one-dimensional latent space.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![1000, 500, 50],
            latent_dim: 1,
            leaky_slope: 0.01,
        }
    }

    pub fn with_hidden(mut self, hidden: Vec<usize>) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_latent_dim(mut self, latent_dim: usize) -> Self {
        self.latent_dim = latent_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.latent_dim == 0 || self.hidden.contains(&0) {
            return Err(Error::Config(format!(
                "encoder widths must all be >= 1 (input {}, hidden {:?}, latent {})",
                self.input_dim, self.hidden, self.latent_dim
            )));
        }
        Ok(())
    }

    /// Layer widths from input to latent.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_dim);
        w.extend_from_slice(&self.hidden);
        w.push(self.latent_dim);
        w
    }
}

/// Encoder weights θ_g together with the layer layout that reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    spec: EncoderSpec,
    layers: Vec<Dense>,
    params: ParamStore,
}

fn build_stack<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    widths: &[usize],
    hidden_act: Activation,
    out_act: Activation,
    rng: &mut R,
) -> Result<Vec<Dense>> {
    let last = widths.len() - 2;
    widths
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            let act = if i == last { out_act } else { hidden_act };
            Dense::new(store, &format!("{prefix}.{i}"), w[0], w[1], act, rng)
        })
        .collect()
}

impl Encoder {
    /// Freshly initialized encoder.
    pub fn init<R: Rng + ?Sized>(spec: EncoderSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let act = Activation::LeakyRelu(spec.leaky_slope);
        let mut params = ParamStore::new();
        let layers = build_stack(&mut params, "encoder", &spec.widths(), act, act, rng)?;
        Ok(Self {
            spec,
            layers,
            params,
        })
    }

    /// Rebuilds an encoder from named arrays as produced by
    /// [`Encoder::named_arrays`]. Every array must be present with the shape
    /// the spec implies.
    pub fn from_named_arrays<'a, I>(spec: EncoderSpec, arrays: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, Tensor)>,
    {
        // values are overwritten below; the seed only fills placeholders
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut enc = Self::init(spec, &mut rng)?;
        let mut seen = vec![false; enc.params.len()];
        for (name, value) in arrays {
            let id = enc
                .params
                .find(name)
                .ok_or_else(|| Error::Config(format!("unknown encoder array `{name}`")))?;
            if enc.params.value(id).shape() != value.shape() {
                return Err(Error::Config(format!(
                    "encoder array `{name}` has shape {:?}, expected {:?}",
                    value.shape(),
                    enc.params.value(id).shape()
                )));
            }
            *enc.params.value_mut(id) = value;
            seen[id.0] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            let name: String = enc.params.name(crate::diffmath::ParamId(missing)).into();
            return Err(Error::Config(format!("encoder array `{name}` missing")));
        }
        Ok(enc)
    }

    pub fn spec(&self) -> &EncoderSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn named_arrays(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.named_values()
    }

    /// Latent code of a single input.
    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Dimension {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(self
            .encode_batch(&Tensor::row_vector(x.to_vec()))?
            .into_vec())
    }

    /// Latent codes of a batch (`n x input_dim` in, `n x latent_dim` out).
    pub fn encode_batch(&self, xs: &Tensor) -> Result<Tensor> {
        if xs.cols() != self.spec.input_dim {
            return Err(Error::Dimension {
                expected: self.spec.input_dim,
                got: xs.cols(),
            });
        }
        let mut h = xs.clone();
        for layer in &self.layers {
            h = layer.eval(&self.params, &h);
        }
        Ok(h)
    }

    /// Records the encoder on `graph`; bit-identical to [`Encoder::encode_batch`].
    pub fn forward(&self, graph: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = layer.forward(graph, &self.params, h)?;
        }
        Ok(h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            lr: 1e-2,
        }
    }
}

/// Outcome of autoencoder pretraining. The decoder is dropped.
#[derive(Debug, Clone)]
pub struct Pretrained {
    pub encoder: Encoder,
    /// Reconstruction MSE before each epoch's update, then the final value.
    pub losses: Vec<f64>,
}

impl Pretrained {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one loss")
    }
}

/// Trains an autoencoder whose encoder half has the shape of `spec` and whose
/// decoder mirrors it with a linear output, full-batch on mean squared
/// reconstruction error. Returns the encoder half.
pub fn pretrain_autoencoder<R: Rng + ?Sized>(
    spec: EncoderSpec,
    unlabeled: &Tensor,
    config: &PretrainConfig,
    rng: &mut R,
) -> Result<Pretrained> {
    if unlabeled.rows() == 0 {
        return Err(Error::Empty);
    }
    if unlabeled.rows() < 2 {
        return Err(Error::Config(
            "pretraining needs at least two inputs".into(),
        ));
    }
    let mut encoder = Encoder::init(spec, rng)?;
    if unlabeled.cols() != encoder.spec.input_dim {
        return Err(Error::Dimension {
            expected: encoder.spec.input_dim,
            got: unlabeled.cols(),
        });
    }
    let act = Activation::LeakyRelu(encoder.spec.leaky_slope);
    let mut widths = encoder.spec.widths();
    widths.reverse();
    let mut dec_params = ParamStore::new();
    let decoder = build_stack(
        &mut dec_params,
        "decoder",
        &widths,
        act,
        Activation::Identity,
        rng,
    )?;
    let opt = Adam::with_lr(config.lr);
    let mut losses = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let mut g = Graph::new();
        let x = g.input("x", unlabeled.clone());
        let mut h = encoder.forward(&mut g, x)?;
        for layer in &decoder {
            h = layer.forward(&mut g, &dec_params, h)?;
        }
        let diff = g.sub(h, x)?;
        let sq = g.square(diff);
        let loss = g.mean(sq);
        losses.push(g.value(loss).item());
        if epoch == config.epochs {
            break;
        }
        let grads = g.backward(loss)?;
        grads.accumulate_into(&mut encoder.params);
        grads.accumulate_into(&mut dec_params);
        encoder.params.adam_step(&opt)?;
        dec_params.adam_step(&opt)?;
    }
    encoder.params.reset_optimizer();
    Ok(Pretrained { encoder, losses })
}
