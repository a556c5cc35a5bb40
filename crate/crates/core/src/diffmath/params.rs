use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicU64, Ordering};

use libm::{pow, sqrt};

use crate::{Error, Result, Tensor};

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Index of a parameter inside its [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
struct Param {
    name: String,
    value: Tensor,
    grad: Tensor,
    first_moment: Tensor,
    second_moment: Tensor,
}

/// Adam hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Named trainable tensors with gradient accumulators and Adam state.
///
/// Each store carries a process-unique tag so a [`super::Graph`] mixing
/// parameters of several stores can route gradients back to the right one.
#[derive(Debug, PartialEq)]
pub struct ParamStore {
    tag: u64,
    params: Vec<Param>,
    step: u64,
}

impl Clone for ParamStore {
    /// Clones keep the tag, so a clone is interchangeable with its original
    /// (used to snapshot and restore parameters).
    fn clone(&self) -> Self {
        Self {
            tag: self.tag,
            params: self.params.clone(),
            step: self.step,
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            tag: NEXT_TAG.fetch_add(1, Ordering::Relaxed),
            params: Vec::new(),
            step: 0,
        }
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> ParamId {
        let (r, c) = value.shape();
        self.params.push(Param {
            name: name.into(),
            value,
            grad: Tensor::zeros(r, c),
            first_moment: Tensor::zeros(r, c),
            second_moment: Tensor::zeros(r, c),
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Number of Adam steps taken.
    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].grad
    }

    pub fn grad_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].grad
    }

    pub fn moments(&self, id: ParamId) -> (&Tensor, &Tensor) {
        let p = &self.params[id.0];
        (&p.first_moment, &p.second_moment)
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// `(name, value)` for every parameter, in insertion order.
    pub fn named_values(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|p| (p.name.as_str(), &p.value))
    }

    /// All parameter values flattened in insertion order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.value.as_slice().iter().copied())
            .collect()
    }

    /// All accumulated gradients flattened in insertion order.
    pub fn flat_grads(&self) -> Vec<f64> {
        self.params
            .iter()
            .flat_map(|p| p.grad.as_slice().iter().copied())
            .collect()
    }

    /// Overwrites all values from a flat slice laid out as [`Self::flat_values`].
    pub fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        let n = self.scalar_count();
        if values.len() != n {
            return Err(Error::Dimension {
                expected: n,
                got: values.len(),
            });
        }
        let mut offset = 0;
        for p in &mut self.params {
            let len = p.value.len();
            p.value
                .as_mut_slice()
                .copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Clears gradients, Adam moments and the step count, keeping values.
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for p in &mut self.params {
            p.grad.fill(0.0);
            p.first_moment.fill(0.0);
            p.second_moment.fill(0.0);
        }
    }

    /// One bias-corrected Adam update from the accumulated gradients, then
    /// clears them.
    pub fn adam_step(&mut self, opt: &Adam) -> Result<()> {
        if !(opt.lr > 0.0) {
            return Err(Error::InvalidLearningRate(opt.lr));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - pow(opt.beta1, t);
        let c2 = 1.0 - pow(opt.beta2, t);
        for p in &mut self.params {
            let values = p.value.as_mut_slice();
            let grads = p.grad.as_mut_slice();
            let m = p.first_moment.as_mut_slice();
            let v = p.second_moment.as_mut_slice();
            for i in 0..values.len() {
                let g = grads[i];
                m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
                v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                values[i] -= opt.lr * m_hat / (sqrt(v_hat) + opt.eps);
                grads[i] = 0.0;
            }
        }
        Ok(())
    }
}
