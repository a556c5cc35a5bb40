//! Reverse-mode automatic differentiation over dense `f64` tensors, plus the
//! dense layer and Adam optimizer the models train with.
//!
//! ```
//! use loco_core::diffmath::{Graph, ParamStore};
//! use loco_core::Tensor;
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::scalar(3.0));
//! let mut g = Graph::new();
//! let wv = g.param(&store, w);
//! let y = g.square(wv);
//! let grads = g.backward(y).unwrap();
//! grads.accumulate_into(&mut store);
//! assert_eq!(store.grad(w).item(), 6.0);
//! ```

mod graph;
mod layers;
mod params;

pub use graph::{Gradients, Graph, Var};
pub use layers::{Activation, Dense};
pub use params::{Adam, ParamId, ParamStore};
