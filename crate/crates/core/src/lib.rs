//! Deep-kernel Bayesian optimization over finite candidate pools, with a
//! pairwise collision regularizer on the learned latent space.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. It is laid out
//! bottom-up:
//!
//! * [`tensor`] and [`linalg`] hold the dense 2-D arrays and the Cholesky
//!   routines everything else is built on.
//! * [`diffmath`] is a small reverse-mode autodiff tape with dense layers and
//!   an Adam optimizer.
//! * [`encoder`] is the feed-forward latent map and its autoencoder pretraining.
//! * [`gp`] is the exact Gaussian process over latent codes (the deep kernel).
//! * [`collision`] is the collision penalty, importance weights and pair loss.
//! * [`acquisition`] holds the UCB score and its β schedules.
//! * [`bench`] generates the synthetic benchmark pools.
//! * [`driver`] runs the optimization loop and produces trace rows.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod acquisition;
pub mod bench;
pub mod collision;
pub mod diffmath;
pub mod driver;
pub mod encoder;
mod error;
pub mod gp;
pub mod linalg;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
