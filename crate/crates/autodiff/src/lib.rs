//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] is built fresh for every forward pass. Parameters live in a
//! [`ParamStore`] outside the tape; [`Tape::param`] copies a parameter onto the
//! tape as a leaf, and after [`Tape::backward`] the resulting [`Gradients`] are
//! accumulated back into the store with [`ParamStore::accumulate`].
//!
//! All values are `f64`. Only the operations the ECG benchmark models need are
//! provided: dense matmul, 1-D convolution, patch/unpatch resampling, layer
//! norm, row softmax, a handful of pointwise functions, reductions and a few
//! structural reshuffles.

mod backward;
pub mod checkpoint;
mod error;
pub mod gradcheck;
pub mod init;
mod ops;
pub mod optim;
mod tape;
mod tensor;

pub use error::{Error, Result};
pub use gradcheck::{grad_check, GradCheckConfig, GradCheckReport};
pub use ops::{ReduceKind, Unary};
pub use optim::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{ParamId, ParamStore, Tensor};
