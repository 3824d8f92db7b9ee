//! ECG benchmark core: record pipeline, hierarchical patch model, task
//! losses and training, evaluation metrics.

mod error;
mod kind;
pub mod signal;

pub use error::{Error, Result};
pub use kind::TaskKind;
pub mod metrics;
pub mod model;
pub mod tasks;
