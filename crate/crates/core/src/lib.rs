//! Small LSTM sequence predictors, synthetic benchmark generators and Active
//! Tuning: inference-time optimization of a recurrent model's past hidden
//! state so that its closed-loop rollout explains a noisy observation stream.

pub mod bench;
pub mod container;
pub mod datagen;
pub mod error;
pub mod exec;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;
pub mod tuning;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use tensor::{Precision, Tensor};
