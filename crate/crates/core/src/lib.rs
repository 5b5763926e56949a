//! Recurrent networks with a learned auto-associative memory update.
//!
//! The crate is organised bottom-up:
//!
//! * [`engine`]: dense rank-0/1/2 tensors, a tape-based reverse-mode autodiff
//!   graph, Adam, gradient clipping and a finite-difference oracle.
//! * [`cells`]: WeiNet (controller, router, memory update, memory read,
//!   reader), scalar fast weights with layer normalisation, LSTM and a
//!   coupled-gate highway cell, plus the closed-form memory unroll.
//! * [`tasks`]: the associative recall benchmark (generation, one-hot
//!   encoding, batching, text cache).
//! * [`training`]: BPTT training loop, evaluation, early stopping, metrics
//!   CSV and binary checkpoints.
//! * [`verify`]: the gradient-check and memory-oracle suites shared by the
//!   CLI and the acceptance tests.

pub mod cells;
pub mod engine;
mod error;
pub mod tasks;
pub mod training;
pub mod verify;

pub use cells::{Family, Model, ModelConfig, Recurrent, StatsWeighting, UpdateVariant};
pub use error::ConfigError;
pub use engine::{
    EngineError, GradientMap, Graph, Init, OpKind, ParamId, ParamStore, Scalar, Tensor, Var,
};
pub use tasks::{RecallExample, SplitRole, Symbol};
pub use training::{MetricsRecord, Precision, TrainConfig};
