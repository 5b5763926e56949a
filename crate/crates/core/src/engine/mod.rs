//! Numerical substrate: tensors, autodiff graph, optimiser and gradient oracle.

mod gradcheck;
mod graph;
mod optim;
mod params;
pub mod rng;
mod tensor;

pub use gradcheck::{compare_gradients, finite_difference_gradient, relative_error, ParamErrorReport};
pub use graph::{Graph, OpKind, Var};
pub use optim::{adam_step, clip_gradients, AdamConfig, AdamState};
pub use params::{GradientMap, ParamId, ParamStore};
pub use tensor::{build_tensor, Init, Tensor};

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

/// Floating point type the engine computes in.
///
/// `f64` is used for gradient checks and oracles, `f32` for training runs.
pub trait Scalar:
    Float + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EngineError {
    #[error("{op}: non-conformant shapes {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("contract violated: {0}")]
    Contract(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("finite-difference oracle produced a non-finite loss at {param}[{index}]")]
    OracleFailure { param: String, index: usize },
}

pub(crate) fn shape_err(op: &'static str, detail: String) -> EngineError {
    EngineError::Shape { op, detail }
}
