//! Training on the recall task: minibatch BPTT with Adam, evaluation,
//! early stopping, a metrics CSV and binary checkpoints.

mod checkpoint;
mod experiment;
mod metrics;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::cells::ModelConfig;
use crate::engine::{AdamConfig, EngineError};
use crate::tasks::{SplitSizes, TaskError};
use crate::ConfigError;

pub use checkpoint::{config_digest, load_checkpoint, restore_checkpoint, save_checkpoint, CheckpointError};
pub use experiment::{
    apply_gradients, evaluate, example_gradient, run_experiment, train_epoch, ExperimentResult,
};
pub use metrics::{first_epoch_reaching, read_metrics_csv, MetricsRecord, MetricsWriter, METRICS_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Precision {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" | "32" => Ok(Precision::F32),
            "f64" | "64" => Ok(Precision::F64),
            _ => Err(ConfigError::Invalid(format!("precision must be f32 or f64, got {s:?}"))),
        }
    }
}

/// Everything needed to reproduce one run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    /// Nominal sequence length (number of RNN steps).
    pub length: usize,
    /// Explicit pair count; `None` derives it from `length`.
    pub pairs: Option<usize>,
    pub sizes: SplitSizes,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub clip: (f64, f64),
    pub max_epochs: usize,
    /// Validation accuracy that ends the run.
    pub early_stop: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub data_seed: u64,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            length: 9,
            pairs: None,
            sizes: SplitSizes::default(),
            adam: AdamConfig::default(),
            batch_size: 128,
            clip: (-5.0, 5.0),
            max_epochs: 100,
            early_stop: 1.0,
            init_seed: 1,
            shuffle_seed: 2,
            data_seed: 3,
            precision: Precision::F32,
        }
    }
}

impl TrainConfig {
    /// Sets all three seeds from one master seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.init_seed = seed;
        self.shuffle_seed = seed.wrapping_add(1);
        self.data_seed = seed.wrapping_add(2);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if !(self.adam.lr > 0.0) || !self.adam.lr.is_finite() {
            return invalid(format!("optimizer.lr must be > 0, got {}", self.adam.lr));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return invalid("optimizer betas must lie in [0, 1)".into());
        }
        if !(self.adam.eps > 0.0) {
            return invalid("optimizer.eps must be > 0".into());
        }
        if self.batch_size == 0 {
            return invalid("run.batch_size must be >= 1".into());
        }
        if !(self.clip.0 < self.clip.1) {
            return invalid(format!("clip bounds need lo < hi, got {:?}", self.clip));
        }
        if self.max_epochs == 0 {
            return invalid("run.max_epochs must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.early_stop) {
            return invalid(format!("run.early_stop must lie in [0, 1], got {}", self.early_stop));
        }
        if self.sizes.train == 0 || self.sizes.val == 0 || self.sizes.test == 0 {
            return invalid("split sizes must be positive".into());
        }
        crate::tasks::length_policy(self.length, self.pairs)
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let alphabet = crate::tasks::ALPHABET_SIZE;
        if self.model.input != alphabet || self.model.output != alphabet {
            return invalid(format!(
                "recall task needs input and output size {alphabet}, got {} and {}",
                self.model.input, self.model.output
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize, loss: f64 },
    #[error("empty {0} split")]
    EmptySplit(String),
    #[error("metrics i/o: {0}")]
    Io(#[from] std::io::Error),
}
