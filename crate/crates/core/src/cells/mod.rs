//! Recurrent cell families.
//!
//! Every family keeps its trainable tensors in a [`ParamStore`] and exposes
//! step functions that record onto a [`Graph`]. Prediction is read from the
//! last step only: `W_out · e_T + b` for WeiNet, `W_out · h_T + b` for the
//! baselines.

pub mod closed_form;
pub mod fastweights;
pub mod lstm;
pub mod rhn;
pub mod weinet;

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::engine::{EngineError, Graph, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::ConfigError;

pub use closed_form::unrolled_memory_closed_form;
pub use fastweights::{fastweights_memory_update, fastweights_step, FastWeights, FastWeightsState};
pub use lstm::{lstm_step, Lstm, LstmState};
pub use rhn::{rhn_step, Rhn, RhnState};
pub use weinet::{
    controller_step, memory_read, memory_update, mix_memories, reader_step, route, weinet_step,
    UpdateWeights, WeiNet, WeiNetState, WeiNetVars,
};

/// Standard deviation of every Gaussian initialiser.
pub const INIT_STD: f64 = 0.1;
/// Mean of the memory decay weights `W_A`.
pub const DECAY_MEAN: f64 = 0.9;
/// Mean of the write weights `W_h`.
pub const WRITE_MEAN: f64 = 0.5;
/// Spread of the row/column factor initialisers.
pub const FACTOR_STD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    WeiNet,
    FastWeights,
    Lstm,
    Rhn,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::WeiNet, Family::FastWeights, Family::Lstm, Family::Rhn];

    pub fn name(self) -> &'static str {
        match self {
            Family::WeiNet => "weinet",
            Family::FastWeights => "fastweights",
            Family::Lstm => "lstm",
            Family::Rhn => "rhn",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "weinet" => Ok(Family::WeiNet),
            "fastweights" | "fw" | "fw-ln" | "fwln" => Ok(Family::FastWeights),
            "lstm" => Ok(Family::Lstm),
            "rhn" => Ok(Family::Rhn),
            _ => Err(ConfigError::UnknownFamily(s.to_string())),
        }
    }
}

/// How the memory update weights `W_A`, `W_h`, `W_AH` are parameterised and
/// applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UpdateVariant {
    /// Three `H×H` matrices applied element-wise.
    FullMatrix,
    /// Each matrix is the outer product of a column and a row vector.
    RowCol,
    /// Coupled sigmoid gate between old memory and the new outer product.
    Gated,
    /// Matrix product instead of element-wise product on the decay and
    /// write terms. Experimental: diverges on long sequences.
    CrossBitDot,
}

impl UpdateVariant {
    pub const ALL: [UpdateVariant; 4] = [
        UpdateVariant::FullMatrix,
        UpdateVariant::RowCol,
        UpdateVariant::Gated,
        UpdateVariant::CrossBitDot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UpdateVariant::FullMatrix => "fullmatrix",
            UpdateVariant::RowCol => "rowcol",
            UpdateVariant::Gated => "gated",
            UpdateVariant::CrossBitDot => "crossbitdot",
        }
    }
}

impl fmt::Display for UpdateVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UpdateVariant {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "fullmatrix" | "full" => Ok(UpdateVariant::FullMatrix),
            "rowcol" => Ok(UpdateVariant::RowCol),
            "gated" => Ok(UpdateVariant::Gated),
            "crossbitdot" | "dot" => Ok(UpdateVariant::CrossBitDot),
            _ => Err(ConfigError::UnknownVariant(s.to_string())),
        }
    }
}

/// Which matrix the reader's row/column means are taken over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum StatsWeighting {
    /// The router-weighted memory `Σ_k a_k A_k`.
    #[default]
    Attention,
    /// The router-weighted memory scaled element-wise by `W_A`.
    DecayWeighted,
}

impl StatsWeighting {
    pub fn name(self) -> &'static str {
        match self {
            StatsWeighting::Attention => "attention",
            StatsWeighting::DecayWeighted => "decay",
        }
    }
}

impl FromStr for StatsWeighting {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "attention" => Ok(StatsWeighting::Attention),
            "decay" => Ok(StatsWeighting::DecayWeighted),
            _ => Err(ConfigError::Invalid(format!(
                "unknown stats weighting '{s}' (expected attention or decay)"
            ))),
        }
    }
}

/// Architecture description shared by all families.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub family: Family,
    pub hidden: usize,
    pub input: usize,
    pub output: usize,
    /// Number of associative memories `K` (WeiNet only).
    pub memories: usize,
    pub router: bool,
    pub variant: UpdateVariant,
    pub stats: StatsWeighting,
    /// Fast-weights decay `λ`.
    pub fw_lambda: f64,
    /// Fast-weights write rate `η`.
    pub fw_eta: f64,
    pub fw_inner_steps: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: Family::WeiNet,
            hidden: 50,
            input: crate::tasks::ALPHABET_SIZE,
            output: crate::tasks::ALPHABET_SIZE,
            memories: 1,
            router: false,
            variant: UpdateVariant::RowCol,
            stats: StatsWeighting::Attention,
            fw_lambda: DECAY_MEAN,
            fw_eta: WRITE_MEAN,
            fw_inner_steps: 1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.hidden == 0 || self.input == 0 || self.output == 0 {
            return Err(ConfigError::Invalid(format!(
                "hidden, input and output sizes must be >= 1 (got H={}, I={}, V={})",
                self.hidden, self.input, self.output
            )));
        }
        if self.family == Family::WeiNet {
            if self.memories == 0 {
                return Err(ConfigError::Invalid("memory count K must be >= 1".into()));
            }
            if !self.router && self.memories > 1 {
                return Err(ConfigError::Invalid(format!(
                    "K={} memories need the router enabled",
                    self.memories
                )));
            }
        }
        if self.family == Family::FastWeights {
            if self.fw_inner_steps == 0 {
                return Err(ConfigError::Invalid("fast-weights inner steps S must be >= 1".into()));
            }
            if !self.fw_lambda.is_finite() || !self.fw_eta.is_finite() {
                return Err(ConfigError::Invalid("fast-weights lambda/eta must be finite".into()));
            }
        }
        Ok(())
    }

    /// Stable text form of everything that determines parameter layout.
    pub fn layout_key(&self) -> String {
        match self.family {
            Family::WeiNet => format!(
                "weinet;H={};I={};V={};K={};router={};variant={}",
                self.hidden, self.input, self.output, self.memories, self.router, self.variant
            ),
            f => format!("{f};H={};I={};V={}", self.hidden, self.input, self.output),
        }
    }
}

/// Common interface the training loop drives.
pub trait Recurrent<T: Scalar> {
    fn config(&self) -> &ModelConfig;
    fn params(&self) -> &ParamStore<T>;
    fn params_mut(&mut self) -> &mut ParamStore<T>;

    /// Unrolls from the initial state over `inputs` and returns the logits
    /// of the final step. `params` comes from [`Graph::bind`] on
    /// [`Recurrent::params`].
    fn final_logits(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        inputs: &[Var],
    ) -> Result<Var, EngineError>;
}

/// A model of any family.
#[derive(Clone, Debug)]
pub enum Model<T> {
    WeiNet(WeiNet<T>),
    FastWeights(FastWeights<T>),
    Lstm(Lstm<T>),
    Rhn(Rhn<T>),
}

impl<T: Scalar> Model<T> {
    /// Draws a fresh parameter set. Deterministic in `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self, ConfigError> {
        config.validate()?;
        Ok(match config.family {
            Family::WeiNet => Model::WeiNet(WeiNet::init(config, seed)?),
            Family::FastWeights => Model::FastWeights(FastWeights::init(config, seed)?),
            Family::Lstm => Model::Lstm(Lstm::init(config, seed)?),
            Family::Rhn => Model::Rhn(Rhn::init(config, seed)?),
        })
    }

    fn inner(&self) -> &dyn Recurrent<T> {
        match self {
            Model::WeiNet(m) => m,
            Model::FastWeights(m) => m,
            Model::Lstm(m) => m,
            Model::Rhn(m) => m,
        }
    }

    fn inner_mut(&mut self) -> &mut dyn Recurrent<T> {
        match self {
            Model::WeiNet(m) => m,
            Model::FastWeights(m) => m,
            Model::Lstm(m) => m,
            Model::Rhn(m) => m,
        }
    }

    /// Records the loss of one sequence: one-hot inputs from symbol indices,
    /// cross entropy on the final-step logits. Returns `(loss, logits)`.
    pub fn sequence_loss(
        &self,
        g: &mut Graph<T>,
        inputs: &[usize],
        target: usize,
    ) -> Result<(Var, Var), EngineError> {
        self.sequence_loss_with(g, self.params(), inputs, target)
    }

    /// [`Model::sequence_loss`] with `store` in place of the model's own
    /// parameters. `store` must have the same layout.
    pub fn sequence_loss_with(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        inputs: &[usize],
        target: usize,
    ) -> Result<(Var, Var), EngineError> {
        if store.len() != self.params().len() {
            return Err(EngineError::Contract(format!(
                "parameter store has {} tensors, model has {}",
                store.len(),
                self.params().len()
            )));
        }
        let params = g.bind(store);
        let width = self.config().input;
        let steps = inputs
            .iter()
            .map(|&i| Ok(g.constant(Tensor::one_hot(width, i)?)))
            .collect::<Result<Vec<_>, EngineError>>()?;
        let logits = self.final_logits(g, &params, &steps)?;
        let loss = g.cross_entropy(logits, target)?;
        Ok((loss, logits))
    }
}

impl<T: Scalar> Recurrent<T> for Model<T> {
    fn config(&self) -> &ModelConfig {
        self.inner().config()
    }

    fn params(&self) -> &ParamStore<T> {
        self.inner().params()
    }

    fn params_mut(&mut self) -> &mut ParamStore<T> {
        self.inner_mut().params_mut()
    }

    fn final_logits(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        inputs: &[Var],
    ) -> Result<Var, EngineError> {
        self.inner().final_logits(g, params, inputs)
    }
}

pub(crate) fn gaussian<T: Scalar, R: Rng>(
    rng: &mut R,
    shape: &[usize],
    mean: f64,
    std: f64,
) -> Tensor<T> {
    Tensor::gaussian(shape, mean, std, rng).expect("valid initialiser")
}

pub(crate) fn require_steps(inputs: &[Var]) -> Result<(), EngineError> {
    if inputs.is_empty() {
        return Err(EngineError::Contract("sequences must have at least one step".into()));
    }
    Ok(())
}

/// `W_out · x + b`.
pub(crate) fn readout<T: Scalar>(
    g: &mut Graph<T>,
    w_out: Var,
    b_out: Var,
    x: Var,
) -> Result<Var, EngineError> {
    let z = g.matmul(w_out, x)?;
    g.add(z, b_out)
}

pub(crate) fn add_classifier<T: Scalar, R: Rng>(
    store: &mut ParamStore<T>,
    rng: &mut R,
    config: &ModelConfig,
) -> (ParamId, ParamId) {
    let w = store.add("output.w", gaussian(rng, &[config.output, config.hidden], 0.0, INIT_STD));
    let b = store.add("output.b", gaussian(rng, &[config.output], 0.0, INIT_STD));
    (w, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_parse() {
        for f in Family::ALL {
            assert_eq!(f.name().parse::<Family>().unwrap(), f);
        }
        for v in UpdateVariant::ALL {
            assert_eq!(v.name().parse::<UpdateVariant>().unwrap(), v);
        }
        assert_eq!("FW-LN".parse::<Family>().unwrap(), Family::FastWeights);
        assert!(matches!("weinnet".parse::<Family>(), Err(ConfigError::UnknownFamily(_))));
        assert!("fancy".parse::<UpdateVariant>().is_err());
    }

    #[test]
    fn validation() {
        let mut c = ModelConfig::default();
        assert!(c.validate().is_ok());
        c.memories = 0;
        assert!(c.validate().is_err());
        c.memories = 2;
        assert!(c.validate().is_err());
        c.router = true;
        assert!(c.validate().is_ok());
        let fw = ModelConfig {
            family: Family::FastWeights,
            fw_inner_steps: 0,
            ..ModelConfig::default()
        };
        assert!(fw.validate().is_err());
    }

    #[test]
    fn every_family_initialises_deterministically() {
        for family in Family::ALL {
            let c = ModelConfig {
                family,
                hidden: 6,
                input: 5,
                output: 5,
                ..ModelConfig::default()
            };
            let a = Model::<f64>::init(&c, 3).unwrap();
            let b = Model::<f64>::init(&c, 3).unwrap();
            let d = Model::<f64>::init(&c, 4).unwrap();
            assert_eq!(a.params(), b.params(), "{family}");
            assert_ne!(a.params(), d.params(), "{family}");
        }
    }
}
