//! Sequence-to-sequence GAN for suffix prediction.

pub mod checkpoint;
pub mod gumbel;
mod init;
pub mod lstm;
pub mod model;
pub mod predict;
pub mod train;

use serde::{Deserialize, Serialize};

use crate::autodiff::{AutodiffError, RmsPropConfig};
use crate::encoding::{EncodingError, EncodingSchema};

pub use checkpoint::{load_model, save_model, CheckpointMeta};
pub use gumbel::{gumbel_softmax, NonPositiveTemperature};
pub use lstm::{lstm_cell, LstmStack, LstmState};
pub use model::{
    discriminator_loss, generator_loss, losses, Architecture, DecodeMode, Discriminator, GeneratedSuffix, Generator,
};
pub use predict::{predict_suffix, PredictedEvent, PrefixEvent};
pub use train::{train, train_with_observer, EpochRecord, History, Trainer, TrainOutcome};

#[derive(Debug, thiserror::Error)]
pub enum GanError {
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Encoding(#[from] EncodingError),
    #[error("prefix is empty")]
    EmptyPrefix,
    #[error("suffix is empty")]
    EmptySuffix,
    #[error("no training data")]
    EmptyBundle,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at epoch {epoch}, batch {batch}: {detail}")]
    NonFinite { epoch: usize, batch: usize, detail: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    Rmsprop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Seeds weight init, batch order, Gumbel noise and teacher forcing.
    pub seed: u64,
    pub optimizer: Optimizer,
    pub learning_rate: f64,
    pub rho: f64,
    pub eps: f64,
    pub num_layers: usize,
    pub hidden_size: usize,
    pub clip_norm: f64,
    pub teacher_forcing_prob: f64,
    pub gumbel_tau: f64,
    /// Feed hard one-hot samples forward, relaxed gradients backward.
    pub straight_through: bool,
    pub validation_every: usize,
    /// Weights start uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Initial offset of every LSTM forget-gate bias.
    pub forget_bias: f64,
    /// Pairs per mini-batch; a partition larger than this is cut into
    /// several batches. `None` means one batch per partition.
    pub batch_size: Option<usize>,
    /// Decoding bound at inference; defaults to twice the longest training
    /// suffix.
    pub max_len: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            seed: 0,
            optimizer: Optimizer::Rmsprop,
            learning_rate: 5.5e-5,
            rho: 0.99,
            eps: 1e-8,
            num_layers: 5,
            hidden_size: 64,
            clip_norm: 1.0,
            teacher_forcing_prob: 0.5,
            gumbel_tau: 0.75,
            straight_through: true,
            validation_every: 5,
            init_scale: 0.6,
            forget_bias: 0.0,
            batch_size: Some(8),
            max_len: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GanError> {
        let bad = |m: &str| Err(GanError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0) || !(self.rho > 0.0 && self.rho < 1.0) || !(self.eps > 0.0) {
            return bad("learning_rate and eps must be positive, rho in (0, 1)");
        }
        if self.num_layers == 0 || self.hidden_size == 0 {
            return bad("num_layers and hidden_size must be positive");
        }
        if !(self.clip_norm > 0.0) || !(self.gumbel_tau > 0.0) || !(self.init_scale > 0.0) || !self.forget_bias.is_finite() {
            return bad("clip_norm, gumbel_tau and init_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.teacher_forcing_prob) {
            return bad("teacher_forcing_prob must lie in [0, 1]");
        }
        if self.validation_every == 0 || self.batch_size == Some(0) || self.max_len == Some(0) {
            return bad("validation_every, batch_size and max_len must be positive");
        }
        Ok(())
    }

    pub fn architecture(&self) -> Architecture {
        Architecture {
            num_layers: self.num_layers,
            hidden_size: self.hidden_size,
            init_scale: self.init_scale,
            forget_bias: self.forget_bias,
        }
    }

    pub fn rmsprop(&self) -> RmsPropConfig {
        RmsPropConfig { lr: self.learning_rate, rho: self.rho, eps: self.eps }
    }
}

/// A generator/discriminator pair with the schema it was trained on.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub schema: EncodingSchema,
    pub config: TrainConfig,
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub max_len: usize,
}

impl TrainedModel {
    /// Freshly initialized networks.
    pub fn new(schema: EncodingSchema, config: TrainConfig, max_len: usize) -> Result<Self, GanError> {
        config.validate()?;
        let arch = config.architecture();
        // distinct init streams for the two networks
        let generator = Generator::new(&schema, arch, config.seed);
        let discriminator = Discriminator::new(&schema, arch, config.seed ^ 0x5eed_d15c);
        Ok(Self { schema, config, generator, discriminator, max_len })
    }

    /// Greedy suffixes for equally long encoded prefixes.
    pub fn generate_batch(&self, prefixes: &[&[Vec<f64>]]) -> Result<Vec<GeneratedSuffix>, GanError> {
        self.generator.generate(prefixes, self.max_len)
    }
}
