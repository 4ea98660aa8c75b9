use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelDims, Variant};

/// Hyperparameters of one training run. Every field has a default, so a
/// config file only needs the values it changes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub variant: Variant,
    pub embedding_size: usize,
    pub hidden_size: usize,
    pub layers: usize,
    pub keep_prob: f64,
    pub clip_value: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub max_epochs: usize,
    /// Epochs without a validation improvement before stopping; 0 disables.
    pub patience: usize,
    /// Stop as soon as validation per-response accuracy reaches this.
    pub target_accuracy: Option<f64>,
    /// Decoding cap during validation.
    pub max_response_len: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            variant: Variant::EntType,
            embedding_size: 300,
            hidden_size: 353,
            layers: 1,
            keep_prob: 0.85,
            clip_value: 10.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            max_epochs: 50,
            patience: 5,
            target_accuracy: None,
            max_response_len: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_string()));
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep_prob must lie in (0, 1]");
        }
        if !(self.clip_value > 0.0) {
            return bad("clip_value must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("adam betas must lie in [0, 1)");
        }
        if !(self.adam_epsilon > 0.0) {
            return bad("adam_epsilon must be positive");
        }
        if !(1..=3).contains(&self.layers) {
            return bad("layers must be 1, 2 or 3");
        }
        if self.embedding_size == 0 || self.hidden_size == 0 {
            return bad("embedding_size and hidden_size must be positive");
        }
        if self.max_epochs == 0 || self.max_response_len == 0 {
            return bad("max_epochs and max_response_len must be positive");
        }
        Ok(())
    }

    pub fn dims(&self, vocab_size: usize) -> ModelDims {
        ModelDims {
            vocab_size,
            embedding: self.embedding_size,
            hidden: self.hidden_size,
            layers: self.layers,
        }
    }
}
