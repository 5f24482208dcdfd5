use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::preprocess::DEFAULT_MAX_LEN;

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub feature_maps: usize,
    pub dropout_rate: f64,
    pub max_len: usize,
    pub seed: u64,
}

impl ModelConfig {
    /// Defaults: 128-d embeddings, widths {3,4,5} with 100 maps each,
    /// dropout 0.5, sentences of 32 tokens.
    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 128,
            filter_widths: vec![3, 4, 5],
            feature_maps: 100,
            dropout_rate: 0.5,
            max_len: DEFAULT_MAX_LEN,
            seed: 0,
        }
    }

    /// Width of the pooled feature vector fed to the dense layer.
    pub fn feature_len(&self) -> usize {
        self.filter_widths.len() * self.feature_maps
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::Config(msg));
        if self.vocab_size < 2 {
            return fail(format!("vocab_size must be >= 2, got {}", self.vocab_size));
        }
        if self.embed_dim == 0 {
            return fail("embed_dim must be >= 1".into());
        }
        if self.filter_widths.is_empty() {
            return fail("filter_widths must not be empty".into());
        }
        if self.max_len == 0 {
            return fail("max_len must be >= 1".into());
        }
        if let Some(&h) = self
            .filter_widths
            .iter()
            .find(|&&h| h == 0 || h > self.max_len)
        {
            return fail(format!("filter width {h} not in 1..={}", self.max_len));
        }
        let mut sorted = self.filter_widths.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.filter_widths.len() {
            return fail("filter widths must be distinct".into());
        }
        if self.feature_maps == 0 {
            return fail("feature_maps must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return fail(format!("dropout_rate {} not in [0, 1)", self.dropout_rate));
        }
        Ok(())
    }
}

/// Optimisation schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 64,
            max_steps: 3000,
            eval_every: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(ModelError::Config(format!("lr must be finite and >= 0, got {}", self.lr)));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.eval_every == 0 {
            return Err(ModelError::Config(
                "batch_size, max_steps and eval_every must be >= 1".into(),
            ));
        }
        Ok(())
    }
}
