use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformerConfig {
    pub num_layers: usize,
    pub num_heads: usize,
    pub model_dim: usize,
    pub ff_dim: usize,
    pub dropout: f64,
    /// Longest window the model accepts; longer reads are split.
    pub max_tokens: usize,
    /// Full self-attention when true, causal (left-to-right) otherwise.
    #[serde(skip)]
    pub bidirectional: bool,
    /// Standard deviation of the random weight initialisation.
    pub init_std: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TransformerConfig {
    pub fn desk() -> Self {
        TransformerConfig {
            num_layers: 4,
            num_heads: 8,
            model_dim: 64,
            ff_dim: 256,
            dropout: 0.1,
            max_tokens: 512,
            bidirectional: true,
            init_std: 0.02,
            seed: 0,
        }
    }

    pub fn paper_scale() -> Self {
        TransformerConfig {
            model_dim: 512,
            ff_dim: 2048,
            ..Self::desk()
        }
    }

    pub fn head_dim(&self) -> usize {
        self.model_dim / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.num_heads == 0 || self.model_dim == 0 || self.ff_dim == 0 {
            return Err(Error::Config("transformer: layer, head and width counts must be positive".into()));
        }
        if !self.model_dim.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "transformer: model_dim {} is not divisible by num_heads {}",
                self.model_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("transformer: dropout must be in [0, 1)".into()));
        }
        if self.max_tokens < 2 {
            return Err(Error::Config("transformer: max_tokens must be at least 2".into()));
        }
        Ok(())
    }

    /// Fields that determine parameter shapes and attention pattern.
    pub fn same_architecture(&self, other: &TransformerConfig) -> bool {
        self.num_layers == other.num_layers
            && self.num_heads == other.num_heads
            && self.model_dim == other.model_dim
            && self.ff_dim == other.ff_dim
            && self.max_tokens == other.max_tokens
            && self.bidirectional == other.bidirectional
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingConfig {
    /// Per-position Bernoulli probability of being selected for prediction.
    pub mask_ratio: f64,
    /// Of the selected positions: fraction replaced by MASK ...
    pub mask_token_prob: f64,
    /// ... fraction replaced by a random k-mer; the rest keep their token.
    pub random_token_prob: f64,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for MaskingConfig {
    fn default() -> Self {
        MaskingConfig {
            mask_ratio: 0.15,
            mask_token_prob: 1.0,
            random_token_prob: 0.0,
            seed: 0,
        }
    }
}

impl MaskingConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.mask_ratio)
            && self.mask_token_prob >= 0.0
            && self.random_token_prob >= 0.0
            && self.mask_token_prob + self.random_token_prob <= 1.0 + 1e-12;
        if !ok {
            return Err(Error::Config("masking: ratios must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub warmup_steps: usize,
    /// Multiplier on the inverse-square-root warmup schedule.
    pub lr_scale: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Cap on training windows (0 = all).
    pub max_windows: usize,
    /// Windows used to measure the untrained loss.
    pub diagnostic_windows: usize,
    #[serde(skip)]
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            epochs: 10,
            batch_size: 16,
            warmup_steps: 400,
            lr_scale: 1.0,
            beta1: 0.9,
            beta2: 0.98,
            epsilon: 1e-9,
            max_windows: 0,
            diagnostic_windows: 64,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.warmup_steps == 0 || !(self.lr_scale > 0.0) {
            return Err(Error::Config("pretrain: batch_size, warmup_steps and lr_scale must be positive".into()));
        }
        Ok(())
    }
}
