use serde::{Deserialize, Serialize};

use super::variant::ModelVariant;
use crate::error::{Error, Result};
use crate::neural::{AdamConfig, DEFAULT_CLIP_NORM};

pub const CORNELL_MAX_LENGTH: usize = 20;
pub const OPEN_SUBTITLES_MAX_LENGTH: usize = 30;
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_MU: f64 = 0.1;

/// Architecture of one seq2seq model. The decoder hidden width is twice the
/// encoder's so the concatenated bidirectional summary can seed it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    /// Per-direction encoder hidden width.
    pub hidden_dim: usize,
    pub enc_layers: usize,
    pub variant: ModelVariant,
    pub max_length: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// 300-d embeddings, two 256-wide bidirectional encoder layers, 512-wide decoder.
    pub fn new(vocab_size: usize, variant: ModelVariant) -> Self {
        Self {
            vocab_size,
            embed_dim: 300,
            hidden_dim: 256,
            enc_layers: 2,
            variant,
            max_length: CORNELL_MAX_LENGTH,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn cornell(vocab_size: usize, variant: ModelVariant) -> Self {
        Self::new(vocab_size, variant)
    }

    pub fn open_subtitles(vocab_size: usize, variant: ModelVariant) -> Self {
        Self { max_length: OPEN_SUBTITLES_MAX_LENGTH, ..Self::new(vocab_size, variant) }
    }

    pub fn small(vocab_size: usize, embed_dim: usize, hidden_dim: usize, variant: ModelVariant) -> Self {
        Self { embed_dim, hidden_dim, ..Self::new(vocab_size, variant) }
    }

    pub fn decoder_hidden(&self) -> usize {
        2 * self.hidden_dim
    }

    pub fn decoder_input(&self) -> usize {
        self.embed_dim + if self.variant.sed { 3 } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < crate::text::SPECIALS.len() + 1 {
            return Err(Error::Config("vocabulary must hold at least one regular word".into()));
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || self.enc_layers == 0 {
            return Err(Error::Config("dimensions and layer count must be positive".into()));
        }
        if self.max_length < 2 {
            return Err(Error::Config(format!("max_length must be >= 2, got {}", self.max_length)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }
}

/// Optimization settings. Decoder inputs are always the gold tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the affective regularizer.
    pub mu: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub clip_norm: f64,
    pub patience: usize,
    pub lr_factor: f64,
    pub min_lr: f64,
    pub teacher_forcing: bool,
}

impl TrainConfig {
    pub fn forward() -> Self {
        Self {
            mu: DEFAULT_MU,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            adam: AdamConfig::forward(),
            clip_norm: DEFAULT_CLIP_NORM,
            patience: 20,
            lr_factor: 0.5,
            min_lr: 1e-6,
            teacher_forcing: true,
        }
    }

    pub fn reverse() -> Self {
        Self { adam: AdamConfig::reverse(), ..Self::forward() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu >= 0.0) {
            return Err(Error::Config(format!("mu must be non-negative, got {}", self.mu)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !self.teacher_forcing {
            return Err(Error::Config("training requires teacher forcing".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::forward()
    }
}
