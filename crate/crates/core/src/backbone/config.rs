use serde::{Deserialize, Serialize};

use crate::error::{FptError, Result};

/// Transformer stack hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub max_tokens: usize,
    #[serde(default)]
    pub dropout: f64,
    /// GPT-2 style causal masking over tokens. Off means bidirectional.
    #[serde(default)]
    pub causal: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self { n_layers: 2, d_model: 32, n_heads: 4, d_ff: 128, max_tokens: 64, dropout: 0.0, causal: false }
    }
}

impl BackboneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_ff == 0 || self.max_tokens == 0 {
            return Err(FptError::InvalidInput("d_model, n_heads, d_ff and max_tokens must be positive".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(FptError::InvalidInput(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(FptError::InvalidInput(format!("dropout must lie in [0, 1), got {}", self.dropout)));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// How the final token matrix is reduced before the output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Concatenate all tokens; requires exactly `n_tokens` tokens.
    Flatten { n_tokens: usize },
    MeanPool,
}

/// Input and output shapes around the stack, fixed by the task.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IoConfig {
    /// Width of one input token (the patch length, doubled when the
    /// imputation mask is fed as an extra channel).
    pub input_dim: usize,
    pub pooling: Pooling,
    pub out_dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub io: IoConfig,
}

impl ModelConfig {
    pub fn new(backbone: BackboneConfig, io: IoConfig) -> Result<Self> {
        let cfg = Self { backbone, io };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.io.input_dim == 0 || self.io.out_dim == 0 {
            return Err(FptError::InvalidInput("input_dim and out_dim must be positive".into()));
        }
        if let Pooling::Flatten { n_tokens } = self.io.pooling {
            if n_tokens == 0 || n_tokens > self.backbone.max_tokens {
                return Err(FptError::InvalidInput(format!(
                    "flatten head expects {n_tokens} tokens but max_tokens is {}",
                    self.backbone.max_tokens
                )));
            }
        }
        Ok(())
    }

    /// Width of the vector fed to the output layer.
    pub fn head_in(&self) -> usize {
        match self.io.pooling {
            Pooling::Flatten { n_tokens } => n_tokens * self.backbone.d_model,
            Pooling::MeanPool => self.backbone.d_model,
        }
    }
}
