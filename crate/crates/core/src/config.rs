use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How each token's state is mixed with its dependency parent's state
/// between encoder layers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InteractionMode {
    /// `tanh(W_g [h_i; h_parent] + b_g)`
    Learned,
    /// `h_i` unchanged; the encoder reduces to stacked BiLSTMs.
    Passthrough,
}

/// Whether sentence summaries use query-conditioned attention or a uniform
/// average over tokens (the attention ablation).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Slf,
    /// Query projection fixed at zero, so every token gets weight 1/L.
    Uniform,
}

/// Model and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Hidden size; also the embedding size. Must be even.
    pub d: usize,
    pub num_layers: usize,
    /// Number of SLF attention heads.
    pub heads: usize,
    /// Largest group count the classifier can predict.
    pub k_max: usize,
    /// Longest action candidate span.
    pub max_span: usize,
    /// Span-extension threshold of the pointer decoder.
    pub beta: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub lambda_count: f64,
    pub lambda_action: f64,
    pub lambda_loc: f64,
    pub lambda_obj: f64,
    pub interaction: InteractionMode,
    pub attention: AttentionMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            d: 32,
            num_layers: 2,
            heads: 2,
            k_max: 3,
            max_span: 3,
            beta: 0.5,
            learning_rate: 0.0005,
            epochs: 40,
            seed: 7,
            lambda_count: 1.0,
            lambda_action: 1.0,
            lambda_loc: 1.0,
            lambda_obj: 1.0,
            interaction: InteractionMode::Learned,
            attention: AttentionMode::Slf,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Domain(alloc::format!("config: {msg}")));
        if self.d == 0 || self.d % 2 != 0 {
            return fail("d must be a positive even number");
        }
        if self.num_layers == 0 {
            return fail("num_layers must be at least 1");
        }
        if self.heads == 0 {
            return fail("heads must be at least 1");
        }
        if self.max_span == 0 {
            return fail("max_span must be at least 1");
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return fail("beta must lie in (0, 1]");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return fail("epochs must be at least 1");
        }
        let lambdas = [
            self.lambda_count,
            self.lambda_action,
            self.lambda_loc,
            self.lambda_obj,
        ];
        if lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return fail("loss weights must be finite and non-negative");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_d_is_rejected() {
        let cfg = TrainConfig {
            d: 7,
            ..TrainConfig::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Domain(_))));
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn negative_lambda_is_rejected() {
        let cfg = TrainConfig {
            lambda_obj: -1.0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
