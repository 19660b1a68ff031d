use serde::{Deserialize, Serialize};

use crate::attention::AttentionMode;
use crate::error::{Error, Result};
use crate::pyramid::PyramidConfig;

/// Everything that fixes the model architecture: feature geometry, layer
/// widths, vocabulary size, decode length, pyramid bins, and attention mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Feature grid width.
    pub feat_w: usize,
    /// Feature grid height.
    pub feat_h: usize,
    /// Raw feature channels per region.
    pub feat_dim: usize,
    /// Width features are mapped to before attention.
    pub d_model: usize,
    /// Word embedding width.
    pub embed: usize,
    /// LSTM hidden size; also the attention projection width.
    pub hidden: usize,
    /// Vocabulary size K (including the 4 reserved tokens).
    pub vocab: usize,
    /// Decoded sentence length T.
    pub sentence_len: usize,
    /// Pyramid pooling bins.
    pub bins: Vec<usize>,
    /// Attention mode.
    pub mode: AttentionMode,
}

impl ModelConfig {
    /// The reference configuration: 7×7×2048 features, 1,024-d embeddings
    /// and model width, 512 hidden units, K = 8,000, T = 50.
    pub fn reference(mode: AttentionMode) -> Self {
        ModelConfig {
            feat_w: 7,
            feat_h: 7,
            feat_dim: 2048,
            d_model: 1024,
            embed: 1024,
            hidden: 512,
            vocab: 8000,
            sentence_len: 50,
            bins: if mode.uses_pyramid() { vec![1, 2, 4] } else { vec![1] },
            mode,
        }
    }

    /// Attention projection width k = k'; defaults to the hidden size.
    pub fn attn_width(&self) -> usize {
        self.hidden
    }

    pub fn pyramid(&self) -> Result<PyramidConfig> {
        PyramidConfig::new(self.bins.clone())
    }

    /// Total pyramid rows L' for the configured grid and bins.
    pub fn total_regions(&self) -> usize {
        self.bins
            .iter()
            .map(|&b| (self.feat_w - b + 1) * (self.feat_h - b + 1))
            .sum()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("feat_w", self.feat_w),
            ("feat_h", self.feat_h),
            ("feat_dim", self.feat_dim),
            ("d_model", self.d_model),
            ("embed", self.embed),
            ("hidden", self.hidden),
            ("vocab", self.vocab),
            ("sentence_len", self.sentence_len),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.vocab < 5 {
            return Err(Error::config("vocab must exceed the 4 reserved tokens"));
        }
        let cfg = PyramidConfig::new(self.bins.clone())?;
        if let Some(&b) = cfg.bins.iter().find(|&&b| b > self.feat_w.min(self.feat_h)) {
            return Err(Error::config(format!(
                "bin {b} exceeds feature grid {}x{}",
                self.feat_w, self.feat_h
            )));
        }
        if self.mode.uses_pyramid() && cfg.bins.len() < 2 {
            return Err(Error::config(
                "pyramid attention modes need at least two bins",
            ));
        }
        if !self.mode.uses_pyramid() && cfg.bins != [1] {
            return Err(Error::config(
                "non-pyramid modes must use bins [1]",
            ));
        }
        Ok(())
    }
}
