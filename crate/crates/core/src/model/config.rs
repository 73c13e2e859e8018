use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape hyperparameters of a transducer.
///
/// `vocab_size` counts output tokens excluding blank; the blank class is
/// always the last index, `vocab_size`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of one raw feature vector.
    pub input_dim: usize,
    /// Raw vectors concatenated into one encoder frame.
    pub stack_factor: usize,
    /// Raw vectors advanced between encoder frames.
    pub stride: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub prediction_layers: usize,
    pub prediction_hidden: usize,
    /// Inner width of the joint network.
    pub projection: usize,
    pub vocab_size: usize,
    #[serde(default)]
    pub use_layer_norm: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_dim: 8,
            stack_factor: 4,
            stride: 2,
            encoder_layers: 2,
            encoder_hidden: 64,
            prediction_layers: 1,
            prediction_hidden: 64,
            projection: 32,
            vocab_size: 12,
            use_layer_norm: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let extents = [
            ("input_dim", self.input_dim),
            ("stack_factor", self.stack_factor),
            ("stride", self.stride),
            ("encoder_layers", self.encoder_layers),
            ("encoder_hidden", self.encoder_hidden),
            ("prediction_layers", self.prediction_layers),
            ("prediction_hidden", self.prediction_hidden),
            ("projection", self.projection),
            ("vocab_size", self.vocab_size),
        ];
        for (name, v) in extents {
            if v == 0 {
                return Err(Error::invalid(format!("model config: {name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of a stacked encoder input frame.
    pub fn frame_dim(&self) -> usize {
        self.input_dim * self.stack_factor
    }

    /// Output classes including blank.
    pub fn num_classes(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn blank(&self) -> usize {
        self.vocab_size
    }

    /// Encoder frames produced from `raw` feature vectors.
    pub fn encoder_frames(&self, raw: usize) -> usize {
        raw.div_ceil(self.stride)
    }
}
