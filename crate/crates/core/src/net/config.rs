use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{CLASS_DIM, LOCATION_DIM};

/// Network sizes. Every field has a desk-scale default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Width of the appearance feature produced per object.
    pub appearance_dim: usize,
    /// Output channels of the two 3x3 convolution stages of the appearance encoder.
    pub encoder_channels: [usize; 2],
    /// Output width of each ST-Graph layer; the length is the layer count per stream.
    pub layer_dims: Vec<usize>,
    /// Temporal kernel size of the temporal message passing step.
    pub tmp_kernel: usize,
    pub lstm_hidden: usize,
    pub fcn_hidden: usize,
    /// Predicted future frames.
    pub horizon: usize,
    /// Crossing decision threshold; probabilities equal to it count as not crossing.
    pub threshold: f64,
    /// Fixed node-slot capacity per frame.
    pub max_nodes: usize,
    /// Zero the signal-state block of the class features.
    pub ablate_signals: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            appearance_dim: 8,
            encoder_channels: [4, 4],
            layer_dims: vec![16, 16],
            tmp_kernel: 3,
            lstm_hidden: 32,
            fcn_hidden: 32,
            horizon: 15,
            threshold: 0.5,
            max_nodes: 8,
            ablate_signals: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("appearance_dim", self.appearance_dim),
            ("encoder_channels[0]", self.encoder_channels[0]),
            ("encoder_channels[1]", self.encoder_channels[1]),
            ("tmp_kernel", self.tmp_kernel),
            ("lstm_hidden", self.lstm_hidden),
            ("fcn_hidden", self.fcn_hidden),
            ("horizon", self.horizon),
            ("max_nodes", self.max_nodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::validation(format!("config.{name}"), "must be positive"));
            }
        }
        if self.layer_dims.is_empty() {
            return Err(Error::validation("config.layer_dims", "at least one ST-Graph layer required"));
        }
        if let Some(i) = self.layer_dims.iter().position(|&d| d == 0) {
            return Err(Error::validation(format!("config.layer_dims[{i}]"), "must be positive"));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::validation("config.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn image_class_dim(&self) -> usize {
        self.appearance_dim + CLASS_DIM
    }

    pub fn location_class_dim(&self) -> usize {
        LOCATION_DIM + CLASS_DIM
    }

    /// Width of the fused per-frame vector fed to the LSTM.
    pub fn fused_dim(&self) -> usize {
        2 * self.layer_dims.last().copied().unwrap_or(0)
    }
}
