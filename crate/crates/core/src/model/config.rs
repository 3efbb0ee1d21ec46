use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sizes of the segmentation backbone and the contrastive head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub in_channels: usize,
    pub num_classes: usize,
    /// Encoder output stride; a power of two ≥ 4.
    pub stride: usize,
    /// Channels after the stem; doubled at each later stage.
    pub base_width: usize,
    /// Encoder output channels.
    pub enc_channels: usize,
    pub aspp_channels: usize,
    pub aspp_rates: Vec<usize>,
    /// Channels of the projected stride-4 skip connection.
    pub low_level_channels: usize,
    /// Embedding dimension of the contrastive head.
    pub embed_dim: usize,
    pub dropout: f64,
}

impl ModelConfig {
    /// Laptop-sized network used by the default training profile.
    pub fn desk() -> Self {
        ModelConfig {
            in_channels: 3,
            num_classes: 3,
            stride: 8,
            base_width: 16,
            enc_channels: 64,
            aspp_channels: 32,
            aspp_rates: vec![2, 4],
            low_level_channels: 8,
            embed_dim: 32,
            dropout: 0.1,
        }
    }

    /// Widths matching a ResNet-50 DeepLabv3 encoder (2048 channels at
    /// stride 16, 128-d embedding).
    pub fn full() -> Self {
        ModelConfig {
            in_channels: 3,
            num_classes: 3,
            stride: 16,
            base_width: 64,
            enc_channels: 2048,
            aspp_channels: 256,
            aspp_rates: vec![6, 12, 18],
            low_level_channels: 48,
            embed_dim: 128,
            dropout: 0.1,
        }
    }

    /// Smallest useful configuration, for tests.
    pub fn tiny() -> Self {
        ModelConfig {
            in_channels: 3,
            num_classes: 3,
            stride: 8,
            base_width: 4,
            enc_channels: 16,
            aspp_channels: 8,
            aspp_rates: vec![2],
            low_level_channels: 4,
            embed_dim: 8,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "model::ModelConfig::validate";
        if self.stride < 4 || !self.stride.is_power_of_two() {
            return Err(Error::invalid(OP, format!("stride {} must be a power of two >= 4", self.stride)));
        }
        let positive = [
            ("in_channels", self.in_channels),
            ("num_classes", self.num_classes),
            ("base_width", self.base_width),
            ("enc_channels", self.enc_channels),
            ("aspp_channels", self.aspp_channels),
            ("low_level_channels", self.low_level_channels),
            ("embed_dim", self.embed_dim),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(OP, format!("{name} must be positive")));
        }
        if self.num_classes < 2 {
            return Err(Error::invalid(OP, "at least two classes are required"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(OP, format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Number of stride-2 stages after the stem.
    pub fn stages(&self) -> usize {
        self.stride.trailing_zeros() as usize - 1
    }

    /// Output channels of stage `i` (0-based, after the stem).
    pub fn stage_width(&self, i: usize) -> usize {
        if i + 1 == self.stages() {
            self.enc_channels
        } else {
            self.base_width << (i + 1)
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::desk()
    }
}
