use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::ScheduleMode;
use crate::model::ModelConfig;
use crate::vqcl::VqclConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// `lr · (1 − (epoch − 1)/epochs)^0.9`.
    Poly,
}

/// Imbalance weighting; class counts come from the training manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImbalanceConfig {
    pub mode: ScheduleMode,
    pub e_min: usize,
    pub e_max: usize,
    /// DRW switch epoch (`e_min` when unset).
    pub e_switch: Option<usize>,
}

impl Default for ImbalanceConfig {
    fn default() -> Self {
        ImbalanceConfig { mode: ScheduleMode::Ppw, e_min: 100, e_max: 200, e_switch: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_schedule: LrSchedule,
    pub model: ModelConfig,
    pub vqcl: VqclConfig,
    pub imbalance: ImbalanceConfig,
    pub seed: u64,
    /// Validate on the test split every this many epochs (0 disables).
    pub val_every: usize,
    /// Extra checkpoint every this many epochs (0: only the final one).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl TrainConfig {
    /// Published optimiser settings with the full-width network.
    pub fn full() -> Self {
        TrainConfig {
            lr: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 8,
            epochs: 1000,
            lr_schedule: LrSchedule::Constant,
            model: ModelConfig::full(),
            vqcl: VqclConfig::default(),
            imbalance: ImbalanceConfig::default(),
            seed: 0,
            val_every: 5,
            checkpoint_every: 100,
        }
    }

    /// Laptop profile: 128×128 inputs, batch 4, 50 epochs, stride 8,
    /// 64 encoder channels, 32-d embedding. The reweighting ramp keeps the
    /// full profile's proportions (10 % / 20 % of the run).
    pub fn desk() -> Self {
        let mut c = TrainConfig { batch_size: 4, model: ModelConfig::desk(), checkpoint_every: 0, ..Self::full() };
        c.set_epochs(50);
        c
    }

    /// Sets the epoch count and rescales the PPW ramp to 10 % / 20 % of it.
    pub fn set_epochs(&mut self, epochs: usize) {
        self.epochs = epochs;
        self.imbalance.e_min = (epochs / 10).max(1);
        self.imbalance.e_max = (epochs / 5).max(self.imbalance.e_min + 1);
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "trainer::TrainConfig::validate";
        self.model.validate()?;
        self.vqcl.validate()?;
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(OP, format!("learning rate {} must be positive", self.lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid(OP, format!("momentum {} outside [0, 1)", self.momentum)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::invalid(OP, "weight decay must be non-negative"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::invalid(OP, "batch size and epochs must be positive"));
        }
        if self.imbalance.e_min >= self.imbalance.e_max {
            return Err(Error::invalid(
                OP,
                format!("E_min {} must be below E_max {}", self.imbalance.e_min, self.imbalance.e_max),
            ));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_schedule {
            LrSchedule::Constant => self.lr,
            LrSchedule::Poly => {
                let t = (epoch.saturating_sub(1)) as f64 / self.epochs as f64;
                self.lr * (1.0 - t).powf(0.9)
            }
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serialises")
    }
}
