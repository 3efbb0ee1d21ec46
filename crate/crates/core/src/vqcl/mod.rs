//! Queue contrastive learning: momentum class centres, a per-class FIFO
//! feature queue, and an InfoNCE-style loss that contrasts each class centre
//! against queued features of its own class (positives) and of the other
//! classes (negatives).

mod centers;
mod labels;
mod loss;
mod queue;

use serde::{Deserialize, Serialize};

pub use centers::{init_centers, momentum_blend, CenterUpdate, ClassCenters};
pub use labels::{batch_labels, downsample_labels};
pub use loss::{vqcl_loss, VqclLoss};
pub use queue::{FeatureQueue, QueueEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqclConfig {
    /// Centre momentum α ∈ [0, 1].
    pub alpha: f64,
    /// Temperature τ > 0.
    pub tau: f64,
    /// Per-class queue capacity, in feature vectors.
    pub queue_capacity: usize,
    /// Pixels sampled per class and batch for the queue.
    pub samples_per_class: usize,
}

impl Default for VqclConfig {
    fn default() -> Self {
        VqclConfig { alpha: 0.4, tau: 0.4, queue_capacity: 128, samples_per_class: 16 }
    }
}

impl VqclConfig {
    pub fn validate(&self) -> crate::Result<()> {
        const OP: &str = "vqcl::VqclConfig::validate";
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(crate::Error::invalid(OP, format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.tau > 0.0) {
            return Err(crate::Error::invalid(OP, format!("tau {} must be positive", self.tau)));
        }
        if self.queue_capacity == 0 {
            return Err(crate::Error::invalid(OP, "queue capacity must be positive"));
        }
        Ok(())
    }
}
