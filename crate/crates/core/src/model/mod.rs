//! Segmentation backbone and the contrastive head's projection and MLP
//! modules, plus the checkpoint format.

mod backbone;
mod checkpoint;
mod config;
mod head;
mod network;

pub use backbone::{Aspp, Backbone};
pub use checkpoint::{Checkpoint, CheckpointHeader, TensorEntry, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::ModelConfig;
pub use head::{l2_normalize, l2_normalize_backward, MlpEmbed, Projection, NORM_EPS};
pub use network::{input_tensor, Network, INPUT_MEAN, INPUT_STD};
