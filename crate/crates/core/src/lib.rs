//! Vessel connectivity segmentation.
//!
//! An encoder–decoder segmentation network with a queue-based contrastive
//! head (momentum class centres plus a per-class feature queue), trained
//! with cross-entropy, soft Dice and contrastive losses under a phased
//! class-reweighting schedule. Labels are background / connected /
//! non-connected. Synthetic vessel scenes with exact connectivity labels
//! provide training and test data.

pub mod datagen;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod raster;
pub mod seed;
pub mod tensor;
pub mod trainer;
pub mod vqcl;

pub use error::{Error, Result};
pub use raster::{GrayImage, LabelMask, Raster, NUM_CLASSES};
pub use tensor::Tensor;
