//! Synthetic vessel scenes with exact connectivity labels.
//!
//! A scene is a procedural [`VesselGraph`], rasterized to a binary vessel
//! map, labelled by flood connectivity from the inlet band and rendered as a
//! bright-field-like image. [`build_dataset`] turns scenes into a train/test
//! corpus on disk.

mod augment;
mod dataset;
mod draw;
mod graph;
mod label;
mod render;

use serde::{Deserialize, Serialize};

pub use augment::{augment, contrast_normalize, AugmentParams};
pub use dataset::{
    build_dataset, train_count, DatasetManifest, DatasetParams, ManifestRecord, DATASET_FILE, MANIFEST_FILE,
};
pub use draw::rasterize;
pub use graph::{generate_graph, Edge, GraphParams, InletBand, Point, VesselGraph, MIN_CANVAS};
pub use label::label_connectivity;
pub use render::{render_brightfield, RenderParams};

use crate::error::{Error, Result};
use crate::raster::{GrayImage, LabelMask};
use crate::seed::{self, streams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: String,
    pub seed: u64,
    pub split: Split,
    pub augmentation: Vec<String>,
}

/// A grayscale image paired with its three-class mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GrayImage,
    pub mask: LabelMask,
    pub meta: SampleMeta,
}

impl Sample {
    pub fn new(image: GrayImage, mask: LabelMask, meta: SampleMeta) -> Result<Self> {
        if image.dims() != mask.dims() {
            return Err(Error::shape(
                "datagen::Sample::new",
                format!("image {:?} vs mask {:?}", image.dims(), mask.dims()),
            ));
        }
        if let Some(&bad) = mask.data().iter().find(|&&v| v > 2) {
            return Err(Error::invalid("datagen::Sample::new", format!("mask label {bad}")));
        }
        Ok(Sample { image, mask, meta })
    }
}

/// Everything needed to synthesize one scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub height: usize,
    pub width: usize,
    pub graph: GraphParams,
    pub render: RenderParams,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams::with_canvas(256, 256)
    }
}

impl SceneParams {
    pub fn with_canvas(height: usize, width: usize) -> Self {
        SceneParams { height, width, graph: GraphParams::default(), render: RenderParams::default() }
    }
}

/// Graph → raster → labels → rendering for one scene seed.
pub fn synthesize_scene(id: &str, scene_seed: u64, split: Split, params: &SceneParams) -> Result<Sample> {
    let graph = generate_graph(scene_seed, (params.height, params.width), &params.graph)?;
    let vessels = rasterize(&graph);
    let mask = label_connectivity(&vessels, graph.inlet);
    let image = render_brightfield(&vessels, seed::derive(scene_seed, streams::RENDER, 0), &params.render);
    Sample::new(image, mask, SampleMeta { id: id.to_string(), seed: scene_seed, split, augmentation: Vec::new() })
}
