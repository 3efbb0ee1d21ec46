//! Shared inputs for the benchmarks.

use vcnet_core::datagen::{synthesize_scene, Sample, SceneParams, Split};

/// Deterministic synthetic scenes at `side`×`side`.
pub fn scenes(n: usize, side: usize) -> Vec<Sample> {
    let params = SceneParams::with_canvas(side, side);
    (0..n as u64)
        .map(|seed| synthesize_scene(&format!("b{seed}"), seed, Split::Train, &params).expect("scene"))
        .collect()
}
