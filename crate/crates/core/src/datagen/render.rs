use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{GrayImage, Raster};
use crate::seed;

/// Bright-field rendering parameters, in gray levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderParams {
    pub background: f64,
    /// Peak amplitude of the low-frequency background texture.
    pub texture: f64,
    /// Offset applied to vessel wall pixels (negative = darker).
    pub wall: f64,
    /// Offset applied to lumen pixels; kept above `wall` so the lumen reads brighter than its walls.
    pub lumen: f64,
    pub noise_std: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { background: 150.0, texture: 14.0, wall: -62.0, lumen: -24.0, noise_std: 7.0 }
    }
}

/// Renders a binary vessel raster as a bright-field-like grayscale image:
/// dark vessel walls, a brighter lumen, a smooth background texture and
/// Gaussian noise. Deterministic per seed.
pub fn render_brightfield(vessels: &Raster, seed: u64, params: &RenderParams) -> GrayImage {
    let (h, w) = vessels.dims();
    let mut rng = seed::rng(seed);
    // texture: a few random plane waves
    let waves: Vec<(f64, f64, f64, f64)> = (0..4)
        .map(|_| {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let freq = rng.gen_range(0.5..3.0) * std::f64::consts::TAU / h.max(w) as f64;
            let phase = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(0.3..1.0);
            (freq * theta.cos(), freq * theta.sin(), phase, amp)
        })
        .collect();
    let amp_total: f64 = waves.iter().map(|w| w.3).sum();
    let noise = Normal::new(0.0, params.noise_std.max(1e-12)).expect("finite std");
    let is_wall = |row: usize, col: usize| -> bool {
        let (r0, r1) = (row.saturating_sub(1), (row + 1).min(h - 1));
        let (c0, c1) = (col.saturating_sub(1), (col + 1).min(w - 1));
        (r0..=r1).any(|r| (c0..=c1).any(|c| vessels.get(r, c) == 0))
    };
    let mut out = Raster::new(h, w);
    for row in 0..h {
        for col in 0..w {
            let texture: f64 =
                waves.iter().map(|&(kx, ky, ph, a)| a * (kx * col as f64 + ky * row as f64 + ph).sin()).sum::<f64>()
                    / amp_total;
            let mut v = params.background + params.texture * texture;
            if vessels.get(row, col) != 0 {
                v += if is_wall(row, col) { params.wall } else { params.lumen };
            }
            if params.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            out.set(row, col, v.round().clamp(0.0, 255.0) as u8);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_graph, rasterize, GraphParams};

    #[test]
    fn deterministic_per_seed() {
        let g = generate_graph(3, (64, 64), &GraphParams::default()).unwrap();
        let r = rasterize(&g);
        let p = RenderParams::default();
        assert_eq!(render_brightfield(&r, 9, &p), render_brightfield(&r, 9, &p));
        assert_ne!(render_brightfield(&r, 9, &p), render_brightfield(&r, 10, &p));
    }

    #[test]
    fn empty_raster_renders_background_only() {
        let p = RenderParams { noise_std: 0.0, ..Default::default() };
        let img = render_brightfield(&Raster::new(64, 64), 1, &p);
        let lo = (p.background - p.texture).floor() as u8;
        let hi = (p.background + p.texture).ceil() as u8;
        assert!(img.data().iter().all(|&v| v >= lo && v <= hi));
    }

    #[test]
    fn vessels_contrast_with_background() {
        let p = RenderParams::default();
        let margin = 15.0;
        for s in 0..20 {
            let g = generate_graph(s, (128, 128), &GraphParams::default()).unwrap();
            let r = rasterize(&g);
            let img = render_brightfield(&r, s, &p);
            let (mut inside, mut n_in, mut outside, mut n_out) = (0.0, 0.0, 0.0, 0.0);
            for (v, m) in img.data().iter().zip(r.data()) {
                if *m != 0 {
                    inside += f64::from(*v);
                    n_in += 1.0;
                } else {
                    outside += f64::from(*v);
                    n_out += 1.0;
                }
            }
            assert!((inside / n_in - outside / n_out).abs() >= margin, "seed {s}");
        }
    }
}
