use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::raster::{GrayImage, Raster};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentParams {
    pub hflip_prob: f64,
    pub vflip_prob: f64,
    /// Crop window `(h, w)`; `None` crops to 7/8 of each side.
    pub crop: Option<(usize, usize)>,
    pub discard_prob: f64,
    /// Upper bound on the discarded rectangle, as a fraction of image area.
    pub discard_max_area: f64,
    pub target_mean: f64,
    pub target_std: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        AugmentParams {
            hflip_prob: 0.5,
            vflip_prob: 0.5,
            crop: None,
            discard_prob: 0.3,
            discard_max_area: 0.1,
            target_mean: 128.0,
            target_std: 48.0,
        }
    }
}

impl AugmentParams {
    fn crop_size(&self, h: usize, w: usize) -> (usize, usize) {
        self.crop.unwrap_or((h * 7 / 8, w * 7 / 8))
    }
}

/// Rescales an image to zero mean and unit variance, then maps it affinely
/// onto `target_mean ± target_std` and clamps to `[0, 255]`. The affine
/// offset is corrected so that the clamped, rounded output keeps the target
/// mean.
pub fn contrast_normalize(image: &GrayImage, target_mean: f64, target_std: f64) -> GrayImage {
    let n = image.len() as f64;
    let mean = image.data().iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = image.data().iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    let z: Vec<f64> = image.data().iter().map(|&v| if std > 0.0 { (f64::from(v) - mean) / std } else { 0.0 }).collect();
    let map = |offset: f64| -> Vec<u8> {
        z.iter().map(|z| (offset + target_std * z).round().clamp(0.0, 255.0) as u8).collect()
    };
    let mut offset = target_mean;
    let mut data = map(offset);
    for _ in 0..8 {
        let got = data.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        if (got - target_mean).abs() < 0.25 {
            break;
        }
        offset += target_mean - got;
        data = map(offset);
    }
    Raster::from_vec(image.height(), image.width(), data).expect("same dims")
}

/// Seeded flip / crop-resize / patch-discard / contrast-normalisation
/// pipeline. Only geometric steps touch the mask.
pub fn augment(sample: &Sample, seed: u64, params: &AugmentParams) -> Result<Sample> {
    const OP: &str = "datagen::augment";
    let (h, w) = sample.image.dims();
    if sample.mask.dims() != (h, w) {
        return Err(Error::shape(OP, "image and mask dimensions differ"));
    }
    let (ch, cw) = params.crop_size(h, w);
    if ch > h || cw > w || ch == 0 || cw == 0 {
        return Err(Error::invalid(OP, format!("crop {ch}x{cw} does not fit a {h}x{w} image")));
    }
    let mut rng = seed::rng(seed);
    let mut image = sample.image.clone();
    let mut mask = sample.mask.clone();
    let mut trace = sample.meta.augmentation.clone();

    if rng.gen_bool(params.hflip_prob) {
        image = image.flip_horizontal();
        mask = mask.flip_horizontal();
        trace.push("hflip".into());
    }
    if rng.gen_bool(params.vflip_prob) {
        image = image.flip_vertical();
        mask = mask.flip_vertical();
        trace.push("vflip".into());
    }
    if (ch, cw) != (h, w) {
        let top = rng.gen_range(0..=h - ch);
        let left = rng.gen_range(0..=w - cw);
        image = image.crop(top, left, ch, cw)?.resize_bilinear(h, w);
        mask = mask.crop(top, left, ch, cw)?.resize_nearest(h, w);
        trace.push(format!("crop {top},{left},{ch}x{cw}"));
    }
    if rng.gen_bool(params.discard_prob) {
        let max_area = (params.discard_max_area * (h * w) as f64).floor() as usize;
        let ph = rng.gen_range(1..=h / 2);
        let pw = (max_area / ph).clamp(1, w / 2).min(rng.gen_range(1..=w / 2));
        let top = rng.gen_range(0..=h - ph);
        let left = rng.gen_range(0..=w - pw);
        for r in top..top + ph {
            for c in left..left + pw {
                image.set(r, c, 0);
            }
        }
        trace.push(format!("discard {top},{left},{ph}x{pw}"));
    }
    image = contrast_normalize(&image, params.target_mean, params.target_std);
    trace.push("normalize".into());

    let mut meta = sample.meta.clone();
    meta.augmentation = trace;
    Ok(Sample { image, mask, meta })
}
