use crate::error::{Error, Result};
use crate::raster::{LabelMask, Raster};

/// Nearest-neighbour subsampling at cell centres: output `(i, j)` takes the
/// label of input pixel `(i·s + s/2, j·s + s/2)`.
pub fn downsample_labels(mask: &LabelMask, stride: usize) -> Result<LabelMask> {
    let (h, w) = mask.dims();
    if stride == 0 || h % stride != 0 || w % stride != 0 {
        return Err(Error::shape(
            "vqcl::downsample_labels",
            format!("mask {h}x{w} is not divisible by stride {stride}"),
        ));
    }
    let (ho, wo) = (h / stride, w / stride);
    let half = stride / 2;
    let mut out = Raster::new(ho, wo);
    for i in 0..ho {
        for j in 0..wo {
            out.set(i, j, mask.get(i * stride + half, j * stride + half));
        }
    }
    Ok(out)
}

/// Downsampled labels of a batch, flattened in the same pixel order as an
/// `(n, h/s, w/s, D)` embedding tensor.
pub fn batch_labels(masks: &[&LabelMask], stride: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for m in masks {
        out.extend_from_slice(downsample_labels(m, stride)?.data());
    }
    Ok(out)
}
