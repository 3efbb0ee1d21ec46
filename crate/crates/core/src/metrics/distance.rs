use serde::{Deserialize, Serialize};

use super::counts::check_pair;
use crate::error::{Error, Result};
use crate::raster::LabelMask;

/// Boundary pixels of the binary mask `mask == class`: mask pixels with a
/// 4-neighbour outside the mask or outside the image. Returned as
/// `(row, col)` in raster order.
pub fn surface(mask: &LabelMask, class: u8) -> Vec<(usize, usize)> {
    let (h, w) = mask.dims();
    let inside = |r: isize, c: isize| {
        r >= 0 && c >= 0 && (r as usize) < h && (c as usize) < w && mask.get(r as usize, c as usize) == class
    };
    let mut out = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if mask.get(r, c) != class {
                continue;
            }
            let (ri, ci) = (r as isize, c as isize);
            if !(inside(ri - 1, ci) && inside(ri + 1, ci) && inside(ri, ci - 1) && inside(ri, ci + 1)) {
                out.push((r, c));
            }
        }
    }
    out
}

/// Stand-in for "no seed" inside the transform; far above any real squared
/// distance yet small enough to keep parabola intersections finite.
const FAR: f64 = 1e20;

/// 1-D lower envelope of parabolas (Felzenszwalb & Huttenlocher).
fn edt_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let fq = f[q] + (q * q) as f64;
        let mut s;
        loop {
            let p = v[k];
            s = (fq - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            // z[0] = −∞ stops the walk at k = 0
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Exact squared Euclidean distance from every pixel to the nearest seed.
/// Seeds are given as `(row, col)`; without seeds every value is infinite.
pub fn squared_distance_transform(h: usize, w: usize, seeds: &[(usize, usize)]) -> Vec<f64> {
    let mut grid = vec![FAR; h * w];
    for &(r, c) in seeds {
        grid[r * w + c] = 0.0;
    }
    let n = h.max(w);
    let (mut f, mut out, mut v, mut z) = (vec![0.0; n], vec![0.0; n], vec![0usize; n], vec![0.0; n + 1]);
    for c in 0..w {
        for r in 0..h {
            f[r] = grid[r * w + c];
        }
        edt_1d(&f[..h], &mut out[..h], &mut v, &mut z);
        for r in 0..h {
            grid[r * w + c] = out[r];
        }
    }
    for r in 0..h {
        f[..w].copy_from_slice(&grid[r * w..(r + 1) * w]);
        edt_1d(&f[..w], &mut out[..w], &mut v, &mut z);
        grid[r * w..(r + 1) * w].copy_from_slice(&out[..w]);
    }
    for g in grid.iter_mut().filter(|g| **g >= FAR) {
        *g = f64::INFINITY;
    }
    grid
}

/// Distances from each pixel of `from` to the nearest pixel of `to`.
fn directed(h: usize, w: usize, from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    let dt = squared_distance_transform(h, w, to);
    from.iter().map(|&(r, c)| dt[r * w + c].sqrt()).collect()
}

/// Reading of the 95 % Hausdorff distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hd95Variant {
    /// 95th percentile of the pooled directed surface distances.
    #[default]
    Percentile,
    /// `0.95 · max(d_XY, d_YX)`.
    Literal,
}

impl std::str::FromStr for Hd95Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "percentile" => Ok(Hd95Variant::Percentile),
            "literal" => Ok(Hd95Variant::Literal),
            other => {
                Err(Error::invalid("metrics::Hd95Variant", format!("unknown variant {other:?} (percentile|literal)")))
            }
        }
    }
}

impl std::fmt::Display for Hd95Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Hd95Variant::Percentile => "percentile",
            Hd95Variant::Literal => "literal",
        })
    }
}

/// Linear-interpolation quantile (`q ∈ [0, 1]`) of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn surfaces(
    op: &'static str,
    pred: &LabelMask,
    truth: &LabelMask,
    class: u8,
) -> Result<(Vec<(usize, usize)>, Vec<(usize, usize)>)> {
    check_pair(op, pred, truth)?;
    let sp = surface(pred, class);
    if sp.is_empty() {
        return Err(Error::EmptyMask { op, class, side: "prediction" });
    }
    let st = surface(truth, class);
    if st.is_empty() {
        return Err(Error::EmptyMask { op, class, side: "truth" });
    }
    Ok((sp, st))
}

/// Surface-based 95 % Hausdorff distance in pixels. Errors with
/// [`Error::EmptyMask`] when the class is absent from either mask.
pub fn hd95(pred: &LabelMask, truth: &LabelMask, class: u8, variant: Hd95Variant) -> Result<f64> {
    let (sp, st) = surfaces("metrics::hd95", pred, truth, class)?;
    let (h, w) = pred.dims();
    let mut a = directed(h, w, &sp, &st);
    let b = directed(h, w, &st, &sp);
    Ok(match variant {
        Hd95Variant::Literal => {
            let m = a.iter().chain(&b).copied().fold(0.0, f64::max);
            0.95 * m
        }
        Hd95Variant::Percentile => {
            a.extend(b);
            a.sort_by(f64::total_cmp);
            quantile_sorted(&a, 0.95)
        }
    })
}

/// Mean distance from the prediction's surface pixels to the nearest truth
/// surface pixel (one-directional).
pub fn asd(pred: &LabelMask, truth: &LabelMask, class: u8) -> Result<f64> {
    let (sp, st) = surfaces("metrics::asd", pred, truth, class)?;
    let (h, w) = pred.dims();
    let d = directed(h, w, &sp, &st);
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: usize, w: usize, top: usize, left: usize, size: usize) -> LabelMask {
        let mut m = LabelMask::new(h, w);
        for r in top..top + size {
            for c in left..left + size {
                m.set(r, c, 1);
            }
        }
        m
    }

    #[test]
    fn shifted_squares() {
        let a = square(9, 12, 2, 1, 5);
        let b = square(9, 12, 2, 4, 5);
        assert!((hd95(&a, &b, 1, Hd95Variant::Literal).unwrap() - 2.85).abs() < 1e-12);
        assert!((hd95(&a, &b, 1, Hd95Variant::Percentile).unwrap() - 3.0).abs() < 1e-12);
        assert_eq!(hd95(&a, &a, 1, Hd95Variant::Percentile).unwrap(), 0.0);
        assert_eq!(asd(&a, &a, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_pixels() {
        let mut a = LabelMask::new(10, 10);
        a.set(1, 1, 2);
        let mut b = LabelMask::new(10, 10);
        b.set(4, 5, 2);
        assert!((hd95(&a, &b, 2, Hd95Variant::Literal).unwrap() - 0.95 * 5.0).abs() < 1e-12);
        assert!((asd(&a, &b, 2).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn empty_masks_error() {
        let a = LabelMask::new(4, 4);
        let b = square(4, 4, 0, 0, 2);
        let err = hd95(&a, &b, 1, Hd95Variant::Percentile).unwrap_err();
        assert!(matches!(err, Error::EmptyMask { side: "prediction", .. }));
        assert!(matches!(asd(&b, &a, 1).unwrap_err(), Error::EmptyMask { side: "truth", .. }));
    }

    #[test]
    fn surface_of_filled_square() {
        let s = surface(&square(7, 7, 1, 1, 5), 1);
        assert_eq!(s.len(), 16);
        let border = surface(&LabelMask::filled(3, 3, 1), 1);
        assert_eq!(border.len(), 8);
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let seeds = [(0, 0), (3, 7), (5, 2), (5, 3)];
        let dt = squared_distance_transform(6, 9, &seeds);
        for r in 0..6 {
            for c in 0..9 {
                let bf = seeds
                    .iter()
                    .map(|&(sr, sc)| (r as f64 - sr as f64).powi(2) + (c as f64 - sc as f64).powi(2))
                    .fold(f64::INFINITY, f64::min);
                assert_eq!(dt[r * 9 + c], bf, "({r},{c})");
            }
        }
        assert!(squared_distance_transform(2, 2, &[]).iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn quantiles() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&v, 0.25), 2.0);
        assert_eq!(quantile_sorted(&v, 0.95), 4.8);
        assert_eq!(quantile_sorted(&[7.0], 0.95), 7.0);
    }
}
