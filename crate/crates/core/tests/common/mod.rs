//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};
use std::path::{Path, PathBuf};

use vcnet_core::datagen::InletBand;
use vcnet_core::raster::Raster;
use vcnet_core::Tensor;

/// Breadth-first flood fill from every vessel pixel in the inlet band.
pub fn flood_fill_oracle(vessels: &Raster, inlet: InletBand) -> Raster {
    let (h, w) = vessels.dims();
    let mut reached = vec![false; h * w];
    let mut queue = VecDeque::new();
    for r in 0..h {
        for c in inlet.start..inlet.end {
            if vessels.get(r, c) == 1 && !reached[r * w + c] {
                reached[r * w + c] = true;
                queue.push_back((r, c));
            }
        }
    }
    while let Some((r, c)) = queue.pop_front() {
        let mut visit = |rr: usize, cc: usize| {
            if vessels.get(rr, cc) == 1 && !reached[rr * w + cc] {
                reached[rr * w + cc] = true;
                queue.push_back((rr, cc));
            }
        };
        if r > 0 {
            visit(r - 1, c);
        }
        if r + 1 < h {
            visit(r + 1, c);
        }
        if c > 0 {
            visit(r, c - 1);
        }
        if c + 1 < w {
            visit(r, c + 1);
        }
    }
    let mut out = Raster::new(h, w);
    for i in 0..h * w {
        out.data_mut()[i] = match (vessels.data()[i], reached[i]) {
            (0, _) => 0,
            (_, true) => 1,
            (_, false) => 2,
        };
    }
    out
}

pub fn walk(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

// ---- metrics -------------------------------------------------------------

pub type PixelSet = BTreeSet<(usize, usize)>;

pub fn pixel_set(mask: &Raster, class: u8) -> PixelSet {
    let (h, w) = mask.dims();
    (0..h).flat_map(|r| (0..w).map(move |c| (r, c))).filter(|&(r, c)| mask.get(r, c) == class).collect()
}

/// (dice, iou, acc) from set algebra, with 1 for an empty union.
pub fn set_overlap(pred: &PixelSet, truth: &PixelSet, total: usize) -> (f64, f64, f64) {
    let inter = pred.intersection(truth).count();
    let union = pred.union(truth).count();
    let dice = if pred.len() + truth.len() == 0 { 1.0 } else { 2.0 * inter as f64 / (pred.len() + truth.len()) as f64 };
    let iou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let acc = (total - (union - inter)) as f64 / total as f64;
    (dice, iou, acc)
}

/// Set pixels lacking one of their four neighbours inside the set.
pub fn boundary(set: &PixelSet) -> Vec<(usize, usize)> {
    set.iter()
        .copied()
        .filter(|&(r, c)| {
            let nb = [
                r.checked_sub(1).map(|r| (r, c)),
                Some((r + 1, c)),
                c.checked_sub(1).map(|c| (r, c)),
                Some((r, c + 1)),
            ];
            nb.iter().any(|n| n.map_or(true, |p| !set.contains(&p)))
        })
        .collect()
}

/// For every point of `from`, the distance to the closest point of `to`,
/// by exhaustive search.
pub fn nearest_distances(from: &[(usize, usize)], to: &[(usize, usize)]) -> Vec<f64> {
    from.iter()
        .map(|&(r, c)| {
            to.iter()
                .map(|&(a, b)| ((r as f64 - a as f64).powi(2) + (c as f64 - b as f64).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// (percentile HD95, literal HD95, ASD) by brute force; `None` when either
/// boundary is empty.
pub fn distance_oracle(pred: &PixelSet, truth: &PixelSet, bounds: (usize, usize)) -> Option<(f64, f64, f64)> {
    let clip =
        |s: &PixelSet| -> PixelSet { s.iter().copied().filter(|&(r, c)| r < bounds.0 && c < bounds.1).collect() };
    let (bp, bt) = (boundary(&clip(pred)), boundary(&clip(truth)));
    if bp.is_empty() || bt.is_empty() {
        return None;
    }
    let a = nearest_distances(&bp, &bt);
    let b = nearest_distances(&bt, &bp);
    let literal = 0.95 * a.iter().chain(&b).copied().fold(0.0, f64::max);
    let mut pooled: Vec<f64> = a.iter().chain(&b).copied().collect();
    pooled.sort_by(f64::total_cmp);
    let pos = 0.95 * (pooled.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let percentile = pooled[lo] + (pooled[hi] - pooled[lo]) * (pos - lo as f64);
    let asd = a.iter().sum::<f64>() / a.len() as f64;
    Some((percentile, literal, asd))
}

// ---- losses --------------------------------------------------------------

/// Weighted CE straight from the definition.
pub fn ce_oracle(logits: &Tensor, labels: &[u8], w: &[f64]) -> f64 {
    let mut total = 0.0;
    for (p, &y) in labels.iter().enumerate() {
        let row = logits.pixel(p);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        total += w[y as usize] * -(row[y as usize].exp() / z).ln();
    }
    total / labels.len() as f64
}

/// Soft Dice written out per class over all pixels.
pub fn dice_oracle(probs: &Tensor, labels: &[u8]) -> f64 {
    let l = probs.channels();
    let mut acc = 0.0;
    for c in 0..l {
        let (mut i, mut sp, mut sy) = (0.0, 0.0, 0.0);
        for (p, &y) in labels.iter().enumerate() {
            let v = probs.pixel(p)[c];
            let t = f64::from(y as usize == c);
            i += v * t;
            sp += v;
            sy += t;
        }
        acc += (2.0 * i + 1e-6) / (sp + sy + 1e-6);
    }
    1.0 - acc / l as f64
}

/// Naive per-pixel softmax.
pub fn softmax_oracle(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for p in 0..out.pixels() {
        let row = out.pixel_mut(p);
        let z: f64 = row.iter().map(|v| v.exp()).sum();
        row.iter_mut().for_each(|v| *v = v.exp() / z);
    }
    out
}

/// Direct transcription of the per-class contrastive objective: for each
/// anchor class, average over its queued positives of
/// −log(e^{s⁺} / (e^{s⁺} + Σ_{l≠i} mean_{Q_l} e^{s⁻})), summed over classes.
pub fn vqcl_oracle(centers: &[Vec<f64>], queues: &[Vec<Vec<f64>>], tau: f64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for (i, c) in centers.iter().enumerate() {
        if queues[i].is_empty() {
            continue;
        }
        let mut neg = 0.0;
        let mut any_neg = false;
        for (l, q) in queues.iter().enumerate() {
            if l != i && !q.is_empty() {
                any_neg = true;
                neg += q.iter().map(|f| (dot(c, f) / tau).exp()).sum::<f64>() / q.len() as f64;
            }
        }
        if !any_neg {
            continue;
        }
        let mut li = 0.0;
        for f in &queues[i] {
            let pos = (dot(c, f) / tau).exp();
            li -= (pos / (pos + neg)).ln();
        }
        total += li / queues[i].len() as f64;
    }
    total
}

/// Central difference of `f` along coordinate `i` of `x`.
pub fn central_diff(x: &[f64], i: usize, eps: f64, f: &dyn Fn(&[f64]) -> f64) -> f64 {
    let mut p = x.to_vec();
    p[i] += eps;
    let mut m = x.to_vec();
    m[i] -= eps;
    (f(&p) - f(&m)) / (2.0 * eps)
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
