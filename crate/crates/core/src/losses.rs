//! Segmentation losses and class-imbalance weighting schedules.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::LabelMask;
use crate::tensor::Tensor;

/// Smoothing constant of the soft Dice loss.
pub const DICE_EPS: f64 = 1e-6;

/// Which rule produced a set of class weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightTag {
    None,
    Rw,
    Drw,
    Ppw,
}

/// Per-class loss weights, rescaled to mean 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    omega: Vec<f64>,
    tag: WeightTag,
    beta: f64,
}

impl ClassWeights {
    pub fn unit(num_classes: usize) -> Self {
        ClassWeights { omega: vec![1.0; num_classes], tag: WeightTag::None, beta: 0.0 }
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn tag(&self) -> WeightTag {
        self.tag
    }

    /// Exponent applied to `1/nᵢ` (0 for unit weights, 1 for plain
    /// reweighting).
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }
}

fn check_counts(op: &'static str, n: &[u64]) -> Result<()> {
    if n.is_empty() {
        return Err(Error::invalid(op, "no class counts"));
    }
    if let Some(i) = n.iter().position(|&c| c == 0) {
        return Err(Error::invalid(op, format!("class {i} has zero pixels")));
    }
    Ok(())
}

fn rescaled(raw: Vec<f64>, tag: WeightTag, beta: f64) -> ClassWeights {
    let mean = raw.iter().sum::<f64>() / raw.len() as f64;
    ClassWeights { omega: raw.into_iter().map(|w| w / mean).collect(), tag, beta }
}

/// `ωᵢ ∝ 1/nᵢ`, rescaled to mean 1.
pub fn rw_weights(n: &[u64]) -> Result<ClassWeights> {
    check_counts("losses::rw_weights", n)?;
    Ok(rescaled(n.iter().map(|&c| 1.0 / c as f64).collect(), WeightTag::Rw, 1.0))
}

/// Quadratic ramp of the weighting exponent: 0 up to `e_min`, 1 from
/// `e_max`, `((e − e_min)/(e_max − e_min))²` in between.
pub fn ppw_beta(epoch: usize, e_min: usize, e_max: usize) -> Result<f64> {
    if e_min >= e_max {
        return Err(Error::invalid("losses::ppw_beta", format!("E_min {e_min} must be below E_max {e_max}")));
    }
    Ok(if epoch <= e_min {
        0.0
    } else if epoch >= e_max {
        1.0
    } else {
        let t = (epoch - e_min) as f64 / (e_max - e_min) as f64;
        t * t
    })
}

/// `ωᵢ ∝ (1/nᵢ)^β`, rescaled to mean 1.
pub fn ppw_weights(n: &[u64], beta: f64) -> Result<ClassWeights> {
    const OP: &str = "losses::ppw_weights";
    check_counts(OP, n)?;
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(OP, format!("beta {beta} outside [0, 1]")));
    }
    Ok(rescaled(n.iter().map(|&c| (1.0 / c as f64).powf(beta)).collect(), WeightTag::Ppw, beta))
}

/// Unit weights before `e_switch`, plain reweighting from then on.
pub fn drw_weights(n: &[u64], epoch: usize, e_switch: usize) -> Result<ClassWeights> {
    check_counts("losses::drw_weights", n)?;
    let mut w = if epoch < e_switch { ClassWeights::unit(n.len()) } else { rw_weights(n)? };
    w.tag = WeightTag::Drw;
    Ok(w)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleMode {
    None,
    Rw,
    Drw,
    Ppw,
}

impl std::str::FromStr for ScheduleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" => Ok(ScheduleMode::None),
            "rw" => Ok(ScheduleMode::Rw),
            "drw" => Ok(ScheduleMode::Drw),
            "ppw" => Ok(ScheduleMode::Ppw),
            other => Err(Error::invalid("losses::ScheduleMode", format!("unknown weighting mode {other:?}"))),
        }
    }
}

/// Epoch → class weights, from training-split pixel counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImbalanceSchedule {
    pub mode: ScheduleMode,
    pub e_min: usize,
    pub e_max: usize,
    /// DRW switch epoch; `e_min` when unset.
    pub e_switch: Option<usize>,
    pub counts: Vec<u64>,
}

impl ImbalanceSchedule {
    pub fn new(mode: ScheduleMode, e_min: usize, e_max: usize, counts: Vec<u64>) -> Result<Self> {
        let s = ImbalanceSchedule { mode, e_min, e_max, e_switch: None, counts };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        const OP: &str = "losses::ImbalanceSchedule";
        if self.e_min >= self.e_max {
            return Err(Error::invalid(OP, format!("E_min {} must be below E_max {}", self.e_min, self.e_max)));
        }
        check_counts(OP, &self.counts)
    }

    pub fn weights(&self, epoch: usize) -> Result<ClassWeights> {
        match self.mode {
            ScheduleMode::None => Ok(ClassWeights::unit(self.counts.len())),
            ScheduleMode::Rw => rw_weights(&self.counts),
            ScheduleMode::Drw => drw_weights(&self.counts, epoch, self.e_switch.unwrap_or(self.e_min)),
            ScheduleMode::Ppw => ppw_weights(&self.counts, ppw_beta(epoch, self.e_min, self.e_max)?),
        }
    }
}

/// Loss value with its gradient with respect to the loss input.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub value: f64,
    pub grad: Tensor,
}

/// Concatenates masks into per-pixel labels in batch order.
pub fn flat_labels(masks: &[&LabelMask]) -> Vec<u8> {
    masks.iter().flat_map(|m| m.data().iter().copied()).collect()
}

fn check_labels(op: &'static str, t: &Tensor, labels: &[u8]) -> Result<()> {
    if t.pixels() != labels.len() {
        return Err(Error::shape(op, format!("{} pixels vs {} labels", t.pixels(), labels.len())));
    }
    let l = t.channels();
    if let Some(&y) = labels.iter().find(|&&y| y as usize >= l) {
        return Err(Error::invalid(op, format!("label {y} outside 0..{l}")));
    }
    Ok(())
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Per-pixel softmax over the channel axis.
pub fn softmax(logits: &Tensor) -> Tensor {
    let mut out = logits.clone();
    for p in 0..out.pixels() {
        let row = out.pixel_mut(p);
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    out
}

/// Maps a gradient with respect to softmax outputs onto the logits.
pub fn softmax_backward(probs: &Tensor, grad_probs: &Tensor) -> Tensor {
    let mut out = grad_probs.clone();
    for p in 0..out.pixels() {
        let pr = probs.pixel(p);
        let inner: f64 = pr.iter().zip(grad_probs.pixel(p)).map(|(a, b)| a * b).sum();
        for (o, &q) in out.pixel_mut(p).iter_mut().zip(pr) {
            *o = q * (*o - inner);
        }
    }
    out
}

/// Weighted cross-entropy `mean_p ω_{y_p}·(−log softmax(z_p)_{y_p})` and its
/// gradient with respect to the logits.
pub fn ce_loss(logits: &Tensor, labels: &[u8], weights: &ClassWeights) -> Result<LossGrad> {
    const OP: &str = "losses::ce_loss";
    check_labels(OP, logits, labels)?;
    if weights.len() != logits.channels() {
        return Err(Error::shape(OP, format!("{} weights for {} classes", weights.len(), logits.channels())));
    }
    let n = labels.len() as f64;
    let mut grad = logits.clone();
    let mut total = 0.0;
    for (p, &y) in labels.iter().enumerate() {
        let y = y as usize;
        let w = weights.omega[y];
        let row = grad.pixel_mut(p);
        let lse = log_sum_exp(row);
        total += w * (lse - row[y]);
        for v in row.iter_mut() {
            *v = w * (*v - lse).exp() / n;
        }
        row[y] -= w / n;
    }
    Ok(LossGrad { value: total / n, grad })
}

/// Soft Dice loss `1 − mean_c (2·Σ p_c y_c + ε)/(Σ p_c + Σ y_c + ε)`, pooled
/// over all pixels of the batch, and its gradient with respect to `probs`.
pub fn dice_loss(probs: &Tensor, labels: &[u8]) -> Result<LossGrad> {
    check_labels("losses::dice_loss", probs, labels)?;
    let l = probs.channels();
    let mut inter = vec![0.0; l];
    let mut sum_p = vec![0.0; l];
    let mut sum_y = vec![0.0; l];
    for (p, &y) in labels.iter().enumerate() {
        for (c, &v) in probs.pixel(p).iter().enumerate() {
            sum_p[c] += v;
        }
        inter[y as usize] += probs.pixel(p)[y as usize];
        sum_y[y as usize] += 1.0;
    }
    let denom: Vec<f64> = (0..l).map(|c| sum_p[c] + sum_y[c] + DICE_EPS).collect();
    let dice: Vec<f64> = (0..l).map(|c| (2.0 * inter[c] + DICE_EPS) / denom[c]).collect();
    let mut grad = Tensor::zeros(probs.shape());
    for (p, &y) in labels.iter().enumerate() {
        for (c, g) in grad.pixel_mut(p).iter_mut().enumerate() {
            let yc = if c == y as usize { 2.0 } else { 0.0 };
            *g = -(yc * denom[c] - (2.0 * inter[c] + DICE_EPS)) / (denom[c] * denom[c]) / l as f64;
        }
    }
    Ok(LossGrad { value: 1.0 - dice.iter().sum::<f64>() / l as f64, grad })
}

/// Dice loss of `softmax(logits)` with its gradient mapped onto the logits.
pub fn dice_loss_logits(logits: &Tensor, labels: &[u8]) -> Result<LossGrad> {
    let probs = softmax(logits);
    let d = dice_loss(&probs, labels)?;
    Ok(LossGrad { value: d.value, grad: softmax_backward(&probs, &d.grad) })
}

/// Unweighted sum of the three loss terms; any non-finite term is an error
/// naming it.
pub fn total_loss(ce: f64, dice: f64, vqcl: f64) -> Result<f64> {
    for (name, v) in [("ce", ce), ("dice", dice), ("vqcl", vqcl)] {
        if !v.is_finite() {
            return Err(Error::invalid("losses::total_loss", format!("non-finite {name} loss ({v})")));
        }
    }
    Ok(ce + dice + vqcl)
}
