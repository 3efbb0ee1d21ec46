use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{LabelMask, NUM_CLASSES};

/// One-vs-rest pixel counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub(crate) fn check_pair(op: &'static str, pred: &LabelMask, truth: &LabelMask) -> Result<()> {
    if pred.dims() != truth.dims() {
        return Err(Error::shape(op, format!("prediction {:?} vs truth {:?}", pred.dims(), truth.dims())));
    }
    Ok(())
}

pub fn confusion(pred: &LabelMask, truth: &LabelMask, class: u8) -> Result<ConfusionCounts> {
    check_pair("metrics::confusion", pred, truth)?;
    if class as usize >= NUM_CLASSES {
        return Err(Error::invalid("metrics::confusion", format!("class {class} outside 0..{NUM_CLASSES}")));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p == class, t == class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// `2TP / (2TP + FP + FN)`; 1 when the class is absent from both masks.
pub fn dice(c: &ConfusionCounts) -> f64 {
    let d = 2 * c.tp + c.fp + c.fn_;
    if d == 0 {
        1.0
    } else {
        (2 * c.tp) as f64 / d as f64
    }
}

/// `TP / (TP + FP + FN)`; 1 when the class is absent from both masks.
pub fn iou(c: &ConfusionCounts) -> f64 {
    let d = c.tp + c.fp + c.fn_;
    if d == 0 {
        1.0
    } else {
        c.tp as f64 / d as f64
    }
}

/// `(TP + TN) / total`.
pub fn acc(c: &ConfusionCounts) -> f64 {
    if c.total() == 0 {
        1.0
    } else {
        (c.tp + c.tn) as f64 / c.total() as f64
    }
}

/// Fraction of pixels of each class.
pub fn class_area_proportions(mask: &LabelMask) -> [f64; NUM_CLASSES] {
    let counts = mask.class_counts();
    let n = mask.len().max(1) as f64;
    counts.map(|c| c as f64 / n)
}
