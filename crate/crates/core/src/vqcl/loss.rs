use super::{ClassCenters, FeatureQueue};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Value and gradients of the queue contrastive loss.
#[derive(Debug, Clone, PartialEq)]
pub struct VqclLoss {
    pub total: f64,
    pub per_class: Vec<f64>,
    /// `grads[class][k]` is ∂total/∂(vector of the k-th entry of that class's
    /// queue), for every entry whether or not it is detached.
    pub grads: Vec<Vec<Vec<f64>>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ln(1 + eᵘ)` without overflow.
fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Queue contrastive loss.
///
/// For anchor class `i` with centre `Cᵢ`, positives `f⁺` are the queued
/// features of class `i`, and each other class `l` contributes the mean
/// `E_{f⁻∈Q_l} exp(⟨Cᵢ, f⁻⟩/τ)`. Then
///
/// `Lᵢ = −E_{f⁺} log( e^{⟨Cᵢ,f⁺⟩/τ} / (e^{⟨Cᵢ,f⁺⟩/τ} + Σ_{l≠i} E_{f⁻∈Q_l} e^{⟨Cᵢ,f⁻⟩/τ}) )`
///
/// and the total is `Σᵢ Lᵢ`. A class without positives contributes 0, as
/// does one whose other classes are all empty. Everything is evaluated in
/// the log domain.
pub fn vqcl_loss(centers: &ClassCenters, queue: &FeatureQueue, tau: f64) -> Result<VqclLoss> {
    const OP: &str = "vqcl::vqcl_loss";
    if !(tau > 0.0) {
        return Err(Error::invalid(OP, format!("temperature {tau} must be positive")));
    }
    let l = centers.num_classes();
    if queue.num_classes() != l {
        return Err(Error::shape(OP, format!("{} queue classes vs {l} centres", queue.num_classes())));
    }
    let d = centers.dim();
    if let Some(bad) = (0..l).flat_map(|c| queue.class(c).iter()).find(|e| e.vector.len() != d) {
        return Err(Error::shape(OP, format!("queued vector of length {} vs centre dim {d}", bad.vector.len())));
    }

    let mut grads: Vec<Vec<Vec<f64>>> = (0..l).map(|c| vec![vec![0.0; d]; queue.class(c).len()]).collect();
    let mut per_class = vec![0.0; l];
    for anchor in 0..l {
        let positives = queue.class(anchor);
        if positives.is_empty() {
            continue;
        }
        let c = centers.center(anchor);
        // logits ⟨C, f⟩/τ of every queued entry
        let logits: Vec<Vec<f64>> =
            (0..l).map(|k| queue.class(k).iter().map(|e| dot(c, &e.vector) / tau).collect()).collect();
        // log of Σ_{l≠i} mean_{g∈Q_l} exp(logit)
        let mut log_z = f64::NEG_INFINITY;
        for (k, lk) in logits.iter().enumerate() {
            if k == anchor || lk.is_empty() {
                continue;
            }
            let m = lk.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let log_mean = m + (lk.iter().map(|v| (v - m).exp()).sum::<f64>() / lk.len() as f64).ln();
            log_z = log_add_exp(log_z, log_mean);
        }
        if log_z == f64::NEG_INFINITY {
            continue;
        }
        let n_pos = positives.len() as f64;
        let mut loss = 0.0;
        // Σ_f 1/(a_f + Z) in log form, for the negative gradients
        let mut log_inv_denoms = Vec::with_capacity(positives.len());
        for (k, &logit) in logits[anchor].iter().enumerate() {
            let u = log_z - logit;
            loss += softplus(u);
            let sigma = 1.0 / (1.0 + u.exp());
            let coef = (sigma - 1.0) / (n_pos * tau);
            for (g, cv) in grads[anchor][k].iter_mut().zip(c) {
                *g += coef * cv;
            }
            log_inv_denoms.push(-log_add_exp(logit, log_z));
        }
        per_class[anchor] = loss / n_pos;
        for (k, lk) in logits.iter().enumerate() {
            if k == anchor || lk.is_empty() {
                continue;
            }
            let n_neg = lk.len() as f64;
            for (e, &logit) in lk.iter().enumerate() {
                let w: f64 = log_inv_denoms.iter().map(|li| (logit + li).exp()).sum::<f64>() / (n_pos * n_neg * tau);
                for (g, cv) in grads[k][e].iter_mut().zip(c) {
                    *g += w * cv;
                }
            }
        }
    }
    Ok(VqclLoss { total: per_class.iter().sum(), per_class, grads })
}

impl VqclLoss {
    /// Sums the gradients of gradient-carrying entries back onto the pixels
    /// they were sampled from, giving ∂total/∂F for the current field of
    /// shape `shape`. Detached entries contribute nothing.
    pub fn feature_gradient(&self, queue: &FeatureQueue, shape: [usize; 4]) -> Result<Tensor> {
        let mut out = Tensor::zeros(shape);
        for (class, grads) in self.grads.iter().enumerate() {
            for (entry, g) in queue.class(class).iter().zip(grads) {
                let Some(p) = entry.origin else { continue };
                if p >= out.pixels() || g.len() != shape[3] {
                    return Err(Error::shape(
                        "vqcl::feature_gradient",
                        format!("entry origin {p} or dim {} outside {shape:?}", g.len()),
                    ));
                }
                for (o, v) in out.pixel_mut(p).iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vqcl::{ClassCenters, QueueEntry};

    fn entry(v: &[f64]) -> QueueEntry {
        QueueEntry { vector: v.to_vec(), iteration: 0, origin: None }
    }

    #[test]
    fn equal_similarity_gives_ln2() {
        let centers = ClassCenters::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let mut q = FeatureQueue::new(2, 8);
        let v = [0.6, 0.8];
        q.push(0, entry(&v));
        q.push(1, entry(&v));
        let out = vqcl_loss(&centers, &q, 0.4).unwrap();
        assert!((out.per_class[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn opposite_similarities_closed_form() {
        let centers = ClassCenters::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let mut q = FeatureQueue::new(2, 8);
        q.push(0, entry(&[1.0, 0.0]));
        q.push(1, entry(&[-1.0, 0.0]));
        let out = vqcl_loss(&centers, &q, 0.4).unwrap();
        let want = (1.0 + (-5.0f64).exp()).ln();
        assert!((out.per_class[0] - want).abs() < 1e-12);
    }

    #[test]
    fn empty_queue_and_missing_negatives_give_zero() {
        let centers = ClassCenters::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let mut q = FeatureQueue::new(2, 8);
        assert_eq!(vqcl_loss(&centers, &q, 0.4).unwrap().total, 0.0);
        q.push(0, entry(&[1.0, 0.0]));
        assert_eq!(vqcl_loss(&centers, &q, 0.4).unwrap().total, 0.0);
    }

    #[test]
    fn rejects_nonpositive_temperature() {
        let centers = ClassCenters::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let q = FeatureQueue::new(2, 8);
        assert!(vqcl_loss(&centers, &q, 0.0).is_err());
        assert!(vqcl_loss(&centers, &q, -1.0).is_err());
    }

    #[test]
    fn tiny_temperature_stays_finite() {
        let centers = ClassCenters::from_vectors(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0).unwrap();
        let mut q = FeatureQueue::new(2, 8);
        q.push(0, entry(&[-1.0, 0.0]));
        q.push(1, entry(&[1.0, 0.0]));
        let out = vqcl_loss(&centers, &q, 1e-3).unwrap();
        assert!(out.total.is_finite());
        assert!((out.per_class[0] - 2000.0).abs() < 1e-6);
    }
}
