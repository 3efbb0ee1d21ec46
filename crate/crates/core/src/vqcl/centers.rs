use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::NORM_EPS;
use crate::seed;
use crate::tensor::Tensor;

/// One unit-norm prototype per class plus the number of updates applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassCenters {
    vectors: Vec<Vec<f64>>,
    iteration: u64,
}

/// Pre-normalisation accumulators `α·C + (1 − α)·mean` of the classes an
/// update touched (`None` for classes absent from the batch).
#[derive(Debug, Clone, PartialEq)]
pub struct CenterUpdate {
    pub accumulators: Vec<Option<Vec<f64>>>,
    pub counts: Vec<usize>,
}

/// `num_classes` vectors drawn uniformly on the unit sphere in `dim`
/// dimensions.
pub fn init_centers(num_classes: usize, dim: usize, seed: u64) -> Result<ClassCenters> {
    if num_classes < 2 || dim < 2 {
        return Err(Error::invalid(
            "vqcl::init_centers",
            format!("need at least 2 classes and 2 dimensions, got {num_classes} and {dim}"),
        ));
    }
    let mut rng = seed::rng(seed);
    let vectors = (0..num_classes)
        .map(|_| loop {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect();
    Ok(ClassCenters { vectors, iteration: 0 })
}

/// `α·previous + (1 − α)·batch_mean`, without renormalisation.
pub fn momentum_blend(previous: &[f64], batch_mean: &[f64], alpha: f64) -> Vec<f64> {
    previous.iter().zip(batch_mean).map(|(c, m)| alpha * c + (1.0 - alpha) * m).collect()
}

impl ClassCenters {
    /// Builds centres from explicit vectors, normalising each.
    pub fn from_vectors(vectors: Vec<Vec<f64>>, iteration: u64) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.len() < 2 || dim < 2 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("vqcl::ClassCenters::from_vectors", "need ≥2 vectors of equal dimension ≥2"));
        }
        let vectors = vectors
            .into_iter()
            .map(|v| {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(NORM_EPS);
                v.into_iter().map(|x| x / n).collect()
            })
            .collect();
        Ok(ClassCenters { vectors, iteration })
    }

    /// Centres taken verbatim, e.g. when restoring a checkpoint.
    pub fn from_raw(vectors: Vec<Vec<f64>>, iteration: u64) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        if vectors.len() < 2 || dim < 2 || vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::invalid("vqcl::ClassCenters::from_raw", "need ≥2 vectors of equal dimension ≥2"));
        }
        Ok(ClassCenters { vectors, iteration })
    }

    pub fn num_classes(&self) -> usize {
        self.vectors.len()
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }

    pub fn center(&self, class: usize) -> &[f64] {
        &self.vectors[class]
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    /// Number of updates applied so far (`K`).
    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    /// Momentum update from the batch embedding field `features`
    /// (`(n, h, w, D)`, already unit-normalised) and aligned flat labels.
    ///
    /// Each class present in the batch moves to the renormalised blend of its
    /// previous centre and the batch mean of its pixel features; absent
    /// classes are left untouched. The iteration counter always advances.
    pub fn update(&mut self, features: &Tensor, labels: &[u8], alpha: f64) -> Result<CenterUpdate> {
        const OP: &str = "vqcl::update_centers";
        if features.pixels() != labels.len() {
            return Err(Error::shape(OP, format!("{} feature pixels vs {} labels", features.pixels(), labels.len())));
        }
        if features.channels() != self.dim() {
            return Err(Error::shape(OP, format!("feature dim {} vs centre dim {}", features.channels(), self.dim())));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::invalid(OP, format!("alpha {alpha} outside [0, 1]")));
        }
        let (l, d) = (self.num_classes(), self.dim());
        let mut sums = vec![vec![0.0; d]; l];
        let mut counts = vec![0usize; l];
        for (p, &y) in labels.iter().enumerate() {
            let y = y as usize;
            if y >= l {
                return Err(Error::invalid(OP, format!("label {y} outside 0..{l}")));
            }
            counts[y] += 1;
            for (s, v) in sums[y].iter_mut().zip(features.pixel(p)) {
                *s += v;
            }
        }
        let mut accumulators = vec![None; l];
        for class in 0..l {
            if counts[class] == 0 {
                continue;
            }
            let mean: Vec<f64> = sums[class].iter().map(|s| s / counts[class] as f64).collect();
            let acc = momentum_blend(&self.vectors[class], &mean, alpha);
            let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > NORM_EPS {
                self.vectors[class] = acc.iter().map(|x| x / norm).collect();
            }
            accumulators[class] = Some(acc);
        }
        self.iteration += 1;
        Ok(CenterUpdate { accumulators, counts })
    }
}
