use std::collections::VecDeque;

use rand::seq::index;

use crate::error::{Error, Result};
use crate::seed;
use crate::tensor::Tensor;

/// A queued unit-norm feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueEntry {
    pub vector: Vec<f64>,
    /// Iteration at which the entry was enqueued.
    pub iteration: u64,
    /// Flat pixel index into the embedding field of the iteration that
    /// produced it, while that iteration is current. `None` once detached.
    pub origin: Option<usize>,
}

impl QueueEntry {
    pub fn is_detached(&self) -> bool {
        self.origin.is_none()
    }
}

/// Per-class FIFO of feature vectors with a fixed per-class capacity.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureQueue {
    capacity: usize,
    classes: Vec<VecDeque<QueueEntry>>,
}

impl FeatureQueue {
    pub fn new(num_classes: usize, capacity: usize) -> Self {
        FeatureQueue { capacity, classes: vec![VecDeque::with_capacity(capacity); num_classes] }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class(&self, class: usize) -> &VecDeque<QueueEntry> {
        &self.classes[class]
    }

    pub fn len(&self) -> usize {
        self.classes.iter().map(VecDeque::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn clear(&mut self) {
        self.classes.iter_mut().for_each(VecDeque::clear);
    }

    /// Appends one entry, evicting the oldest entries beyond capacity.
    pub fn push(&mut self, class: usize, entry: QueueEntry) {
        let q = &mut self.classes[class];
        q.push_back(entry);
        while q.len() > self.capacity {
            q.pop_front();
        }
    }

    /// Turns every entry from before `iteration` into a constant.
    pub fn detach_before(&mut self, iteration: u64) {
        for e in self.classes.iter_mut().flatten() {
            if e.iteration < iteration {
                e.origin = None;
            }
        }
    }

    /// Samples up to `per_class` pixels of each class uniformly without
    /// replacement from the (unit-norm) embedding field and enqueues them as
    /// gradient-carrying entries of `iteration`. Older entries are detached
    /// first. Returns the number enqueued per class.
    pub fn enqueue(
        &mut self,
        features: &Tensor,
        labels: &[u8],
        per_class: usize,
        seed: u64,
        iteration: u64,
    ) -> Result<Vec<usize>> {
        const OP: &str = "vqcl::enqueue";
        if features.pixels() != labels.len() {
            return Err(Error::shape(OP, format!("{} feature pixels vs {} labels", features.pixels(), labels.len())));
        }
        self.detach_before(iteration);
        let l = self.num_classes();
        let mut pools: Vec<Vec<usize>> = vec![Vec::new(); l];
        for (p, &y) in labels.iter().enumerate() {
            match pools.get_mut(y as usize) {
                Some(pool) => pool.push(p),
                None => return Err(Error::invalid(OP, format!("label {y} outside 0..{l}"))),
            }
        }
        let mut rng = seed::rng(seed);
        let mut added = vec![0; l];
        for (class, pool) in pools.iter().enumerate() {
            let take = per_class.min(pool.len());
            for i in index::sample(&mut rng, pool.len(), take) {
                let p = pool[i];
                self.push(class, QueueEntry { vector: features.pixel(p).to_vec(), iteration, origin: Some(p) });
            }
            added[class] = take;
        }
        Ok(added)
    }
}
