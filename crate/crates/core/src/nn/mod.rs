//! Minimal layer library with hand-written backward passes.
//!
//! Layers cache whatever their backward pass needs during a training-mode
//! forward call; `backward` consumes the cache, accumulates parameter
//! gradients and returns the gradient with respect to the layer input.
//! Evaluation-mode forwards keep no cache.

mod act;
mod conv;
mod gemm;
mod norm;
mod resample;

pub use act::{gelu, Dropout, Gelu, Relu};
pub use conv::{Conv2d, Depthwise1x1};
pub use gemm::gemm;
pub use norm::BatchNorm2d;
pub use resample::{GlobalPool, Upsample};

use rand::Rng;
use rand_distr::{Distribution, Normal};

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A named tensor of learnable values (or a non-learnable buffer such as a
/// running mean) with its gradient accumulator.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn filled(shape: &[usize], v: f64) -> Self {
        let n = shape.iter().product();
        Param { shape: shape.to_vec(), value: vec![v; n], grad: vec![0.0; n] }
    }

    pub fn kaiming(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / fan_in as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut p = Param::filled(shape, 0.0);
        for v in &mut p.value {
            *v = normal.sample(rng);
        }
        p
    }

    pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Self {
        let mut p = Param::filled(shape, 0.0);
        for v in &mut p.value {
            *v = rng.gen_range(-bound..bound);
        }
        p
    }

    pub fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Whether a visited tensor is optimised or only persisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Learnable,
    Buffer,
}

/// Depth-first traversal of named tensors in a fixed order.
pub trait Visit {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Conv → BatchNorm → ReLU, the basic block of every stage.
#[derive(Debug, Clone)]
pub struct ConvBnRelu {
    pub conv: Conv2d,
    pub bn: BatchNorm2d,
    pub relu: Relu,
}

impl ConvBnRelu {
    pub fn new(cin: usize, cout: usize, kernel: usize, stride: usize, dilation: usize, rng: &mut impl Rng) -> Self {
        ConvBnRelu {
            conv: Conv2d::new(cin, cout, kernel, stride, dilation, false, rng),
            bn: BatchNorm2d::new(cout),
            relu: Relu::default(),
        }
    }

    pub fn forward(&mut self, x: &crate::Tensor, mode: Mode) -> crate::Tensor {
        let y = self.conv.forward(x, mode);
        let y = self.bn.forward(&y, mode);
        self.relu.forward(&y, mode)
    }

    pub fn backward(&mut self, dy: &crate::Tensor) -> crate::Tensor {
        let g = self.relu.backward(dy);
        let g = self.bn.backward(&g);
        self.conv.backward(&g)
    }
}

impl Visit for ConvBnRelu {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }
}
