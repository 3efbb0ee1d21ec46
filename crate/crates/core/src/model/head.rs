use rand::Rng;

use crate::nn::{join, Conv2d, ConvBnRelu, Depthwise1x1, Dropout, Gelu, Kind, Mode, Param, Visit};
use crate::tensor::Tensor;

/// Two pointwise Conv → BN → ReLU blocks reducing encoder channels to the
/// embedding dimension at unchanged spatial size.
#[derive(Debug, Clone)]
pub struct Projection {
    first: ConvBnRelu,
    second: ConvBnRelu,
}

impl Projection {
    pub fn new(enc_channels: usize, embed_dim: usize, rng: &mut impl Rng) -> Self {
        Projection {
            first: ConvBnRelu::new(enc_channels, embed_dim, 1, 1, 1, rng),
            second: ConvBnRelu::new(embed_dim, embed_dim, 1, 1, 1, rng),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let h = self.first.forward(x, mode);
        self.second.forward(&h, mode)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.second.backward(dy);
        self.first.backward(&g)
    }
}

impl Visit for Projection {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        self.first.visit(&join(prefix, "first"), f);
        self.second.visit(&join(prefix, "second"), f);
    }
}

/// `GELU(Dropout(PW(DW(x)) + Linear(x)))`: a depthwise-separable pointwise
/// path with a linear skip.
#[derive(Debug, Clone)]
pub struct MlpEmbed {
    depthwise: Depthwise1x1,
    pointwise: Conv2d,
    linear: Conv2d,
    dropout: Dropout,
    gelu: Gelu,
}

impl MlpEmbed {
    pub fn new(dim: usize, dropout: f64, rng: &mut impl Rng) -> Self {
        MlpEmbed {
            depthwise: Depthwise1x1::new(dim, rng),
            pointwise: Conv2d::new(dim, dim, 1, 1, 1, true, rng),
            linear: Conv2d::new(dim, dim, 1, 1, 1, true, rng),
            dropout: Dropout::new(dropout),
            gelu: Gelu::default(),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, dropout_seed: u64) -> Tensor {
        let separable = self.pointwise.forward(&self.depthwise.forward(x, mode), mode);
        let mut h = self.linear.forward(x, mode);
        h.add_assign(&separable);
        let h = self.dropout.forward(&h, mode, dropout_seed);
        self.gelu.forward(&h, mode)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let g = self.gelu.backward(dy);
        let g = self.dropout.backward(&g);
        let mut dx = self.depthwise.backward(&self.pointwise.backward(&g));
        dx.add_assign(&self.linear.backward(&g));
        dx
    }
}

impl Visit for MlpEmbed {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        self.depthwise.visit(&join(prefix, "depthwise"), f);
        self.pointwise.visit(&join(prefix, "pointwise"), f);
        self.linear.visit(&join(prefix, "linear"), f);
    }
}

/// Smallest norm divided by when normalising; zero vectors stay zero.
pub const NORM_EPS: f64 = 1e-12;

/// Scales every pixel vector to unit L2 norm. Returns the normalised tensor
/// and the per-pixel norms needed by [`l2_normalize_backward`].
pub fn l2_normalize(x: &Tensor) -> (Tensor, Vec<f64>) {
    let c = x.channels();
    let mut y = x.clone();
    let mut norms = Vec::with_capacity(x.pixels());
    for px in y.data_mut().chunks_mut(c) {
        let norm = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d = norm.max(NORM_EPS);
        px.iter_mut().for_each(|v| *v /= d);
        norms.push(norm);
    }
    (y, norms)
}

/// Gradient through `y = x / ‖x‖`: `dx = (dy − y (y·dy)) / ‖x‖`.
pub fn l2_normalize_backward(y: &Tensor, norms: &[f64], dy: &Tensor) -> Tensor {
    let c = y.channels();
    let mut dx = dy.clone();
    for (p, g) in dx.data_mut().chunks_mut(c).enumerate() {
        let yp = y.pixel(p);
        let norm = norms[p];
        if norm < NORM_EPS {
            g.iter_mut().for_each(|v| *v /= NORM_EPS);
            continue;
        }
        let proj: f64 = yp.iter().zip(g.iter()).map(|(a, b)| a * b).sum();
        for (gv, yv) in g.iter_mut().zip(yp) {
            *gv = (*gv - yv * proj) / norm;
        }
    }
    dx
}
