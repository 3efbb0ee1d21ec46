use rand::Rng;

use super::{gemm, join, Kind, Mode, Param, Visit};
use crate::tensor::Tensor;

/// 2-D convolution over NHWC tensors, "same" padding for odd kernels.
///
/// Weights are stored as a `(k·k·cin) × cout` matrix so that the forward
/// pass is one GEMM against the im2col matrix.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub weight: Param,
    pub bias: Option<Param>,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Vec<f64>,
    in_shape: [usize; 4],
}

impl Conv2d {
    pub fn new(
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        bias: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(kernel % 2 == 1 && stride >= 1 && dilation >= 1);
        let fan_in = kernel * kernel * cin;
        Conv2d {
            cin,
            cout,
            kernel,
            stride,
            dilation,
            weight: Param::kaiming(&[kernel, kernel, cin, cout], fan_in, rng),
            bias: bias.then(|| Param::filled(&[cout], 0.0)),
            cache: None,
        }
    }

    fn padding(&self) -> usize {
        self.dilation * (self.kernel - 1) / 2
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        let pad = self.padding();
        let span = self.dilation * (self.kernel - 1);
        ((h + 2 * pad - span - 1) / self.stride + 1, (w + 2 * pad - span - 1) / self.stride + 1)
    }

    fn im2col(&self, x: &Tensor, ho: usize, wo: usize) -> Vec<f64> {
        let [n, h, w, c] = x.shape();
        let k = self.kernel;
        let kk = k * k * c;
        let pad = self.padding() as isize;
        let mut cols = vec![0.0; n * ho * wo * kk];
        let src = x.data();
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = ((b * ho + oy) * wo + ox) * kk;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky * self.dilation) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx * self.dilation) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let s = ((b * h + iy as usize) * w + ix as usize) * c;
                            let d = row + (ky * k + kx) * c;
                            cols[d..d + c].copy_from_slice(&src[s..s + c]);
                        }
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, dcols: &[f64], in_shape: [usize; 4], ho: usize, wo: usize) -> Tensor {
        let [n, h, w, c] = in_shape;
        let k = self.kernel;
        let kk = k * k * c;
        let pad = self.padding() as isize;
        let mut dx = Tensor::zeros(in_shape);
        let dst = dx.data_mut();
        for b in 0..n {
            for oy in 0..ho {
                for ox in 0..wo {
                    let row = ((b * ho + oy) * wo + ox) * kk;
                    for ky in 0..k {
                        let iy = (oy * self.stride + ky * self.dilation) as isize - pad;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * self.stride + kx * self.dilation) as isize - pad;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let d = ((b * h + iy as usize) * w + ix as usize) * c;
                            let s = row + (ky * k + kx) * c;
                            for (o, g) in dst[d..d + c].iter_mut().zip(&dcols[s..s + c]) {
                                *o += g;
                            }
                        }
                    }
                }
            }
        }
        dx
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, h, w, c] = x.shape();
        assert_eq!(c, self.cin, "conv input channels");
        let (ho, wo) = self.output_hw(h, w);
        let m = n * ho * wo;
        let kk = self.kernel * self.kernel * self.cin;
        let cols = if self.is_pointwise() { x.data().to_vec() } else { self.im2col(x, ho, wo) };
        let mut out = vec![0.0; m * self.cout];
        if let Some(bias) = &self.bias {
            for row in out.chunks_mut(self.cout) {
                row.copy_from_slice(&bias.value);
            }
        }
        gemm(m, kk, self.cout, &cols, false, &self.weight.value, false, 1.0, &mut out);
        self.cache = match mode {
            Mode::Train => Some(ConvCache { cols, in_shape: x.shape() }),
            Mode::Eval => None,
        };
        Tensor::from_vec([n, ho, wo, self.cout], out).expect("conv output shape")
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let cache = self.cache.take().expect("conv backward without a training forward");
        let [n, ho, wo, cout] = dy.shape();
        assert_eq!(cout, self.cout);
        let m = n * ho * wo;
        let kk = self.kernel * self.kernel * self.cin;
        gemm(kk, m, cout, &cache.cols, true, dy.data(), false, 1.0, &mut self.weight.grad);
        if let Some(bias) = &mut self.bias {
            for row in dy.data().chunks(cout) {
                for (g, v) in bias.grad.iter_mut().zip(row) {
                    *g += v;
                }
            }
        }
        let mut dcols = vec![0.0; m * kk];
        gemm(m, cout, kk, dy.data(), false, &self.weight.value, true, 0.0, &mut dcols);
        if self.is_pointwise() {
            Tensor::from_vec(cache.in_shape, dcols).expect("pointwise grad shape")
        } else {
            self.col2im(&dcols, cache.in_shape, ho, wo)
        }
    }
}

impl Visit for Conv2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        f(&join(prefix, "weight"), &mut self.weight, Kind::Learnable);
        if let Some(b) = &mut self.bias {
            f(&join(prefix, "bias"), b, Kind::Learnable);
        }
    }
}

/// Depthwise 1×1 convolution: an independent scale and bias per channel.
#[derive(Debug, Clone)]
pub struct Depthwise1x1 {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Depthwise1x1 {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        Depthwise1x1 {
            weight: Param::uniform(&[channels], 1.0, rng),
            bias: Param::filled(&[channels], 0.0),
            input: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let c = self.weight.value.len();
        assert_eq!(x.channels(), c, "depthwise channels");
        let mut y = x.clone();
        for px in y.data_mut().chunks_mut(c) {
            for ((v, w), b) in px.iter_mut().zip(&self.weight.value).zip(&self.bias.value) {
                *v = *v * w + b;
            }
        }
        self.input = (mode == Mode::Train).then(|| x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("depthwise backward without a training forward");
        let c = self.weight.value.len();
        let mut dx = dy.clone();
        for (p, g) in dx.data_mut().chunks_mut(c).enumerate() {
            let xp = x.pixel(p);
            for ch in 0..c {
                self.weight.grad[ch] += g[ch] * xp[ch];
                self.bias.grad[ch] += g[ch];
                g[ch] *= self.weight.value[ch];
            }
        }
        dx
    }
}

impl Visit for Depthwise1x1 {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        f(&join(prefix, "weight"), &mut self.weight, Kind::Learnable);
        f(&join(prefix, "bias"), &mut self.bias, Kind::Learnable);
    }
}
