use super::Mode;
use crate::tensor::Tensor;

/// Interpolation taps along one axis: `(i0, i1, weight_of_i1)` per output.
fn taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

/// Bilinear upsampling by an integer factor (half-pixel centres, edges
/// clamped).
#[derive(Debug, Clone)]
pub struct Upsample {
    pub factor: usize,
    in_shape: Option<[usize; 4]>,
}

impl Upsample {
    pub fn new(factor: usize) -> Self {
        assert!(factor >= 1);
        Upsample { factor, in_shape: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, h, w, c] = x.shape();
        self.in_shape = (mode == Mode::Train).then_some(x.shape());
        if self.factor == 1 {
            return x.clone();
        }
        let (ho, wo) = (h * self.factor, w * self.factor);
        let (ty, tx) = (taps(h, ho), taps(w, wo));
        let mut out = Tensor::zeros([n, ho, wo, c]);
        let src = x.data();
        let dst = out.data_mut();
        for b in 0..n {
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let o = ((b * ho + oy) * wo + ox) * c;
                    let corners = [
                        (y0, x0, (1.0 - ly) * (1.0 - lx)),
                        (y0, x1, (1.0 - ly) * lx),
                        (y1, x0, ly * (1.0 - lx)),
                        (y1, x1, ly * lx),
                    ];
                    for (yy, xx, wgt) in corners {
                        if wgt == 0.0 {
                            continue;
                        }
                        let s = ((b * h + yy) * w + xx) * c;
                        for ch in 0..c {
                            dst[o + ch] += wgt * src[s + ch];
                        }
                    }
                }
            }
        }
        out
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let in_shape = self.in_shape.take().expect("upsample backward without a training forward");
        if self.factor == 1 {
            return dy.clone();
        }
        let [n, h, w, c] = in_shape;
        let (ho, wo) = (dy.height(), dy.width());
        let (ty, tx) = (taps(h, ho), taps(w, wo));
        let mut dx = Tensor::zeros(in_shape);
        let src = dy.data();
        let dst = dx.data_mut();
        for b in 0..n {
            for (oy, &(y0, y1, ly)) in ty.iter().enumerate() {
                for (ox, &(x0, x1, lx)) in tx.iter().enumerate() {
                    let o = ((b * ho + oy) * wo + ox) * c;
                    let corners = [
                        (y0, x0, (1.0 - ly) * (1.0 - lx)),
                        (y0, x1, (1.0 - ly) * lx),
                        (y1, x0, ly * (1.0 - lx)),
                        (y1, x1, ly * lx),
                    ];
                    for (yy, xx, wgt) in corners {
                        if wgt == 0.0 {
                            continue;
                        }
                        let s = ((b * h + yy) * w + xx) * c;
                        for ch in 0..c {
                            dst[s + ch] += wgt * src[o + ch];
                        }
                    }
                }
            }
        }
        dx
    }
}

/// Global average pooling to 1×1 followed by broadcasting back to the input
/// size, as used by the image-level context branch.
#[derive(Debug, Clone, Default)]
pub struct GlobalPool {
    in_shape: Option<[usize; 4]>,
}

impl GlobalPool {
    pub fn pool(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let [n, h, w, c] = x.shape();
        self.in_shape = (mode == Mode::Train).then_some(x.shape());
        let mut out = Tensor::zeros([n, 1, 1, c]);
        let per = h * w;
        for b in 0..n {
            for p in 0..per {
                let px = x.pixel(b * per + p);
                for (o, v) in out.pixel_mut(b).iter_mut().zip(px) {
                    *o += v / per as f64;
                }
            }
        }
        out
    }

    pub fn pool_backward(&mut self, dy: &Tensor) -> Tensor {
        let shape = self.in_shape.take().expect("pool backward without a training forward");
        let [n, h, w, _] = shape;
        let per = h * w;
        let mut dx = Tensor::zeros(shape);
        for b in 0..n {
            let g: Vec<f64> = dy.pixel(b).iter().map(|v| v / per as f64).collect();
            for p in 0..per {
                dx.pixel_mut(b * per + p).copy_from_slice(&g);
            }
        }
        dx
    }

    pub fn broadcast(x: &Tensor, h: usize, w: usize) -> Tensor {
        let [n, _, _, c] = x.shape();
        let mut out = Tensor::zeros([n, h, w, c]);
        for b in 0..n {
            for p in 0..h * w {
                out.pixel_mut(b * h * w + p).copy_from_slice(x.pixel(b));
            }
        }
        out
    }

    pub fn broadcast_backward(dy: &Tensor) -> Tensor {
        let [n, h, w, c] = dy.shape();
        let mut out = Tensor::zeros([n, 1, 1, c]);
        for b in 0..n {
            for p in 0..h * w {
                let g = dy.pixel(b * h * w + p).to_vec();
                for (o, v) in out.pixel_mut(b).iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        out
    }
}
