use super::{join, Kind, Mode, Param, Visit};
use crate::tensor::Tensor;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Per-channel batch normalisation over (n, h, w).
///
/// Training mode normalises with the batch statistics and updates the
/// running estimates (`running = (1 − m)·running + m·batch`, unbiased
/// variance); evaluation mode uses the running estimates.
#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Param,
    pub running_var: Param,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Tensor,
    inv_std: Vec<f64>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Param::filled(&[channels], 1.0),
            beta: Param::filled(&[channels], 0.0),
            running_mean: Param::filled(&[channels], 0.0),
            running_var: Param::filled(&[channels], 1.0),
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let c = self.gamma.value.len();
        assert_eq!(x.channels(), c, "batchnorm channels");
        let m = x.pixels();
        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                for px in x.data().chunks(c) {
                    for (a, v) in mean.iter_mut().zip(px) {
                        *a += v;
                    }
                }
                mean.iter_mut().for_each(|a| *a /= m as f64);
                let mut var = vec![0.0; c];
                for px in x.data().chunks(c) {
                    for ((a, v), mu) in var.iter_mut().zip(px).zip(&mean) {
                        *a += (v - mu) * (v - mu);
                    }
                }
                var.iter_mut().for_each(|a| *a /= m as f64);
                let unbias = if m > 1 { m as f64 / (m - 1) as f64 } else { 1.0 };
                for ch in 0..c {
                    let rm = &mut self.running_mean.value[ch];
                    *rm = (1.0 - BN_MOMENTUM) * *rm + BN_MOMENTUM * mean[ch];
                    let rv = &mut self.running_var.value[ch];
                    *rv = (1.0 - BN_MOMENTUM) * *rv + BN_MOMENTUM * var[ch] * unbias;
                }
                (mean, var)
            }
            Mode::Eval => (self.running_mean.value.clone(), self.running_var.value.clone()),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
        let mut xhat = x.clone();
        for px in xhat.data_mut().chunks_mut(c) {
            for ch in 0..c {
                px[ch] = (px[ch] - mean[ch]) * inv_std[ch];
            }
        }
        let mut y = xhat.clone();
        for px in y.data_mut().chunks_mut(c) {
            for ch in 0..c {
                px[ch] = px[ch] * self.gamma.value[ch] + self.beta.value[ch];
            }
        }
        self.cache = (mode == Mode::Train).then_some(BnCache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let BnCache { xhat, inv_std } = self.cache.take().expect("batchnorm backward without a training forward");
        let c = self.gamma.value.len();
        let m = dy.pixels() as f64;
        let mut sum_dy = vec![0.0; c];
        let mut sum_dy_xhat = vec![0.0; c];
        for (g, xh) in dy.data().chunks(c).zip(xhat.data().chunks(c)) {
            for ch in 0..c {
                sum_dy[ch] += g[ch];
                sum_dy_xhat[ch] += g[ch] * xh[ch];
            }
        }
        for ch in 0..c {
            self.gamma.grad[ch] += sum_dy_xhat[ch];
            self.beta.grad[ch] += sum_dy[ch];
        }
        let mut dx = dy.clone();
        for (g, xh) in dx.data_mut().chunks_mut(c).zip(xhat.data().chunks(c)) {
            for ch in 0..c {
                let scale = self.gamma.value[ch] * inv_std[ch] / m;
                g[ch] = scale * (m * g[ch] - sum_dy[ch] - xh[ch] * sum_dy_xhat[ch]);
            }
        }
        dx
    }
}

impl Visit for BatchNorm2d {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
        f(&join(prefix, "gamma"), &mut self.gamma, Kind::Learnable);
        f(&join(prefix, "beta"), &mut self.beta, Kind::Learnable);
        f(&join(prefix, "running_mean"), &mut self.running_mean, Kind::Buffer);
        f(&join(prefix, "running_var"), &mut self.running_var, Kind::Buffer);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn training_output_is_standardised() {
        let x = Tensor::from_vec([2, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]).unwrap();
        let mut bn = BatchNorm2d::new(1);
        let y = bn.forward(&x, Mode::Train);
        assert!(y.sum().abs() < 1e-12);
        let var = y.data().iter().map(|v| v * v).sum::<f64>() / 8.0;
        assert!((var - 5.25 / (5.25 + BN_EPS)).abs() < 1e-9);
        // running stats moved 10% of the way
        assert!((bn.running_mean.value[0] - 0.45).abs() < 1e-12);
        assert!((bn.running_var.value[0] - (0.9 + 0.1 * 6.0)).abs() < 1e-12);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let x = Tensor::from_vec([1, 2, 3, 2], (0..12).map(|i| ((i * 7 % 5) as f64 * 0.3).sin()).collect()).unwrap();
        let r = Tensor::from_vec([1, 2, 3, 2], (0..12).map(|i| (i as f64 * 0.77).cos()).collect()).unwrap();
        let mut bn = BatchNorm2d::new(2);
        bn.gamma.value = vec![1.3, 0.7];
        bn.forward(&x, Mode::Train);
        let dx = bn.backward(&r);
        let eps = 1e-6;
        for i in 0..12 {
            let mut xp = x.clone();
            xp.data_mut()[i] += eps;
            let mut xm = x.clone();
            xm.data_mut()[i] -= eps;
            let f = |t: &Tensor| bn.clone().forward(t, Mode::Train).dot(&r);
            let fd = (f(&xp) - f(&xm)) / (2.0 * eps);
            assert!((fd - dx.data()[i]).abs() < 1e-7, "{fd} vs {}", dx.data()[i]);
        }
    }
}
