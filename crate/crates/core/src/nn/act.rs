use rand::Rng;

use super::Mode;
use crate::seed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Default)]
pub struct Relu {
    output: Option<Tensor>,
}

impl Relu {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        let y = x.map(|v| v.max(0.0));
        self.output = (mode == Mode::Train).then(|| y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let y = self.output.take().expect("relu backward without a training forward");
        let mut dx = dy.clone();
        for (g, o) in dx.data_mut().iter_mut().zip(y.data()) {
            if *o <= 0.0 {
                *g = 0.0;
            }
        }
        dx
    }
}

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Exact (erf-based) GELU.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

fn gelu_grad(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2)) + x * FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

#[derive(Debug, Clone, Default)]
pub struct Gelu {
    input: Option<Tensor>,
}

impl Gelu {
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Tensor {
        self.input = (mode == Mode::Train).then(|| x.clone());
        x.map(gelu)
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let x = self.input.take().expect("gelu backward without a training forward");
        let mut dx = dy.clone();
        for (g, v) in dx.data_mut().iter_mut().zip(x.data()) {
            *g *= gelu_grad(*v);
        }
        dx
    }
}

/// Inverted dropout; the mask comes from the seed passed per call so that a
/// training step is reproducible.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    mask: Option<Vec<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout probability {p}");
        Dropout { p, mask: None }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode, mask_seed: u64) -> Tensor {
        if mode == Mode::Eval || self.p == 0.0 {
            self.mask = (mode == Mode::Train).then(|| vec![1.0; x.data().len()]);
            return x.clone();
        }
        let mut rng = seed::rng(mask_seed);
        let keep = 1.0 / (1.0 - self.p);
        let mask: Vec<f64> = (0..x.data().len()).map(|_| if rng.gen::<f64>() < self.p { 0.0 } else { keep }).collect();
        let mut y = x.clone();
        for (v, m) in y.data_mut().iter_mut().zip(&mask) {
            *v *= m;
        }
        self.mask = Some(mask);
        y
    }

    pub fn backward(&mut self, dy: &Tensor) -> Tensor {
        let mask = self.mask.take().expect("dropout backward without a training forward");
        let mut dx = dy.clone();
        for (g, m) in dx.data_mut().iter_mut().zip(&mask) {
            *g *= m;
        }
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gelu_reference_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(1.0) - 0.841_344_746_068_542_9).abs() < 1e-12);
        assert!((gelu(-1.0) + 0.158_655_253_931_457_05).abs() < 1e-12);
        for x in [-2.0, -0.3, 0.0, 0.4, 1.7] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn dropout_is_identity_in_eval_and_seeded_in_train() {
        let x = Tensor::from_vec([1, 4, 4, 2], vec![1.0; 32]).unwrap();
        let mut d = Dropout::new(0.5);
        assert_eq!(d.forward(&x, Mode::Eval, 1), x);
        let a = d.forward(&x, Mode::Train, 7);
        let b = d.forward(&x, Mode::Train, 7);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }
}
