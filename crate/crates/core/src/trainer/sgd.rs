use crate::nn::{Kind, Visit};

/// SGD with momentum and L2 weight decay:
/// `g ← ∇ + wd·p;  v ← μ·v + g;  p ← p − lr·v`.
#[derive(Debug, Clone, Default)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(momentum: f64, weight_decay: f64) -> Self {
        Sgd { momentum, weight_decay, velocity: Vec::new() }
    }

    pub fn step(&mut self, model: &mut dyn Visit, lr: f64) {
        let (mu, wd) = (self.momentum, self.weight_decay);
        let velocity = &mut self.velocity;
        let mut i = 0;
        model.visit("", &mut |_, p, kind| {
            if kind != Kind::Learnable {
                return;
            }
            if velocity.len() <= i {
                velocity.push(vec![0.0; p.value.len()]);
            }
            let v = &mut velocity[i];
            for ((w, g), vel) in p.value.iter_mut().zip(&p.grad).zip(v.iter_mut()) {
                *vel = mu * *vel + g + wd * *w;
                *w -= lr * *vel;
            }
            i += 1;
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Param;

    struct One(Param);

    impl Visit for One {
        fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param, Kind)) {
            f(prefix, &mut self.0, Kind::Learnable);
        }
    }

    #[test]
    fn matches_hand_computed_steps() {
        let mut m = One(Param::filled(&[1], 1.0));
        let mut opt = Sgd::new(0.9, 0.1);
        m.0.grad[0] = 0.5;
        opt.step(&mut m, 0.1);
        // v = 0.5 + 0.1 = 0.6, p = 1 − 0.06
        assert!((m.0.value[0] - 0.94).abs() < 1e-15);
        opt.step(&mut m, 0.1);
        // v = 0.54 + 0.5 + 0.094 = 1.134
        assert!((m.0.value[0] - (0.94 - 0.1134)).abs() < 1e-15);
    }
}
