mod common;

use std::collections::BTreeSet;

use common::{ce_oracle, dice_oracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vcnet_core::losses::{
    ce_loss, dice_loss, dice_loss_logits, ppw_beta, ppw_weights, rw_weights, softmax, ClassWeights, WeightTag,
};
use vcnet_core::Tensor;

fn random_logits(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap()
}

fn central_diff(x: &Tensor, i: usize, eps: f64, f: &dyn Fn(&Tensor) -> f64) -> f64 {
    let mut p = x.clone();
    p.data_mut()[i] += eps;
    let mut m = x.clone();
    m.data_mut()[i] -= eps;
    (f(&p) - f(&m)) / (2.0 * eps)
}

fn max_rel_err(analytic: &Tensor, x: &Tensor, f: &dyn Fn(&Tensor) -> f64) -> f64 {
    (0..x.data().len())
        .map(|i| {
            let n = central_diff(x, i, 1e-6, f);
            let a = analytic.data()[i];
            (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
        })
        .fold(0.0, f64::max)
}

#[test]
fn ce_matches_oracle_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for trial in 0..10 {
        let z = random_logits([1, 4, 4, 3], &mut rng);
        let labels: Vec<u8> = (0..16).map(|_| rng.gen_range(0..3)).collect();
        let w = if trial % 2 == 0 {
            ClassWeights::unit(3)
        } else {
            rw_weights(&[rng.gen_range(1..1000), rng.gen_range(1..1000), rng.gen_range(1..1000)]).unwrap()
        };
        let out = ce_loss(&z, &labels, &w).unwrap();
        assert!((out.value - ce_oracle(&z, &labels, w.omega())).abs() < 1e-12);
        let err = max_rel_err(&out.grad, &z, &|t| ce_oracle(t, &labels, w.omega()));
        assert!(err < 1e-5, "relative error {err}");
    }
}

#[test]
fn unit_weights_equal_unweighted_ce() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z = random_logits([2, 3, 3, 3], &mut rng);
    let labels: Vec<u8> = (0..18).map(|_| rng.gen_range(0..3)).collect();
    let a = ce_loss(&z, &labels, &ClassWeights::unit(3)).unwrap();
    assert!((a.value - ce_oracle(&z, &labels, &[1.0; 3])).abs() < 1e-12);
}

#[test]
fn dice_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let z = random_logits([1, 4, 4, 3], &mut rng);
        let labels: Vec<u8> = (0..16).map(|_| rng.gen_range(0..3)).collect();
        let probs = softmax(&z);
        let d = dice_loss(&probs, &labels).unwrap();
        assert!((d.value - dice_oracle(&probs, &labels)).abs() < 1e-12);
        assert!(max_rel_err(&d.grad, &probs, &|t| dice_oracle(t, &labels)) < 1e-5);
        let dz = dice_loss_logits(&z, &labels).unwrap();
        let err = max_rel_err(&dz.grad, &z, &|t| dice_oracle(&softmax(t), &labels));
        assert!(err < 1e-4, "relative error {err}");
        assert!((0.0..=1.0).contains(&d.value));
    }
}

#[test]
fn one_hot_dice_equals_set_dice_on_all_binary_masks() {
    let set = |bits: u32, v: bool| -> BTreeSet<usize> { (0..9).filter(|&i| ((bits >> i) & 1 == 1) == v).collect() };
    let set_dice = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
        (2.0 * a.intersection(b).count() as f64 + 1e-6) / (a.len() as f64 + b.len() as f64 + 1e-6)
    };
    for truth in 0u32..512 {
        let labels: Vec<u8> = (0..9).map(|i| ((truth >> i) & 1) as u8).collect();
        for pred in 0u32..512 {
            let data: Vec<f64> =
                (0..9).flat_map(|i| if (pred >> i) & 1 == 1 { [0.0, 1.0] } else { [1.0, 0.0] }).collect();
            let probs = Tensor::from_vec([1, 3, 3, 2], data).unwrap();
            let got = dice_loss(&probs, &labels).unwrap().value;
            let expected = 1.0
                - (set_dice(&set(pred, true), &set(truth, true)) + set_dice(&set(pred, false), &set(truth, false)))
                    / 2.0;
            assert!((got - expected).abs() < 1e-12, "truth {truth:09b} pred {pred:09b}");
        }
    }
}

#[test]
fn beta_schedule_is_exact_and_monotone() {
    assert_eq!(ppw_beta(99, 100, 200).unwrap(), 0.0);
    assert_eq!(ppw_beta(100, 100, 200).unwrap(), 0.0);
    assert_eq!(ppw_beta(150, 100, 200).unwrap(), 0.25);
    assert_eq!(ppw_beta(200, 100, 200).unwrap(), 1.0);
    assert_eq!(ppw_beta(201, 100, 200).unwrap(), 1.0);
    let betas: Vec<f64> = (0..=300).map(|e| ppw_beta(e, 100, 200).unwrap()).collect();
    assert!(betas.windows(2).all(|w| w[0] <= w[1]));
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

proptest! {
    #[test]
    fn ppw_interpolates_between_unit_and_rw(n in prop::collection::vec(1u64..1_000_000, 2..6)) {
        let w0 = ppw_weights(&n, 0.0).unwrap();
        prop_assert!(w0.omega().iter().all(|&w| (w - 1.0).abs() < 1e-12));
        let w1 = ppw_weights(&n, 1.0).unwrap();
        let rw = rw_weights(&n).unwrap();
        for (a, b) in w1.omega().iter().zip(rw.omega()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert_eq!(w1.tag(), WeightTag::Ppw);
        prop_assert!((w1.omega().iter().sum::<f64>() / n.len() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heaviest_weight_goes_to_rarest_class(
        n in prop::collection::btree_set(1u64..1_000_000, 3).prop_shuffle_vec(),
        beta in 1e-3f64..=1.0,
    ) {
        let w = ppw_weights(&n, beta).unwrap();
        let rarest = (0..n.len()).min_by_key(|&i| n[i]).unwrap();
        prop_assert_eq!(argmax(w.omega()), rarest);
        prop_assert!(w.omega().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn beta_stays_in_unit_interval(e in 0usize..1000, lo in 0usize..400, span in 1usize..400) {
        let b = ppw_beta(e, lo, lo + span).unwrap();
        prop_assert!((0.0..=1.0).contains(&b));
        let next = ppw_beta(e + 1, lo, lo + span).unwrap();
        prop_assert!(next >= b);
    }
}

trait ShuffleVec {
    fn prop_shuffle_vec(self) -> BoxedStrategy<Vec<u64>>;
}

impl<S: Strategy<Value = BTreeSet<u64>> + 'static> ShuffleVec for S {
    fn prop_shuffle_vec(self) -> BoxedStrategy<Vec<u64>> {
        self.prop_map(|s| s.into_iter().collect::<Vec<_>>()).prop_shuffle().boxed()
    }
}
