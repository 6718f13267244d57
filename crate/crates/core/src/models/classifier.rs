use rand::Rng;

use crate::error::{GenexError, Result};
use crate::features::MaskedInput;
use crate::nn::{log_sum_exp, softmax, Dense, DenseGrad};

/// `h_θ`: linear → ReLU → linear → softmax over `[values, mask]` inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub n: usize,
    pub hidden: usize,
    pub classes: usize,
    pub l1: Dense,
    pub l2: Dense,
}

#[derive(Clone, Debug)]
pub struct ClassifierGrad {
    pub l1: DenseGrad,
    pub l2: DenseGrad,
}

impl ClassifierGrad {
    pub fn zeros_like(c: &Classifier) -> Self {
        ClassifierGrad {
            l1: DenseGrad::zeros_like(&c.l1),
            l2: DenseGrad::zeros_like(&c.l2),
        }
    }

    pub fn clear(&mut self) {
        self.l1.clear();
        self.l2.clear();
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        vec![&self.l1.w, &self.l1.b, &self.l2.w, &self.l2.b]
    }
}

impl Classifier {
    pub fn new(n: usize, hidden: usize, classes: usize, rng: &mut impl Rng) -> Self {
        Classifier {
            n,
            hidden,
            classes,
            l1: Dense::init(2 * n, hidden, rng),
            l2: Dense::init(hidden, classes, rng),
        }
    }

    pub fn zeros(n: usize, hidden: usize, classes: usize) -> Self {
        Classifier {
            n,
            hidden,
            classes,
            l1: Dense::zeros(2 * n, hidden),
            l2: Dense::zeros(hidden, classes),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.l1.w, &mut self.l1.b, &mut self.l2.w, &mut self.l2.b]
    }

    /// Class distribution `h(x)`.
    pub fn predict(&self, m: &MaskedInput) -> Result<Vec<f64>> {
        if m.n() != self.n || m.mask.len() != self.n {
            return Err(GenexError::DimensionMismatch {
                expected: self.n,
                actual: m.n(),
            });
        }
        Ok(self.probs_encoded(&m.encoded()))
    }

    pub fn probs_encoded(&self, x: &[f64]) -> Vec<f64> {
        self.probs_from_pre(&self.l1.apply(x))
    }

    /// First-layer pre-activations for an encoded input.
    pub fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        self.l1.apply(x)
    }

    /// Adds the first-layer contribution of revealing feature `j` with
    /// `value` (its value weight plus its mask weight).
    pub fn reveal_in_pre(&self, pre: &mut [f64], j: usize, value: f64) {
        let wv = self.l1.row(j);
        let wm = self.l1.row(self.n + j);
        for ((p, a), b) in pre.iter_mut().zip(wv).zip(wm) {
            *p += value * a + b;
        }
    }

    /// Changes the value of an already revealed feature `j` by `delta`.
    pub fn shift_in_pre(&self, pre: &mut [f64], j: usize, delta: f64) {
        let wv = self.l1.row(j);
        pre.iter_mut().zip(wv).for_each(|(p, a)| *p += delta * a);
    }

    pub fn logits_from_pre(&self, pre: &[f64]) -> Vec<f64> {
        let mut h = pre.to_vec();
        crate::nn::relu_in_place(&mut h);
        self.l2.apply(&h)
    }

    pub fn probs_from_pre(&self, pre: &[f64]) -> Vec<f64> {
        softmax(&self.logits_from_pre(pre))
    }

    /// Cross-entropy `-ln h(x)[y]` from first-layer pre-activations.
    pub fn loss_from_pre(&self, pre: &[f64], label: usize) -> f64 {
        let logits = self.logits_from_pre(pre);
        log_sum_exp(&logits) - logits[label]
    }

    /// Max-class confidence from pre-activations.
    pub fn confidence_from_pre(&self, pre: &[f64]) -> f64 {
        self.probs_from_pre(pre).into_iter().fold(0.0, f64::max)
    }

    pub fn loss(&self, x: &[f64], label: usize) -> f64 {
        self.loss_from_pre(&self.hidden_pre(x), label)
    }

    /// Weighted cross-entropy `weight * -ln h(x)[y]`; accumulates parameter
    /// gradients into `grad` and writes `d loss / d x` into `dx` if given.
    pub fn loss_and_grad(
        &self,
        x: &[f64],
        label: usize,
        weight: f64,
        grad: &mut ClassifierGrad,
        dx: Option<&mut [f64]>,
    ) -> f64 {
        let pre = self.l1.apply(x);
        let mut h = pre.clone();
        crate::nn::relu_in_place(&mut h);
        let logits = self.l2.apply(&h);
        let lse = log_sum_exp(&logits);
        let loss = lse - logits[label];
        let mut dlogits: Vec<f64> = logits.iter().map(|l| weight * (l - lse).exp()).collect();
        dlogits[label] -= weight;
        let mut dh = vec![0.0; self.hidden];
        self.l2.backward(&h, &dlogits, &mut grad.l2, Some(&mut dh));
        for (d, p) in dh.iter_mut().zip(&pre) {
            if *p <= 0.0 {
                *d = 0.0;
            }
        }
        self.l1.backward(x, &dh, &mut grad.l1, dx);
        weight * loss
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSet;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_predict_uniform() {
        let c = Classifier::zeros(3, 4, 4);
        let m = MaskedInput::from_subset(&[1.0, 2.0, 3.0], &FeatureSet::from_iter([0, 2]));
        let p = c.predict(&m).unwrap();
        assert!(p.iter().all(|&q| (q - 0.25).abs() < 1e-15));
        let loss = c.loss(&m.encoded(), 2);
        assert!((loss - 4f64.ln()).abs() < 1e-12);
        assert!((loss - 1.3863).abs() < 1e-4);
    }

    #[test]
    fn predictions_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let c = Classifier::new(5, 8, 3, &mut rng);
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let p = c.predict(&MaskedInput::from_subset(&x, &FeatureSet::from_iter([1, 4]))).unwrap();
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|&q| q > 0.0 && q < 1.0));
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let c = Classifier::zeros(3, 4, 2);
        assert!(matches!(
            c.predict(&MaskedInput::unobserved(4)),
            Err(GenexError::DimensionMismatch { expected: 3, actual: 4 })
        ));
    }

    #[test]
    fn incremental_reveal_matches_full_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = Classifier::new(4, 6, 3, &mut rng);
        let x = [0.3, -1.2, 0.8, 2.0];
        let base = MaskedInput::from_subset(&x, &FeatureSet::from_iter([0]));
        let mut pre = c.hidden_pre(&base.encoded());
        c.reveal_in_pre(&mut pre, 2, x[2]);
        let full = c.hidden_pre(&MaskedInput::from_subset(&x, &FeatureSet::from_iter([0, 2])).encoded());
        for (a, b) in pre.iter().zip(&full) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
