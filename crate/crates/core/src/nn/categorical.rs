use rand::Rng;

use crate::scalar::Scalar;

/// Softmax distribution over a small discrete action set.
#[derive(Debug, Clone, PartialEq)]
pub struct Categorical<T> {
    log_probs: Vec<T>,
}

impl<T: Scalar> Categorical<T> {
    /// Builds the distribution from finite logits using a max-shifted
    /// log-sum-exp.
    pub fn new(logits: &[T]) -> Self {
        let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let sum: T = logits.iter().map(|&l| (l - max).exp()).sum();
        let lse = max + sum.ln();
        Self { log_probs: logits.iter().map(|&l| l - lse).collect() }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn log_prob(&self, action: usize) -> T {
        self.log_probs[action]
    }

    pub fn log_probs(&self) -> &[T] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<T> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn entropy(&self) -> T {
        -self.log_probs.iter().map(|&lp| lp.exp() * lp).sum::<T>()
    }

    /// Most likely action; the lowest index wins ties.
    pub fn mode(&self) -> usize {
        let mut best = 0;
        for (i, &lp) in self.log_probs.iter().enumerate() {
            if lp > self.log_probs[best] {
                best = i;
            }
        }
        best
    }

    /// Inverse-CDF sample driven by one uniform draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut cum = 0.0;
        for (i, lp) in self.log_probs.iter().enumerate() {
            cum += lp.as_f64().exp();
            if u < cum {
                return i;
            }
        }
        // Rounding left the cumulative sum just under 1.
        self.mode()
    }
}
