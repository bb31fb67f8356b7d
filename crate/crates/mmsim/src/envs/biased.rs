//! One-dimensional continuous environment with a contact-like sensitive
//! region and a training distribution that under-samples it by a configured
//! factor.

use super::narrow_passage::gaussian;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (s, a, r, s') sample with scalar state and action.
#[derive(Clone, Copy, Debug)]
pub struct Transition {
    pub s: f64,
    pub a: f64,
    pub r: f64,
    pub s_next: f64,
}

/// State on [-1, 1], action on [-0.2, 0.2]. Past `sensitive_lo` a stiff
/// spring reflects the agent back and a fast ripple rides on the contact,
/// producing local structure a model only captures when the data covers the
/// region densely.
#[derive(Clone, Copy, Debug)]
pub struct BiasedCoverageEnv {
    /// Training data visits the sensitive region `bias_factor` times less
    /// often than a uniform draw would.
    pub bias_factor: f64,
    pub noise_std: f64,
    pub sensitive_lo: f64,
    pub spring: f64,
    pub ripple_amp: f64,
    pub ripple_freq: f64,
}

pub const ACTION_BOUND: f64 = 0.2;

impl Default for BiasedCoverageEnv {
    fn default() -> Self {
        Self {
            bias_factor: 10.0,
            noise_std: 0.02,
            sensitive_lo: 0.5,
            spring: 1.8,
            ripple_amp: 0.15,
            ripple_freq: 18.0,
        }
    }
}

impl BiasedCoverageEnv {
    pub fn sensitive(&self, s: f64) -> bool {
        s > self.sensitive_lo
    }

    /// Uniform-measure share of the sensitive region.
    pub fn sensitive_fraction(&self) -> f64 {
        (1.0 - self.sensitive_lo) / 2.0
    }

    pub fn step(&self, s: f64, a: f64, noise: f64) -> f64 {
        (self.mean_next_unclamped(s, a) + noise).clamp(-1.0, 1.0)
    }

    /// Noiseless conditional mean; the regression target for model error.
    pub fn mean_next(&self, s: f64, a: f64) -> f64 {
        self.mean_next_unclamped(s, a).clamp(-1.0, 1.0)
    }

    fn mean_next_unclamped(&self, s: f64, a: f64) -> f64 {
        let mut next = s + a;
        if self.sensitive(s) {
            let depth = s - self.sensitive_lo;
            next -= self.spring * depth;
            next += self.ripple_amp * (self.ripple_freq * depth).sin();
        }
        next
    }

    pub fn reward(&self, s: f64) -> f64 {
        (1.0 - s * s).max(0.0)
    }

    fn draw_state<R: Rng>(&self, rng: &mut R, sensitive_prob: f64) -> f64 {
        if rng.gen::<f64>() < sensitive_prob {
            rng.gen_range(self.sensitive_lo..1.0)
        } else {
            rng.gen_range(-1.0..self.sensitive_lo)
        }
    }

    /// Batch with the configured region imbalance; bias factor 1 reproduces
    /// the uniform sensitive share.
    pub fn biased_batch(&self, n: usize, seed: u64) -> Vec<Transition> {
        assert!(n >= 1);
        let p_sens = self.sensitive_fraction() / self.bias_factor;
        self.batch_with_sensitive_prob(n, p_sens, seed)
    }

    /// Uniform-over-states batch (the test distribution).
    pub fn uniform_batch(&self, n: usize, seed: u64) -> Vec<Transition> {
        self.batch_with_sensitive_prob(n, self.sensitive_fraction(), seed)
    }

    pub fn batch_with_sensitive_prob(&self, n: usize, p_sens: f64, seed: u64) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let s = self.draw_state(&mut rng, p_sens);
                let a = rng.gen_range(-ACTION_BOUND..ACTION_BOUND);
                let s_next = self.step(s, a, self.noise_std * gaussian(&mut rng));
                Transition { s, a, r: self.reward(s), s_next }
            })
            .collect()
    }
}
