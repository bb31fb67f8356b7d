//! Shared helpers for unit tests.

use crate::mdp::{TabularMdp, TabularPolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub(crate) fn random_policy(n_states: usize, n_actions: usize, seed: u64) -> TabularPolicy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probs = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let mut row: Vec<f64> = (0..n_actions).map(|_| -rng.gen::<f64>().ln()).collect();
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        probs[s * n_actions..(s + 1) * n_actions].copy_from_slice(&row);
    }
    TabularPolicy::new(n_states, n_actions, probs).unwrap()
}

/// Kernel with every transition row nudged by uniform noise and renormalized.
pub(crate) fn perturbed(mdp: &TabularMdp, scale: f64, seed: u64) -> TabularMdp {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = mdp.clone();
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            let row = out.row_mut(s, a);
            for v in row.iter_mut() {
                *v = (*v + scale * rng.gen::<f64>()).max(1e-6);
            }
            let sum: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= sum);
        }
    }
    out
}
