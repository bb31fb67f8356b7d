//! Seeded random tabular MDP generator for property suites.

use crate::mdp::{MdpError, TabularMdp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random MDP with Dirichlet(1) transition rows, rewards uniform in
/// [0, r_max], uniform start distribution, γ = 0.9, r_max = 1.
///
/// `sparsity` in [0, 1] interpolates each row toward a random one-hot;
/// 1.0 yields deterministic rows.
pub fn make_random_tabular(
    n_states: usize,
    n_actions: usize,
    sparsity: f64,
    seed: u64,
) -> Result<TabularMdp, MdpError> {
    make_random_tabular_with(n_states, n_actions, sparsity, 0.9, 1.0, seed)
}

pub fn make_random_tabular_with(
    n_states: usize,
    n_actions: usize,
    sparsity: f64,
    discount: f64,
    r_max: f64,
    seed: u64,
) -> Result<TabularMdp, MdpError> {
    assert!(n_states >= 1 && n_actions >= 1);
    assert!((0.0..=1.0).contains(&sparsity));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut transitions = vec![0.0; n_states * n_actions * n_states];
    for row in transitions.chunks_mut(n_states) {
        let mut soft: Vec<f64> = (0..n_states).map(|_| -rng.gen::<f64>().ln()).collect();
        let sum: f64 = soft.iter().sum();
        soft.iter_mut().for_each(|v| *v /= sum);
        let hot = rng.gen_range(0..n_states);
        for (i, v) in row.iter_mut().enumerate() {
            let onehot = if i == hot { 1.0 } else { 0.0 };
            *v = (1.0 - sparsity) * soft[i] + sparsity * onehot;
        }
        // Exact renormalization keeps row sums at 1 within 1e-12.
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    let rewards: Vec<f64> = (0..n_states * n_actions).map(|_| rng.gen_range(0.0..r_max)).collect();
    let initial = vec![1.0 / n_states as f64; n_states];
    TabularMdp::new(n_states, n_actions, transitions, rewards, discount, initial, r_max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_gives_identical_instances() {
        let a = make_random_tabular(4, 3, 0.2, 42).unwrap();
        let b = make_random_tabular(4, 3, 0.2, 42).unwrap();
        assert_eq!(a.transitions, b.transitions);
        assert_eq!(a.rewards, b.rewards);
        let c = make_random_tabular(4, 3, 0.2, 43).unwrap();
        assert_ne!(a.transitions, c.transitions);
    }

    #[test]
    fn full_sparsity_is_deterministic() {
        let mdp = make_random_tabular(5, 2, 1.0, 7).unwrap();
        for s in 0..5 {
            for a in 0..2 {
                let row = mdp.row(s, a);
                let ones = row.iter().filter(|&&p| (p - 1.0).abs() < 1e-12).count();
                let zeros = row.iter().filter(|&&p| p.abs() < 1e-12).count();
                assert_eq!(ones, 1);
                assert_eq!(zeros, 4);
            }
        }
    }

    #[test]
    fn row_sums_exact_over_many_draws() {
        for seed in 0..1000 {
            let mdp = make_random_tabular(3, 2, (seed % 10) as f64 / 10.0, seed).unwrap();
            for s in 0..3 {
                for a in 0..2 {
                    let sum: f64 = mdp.row(s, a).iter().sum();
                    assert!((sum - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
