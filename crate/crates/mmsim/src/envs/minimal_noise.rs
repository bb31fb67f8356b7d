//! A product MDP pairing a reward-bearing deterministic chain with an
//! irrelevant uniformly resampled noise coordinate, plus a capacity-limited
//! model family that must trade off fitting the noise against fitting the
//! chain. The family exposes the gap between likelihood-optimal and
//! value-optimal model selection.

use crate::mdp::{MdpError, TabularMdp, TabularPolicy};

/// Chain length of the relevant coordinate.
const CHAIN_LEN: usize = 3;
/// Fraction of transition mass a fully noise-fitting model diverts away from
/// the correct chain transition at the choke pair.
const CORRUPTION_GAIN: f64 = 0.6;

pub struct MinimalNoiseInstance {
    pub true_mdp: TabularMdp,
    /// Candidate models, one per capacity weight.
    pub model_class: Vec<TabularMdp>,
    /// Capacity weight of each class member; 0 = fully deterministic noise
    /// head with an exact chain, 1 = exact noise head with the most corrupted
    /// chain.
    pub class_weights: Vec<f64>,
    /// Policies of interest: deterministic maps of the relevant coordinate,
    /// lifted to the product space.
    pub policy_set: Vec<TabularPolicy>,
    pub noise_levels: usize,
    pub chain_len: usize,
    /// (state, action) of the corrupted chain transition, in chain coordinates.
    pub choke: (usize, usize),
}

/// Build the instance for a given number of noise levels. Product states are
/// indexed `chain_pos * noise_levels + noise_level`; action 0 advances the
/// chain, action 1 stays.
pub fn make_minimal_noise_instance(noise_levels: usize) -> Result<MinimalNoiseInstance, MdpError> {
    assert!(noise_levels >= 1);
    let k = noise_levels;
    let m = CHAIN_LEN;
    let n = m * k;
    let n_actions = 2;
    let gamma = 0.9;

    let advance = |x: usize| (x + 1).min(m - 1);
    let chain_next = |x: usize, a: usize| if a == 0 { advance(x) } else { x };

    let mut transitions = vec![0.0; n * n_actions * n];
    let mut rewards = vec![0.0; n * n_actions];
    for x in 0..m {
        for z in 0..k {
            let s = x * k + z;
            for a in 0..n_actions {
                let xn = chain_next(x, a);
                let base = (s * n_actions + a) * n;
                for zn in 0..k {
                    transitions[base + xn * k + zn] = 1.0 / k as f64;
                }
                rewards[s * n_actions + a] = if x == m - 1 { 1.0 } else { 0.0 };
            }
        }
    }
    let mut initial = vec![0.0; n];
    for z in 0..k {
        initial[z] = 1.0 / k as f64; // chain position 0, uniform noise
    }
    let true_mdp = TabularMdp::new(n, n_actions, transitions, rewards, gamma, initial, 1.0)?;

    let choke = (m - 2, 0);
    let weights = [0.0, 0.25, 0.5, 0.75, 1.0];
    let mut model_class = Vec::new();
    for &w in &weights {
        let mut t = vec![0.0; n * n_actions * n];
        for x in 0..m {
            for z in 0..k {
                let s = x * k + z;
                for a in 0..n_actions {
                    let base = (s * n_actions + a) * n;
                    let xn = chain_next(x, a);
                    // Noise head: point mass on level 0 blended toward uniform.
                    let mut put = |x_target: usize, mass: f64| {
                        for zn in 0..k {
                            let zmass = w / k as f64 + if zn == 0 { 1.0 - w } else { 0.0 };
                            t[base + x_target * k + zn] += mass * zmass;
                        }
                    };
                    if (x, a) == choke {
                        let c = CORRUPTION_GAIN * w;
                        put(xn, 1.0 - c);
                        put(0, c); // diverted back to the chain start
                    } else {
                        put(xn, 1.0);
                    }
                }
            }
        }
        model_class.push(TabularMdp::new(
            n,
            n_actions,
            t,
            true_mdp.rewards.clone(),
            gamma,
            true_mdp.initial.clone(),
            1.0,
        )?);
    }

    let mut policy_set = Vec::new();
    for mask in 0..(1usize << m) {
        let mut actions = vec![0usize; n];
        for x in 0..m {
            let a = (mask >> x) & 1;
            for z in 0..k {
                actions[x * k + z] = a;
            }
        }
        policy_set.push(TabularPolicy::deterministic(n, n_actions, &actions));
    }

    Ok(MinimalNoiseInstance {
        true_mdp,
        model_class,
        class_weights: weights.to_vec(),
        policy_set,
        noise_levels: k,
        chain_len: m,
        choke,
    })
}

impl MinimalNoiseInstance {
    /// The same environment with the noise labels permuted; the noise
    /// coordinate is value-irrelevant, so all policy values must match.
    pub fn with_permuted_noise(&self, perm: &[usize]) -> TabularMdp {
        let k = self.noise_levels;
        let m = self.chain_len;
        let n = m * k;
        assert_eq!(perm.len(), k);
        let relabel = |s: usize| {
            let (x, z) = (s / k, s % k);
            x * k + perm[z]
        };
        let mut t = vec![0.0; n * 2 * n];
        let mut r = vec![0.0; n * 2];
        let mut rho = vec![0.0; n];
        for s in 0..n {
            for a in 0..2 {
                r[relabel(s) * 2 + a] = self.true_mdp.reward(s, a);
                let row = self.true_mdp.row(s, a);
                for (sn, &p) in row.iter().enumerate() {
                    t[(relabel(s) * 2 + a) * n + relabel(sn)] += p;
                }
            }
            rho[relabel(s)] += self.true_mdp.initial[s];
        }
        TabularMdp::new(n, 2, t, r, self.true_mdp.discount, rho, 1.0).unwrap()
    }
}
