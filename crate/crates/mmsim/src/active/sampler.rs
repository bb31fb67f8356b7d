//! Error-seeking samplers: policy-gradient training on the hybrid reward
//! `α·r_task + critic error`, tabular and continuous. The continuous variant
//! is a small score-function loop with a return baseline — enough to steer
//! data collection at desk scale.

use super::ActiveError;
use crate::mdp::{occupancy, TabularMdp, TabularPolicy};
use crate::metrics::sample_index;
use crate::nn::{gaussian, AdamState, Grads, Mlp};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct SamplerConfig {
    pub episodes: usize,
    pub horizon: usize,
    pub eta: f64,
    pub batch_episodes: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { episodes: 2000, horizon: 40, eta: 0.2, batch_episodes: 10, seed: 0 }
    }
}

#[derive(Debug)]
pub struct TabularSamplerOutcome {
    pub policy: TabularPolicy,
    /// Exact occupancy of the learned policy under the true dynamics,
    /// normalized to a distribution over pairs.
    pub occupancy: Vec<f64>,
}

/// Softmax-policy score-function training on the hybrid reward over the true
/// tabular dynamics.
pub fn task_aware_sampler_tabular(
    true_mdp: &TabularMdp,
    err_reward: &[f64],
    alpha: f64,
    cfg: &SamplerConfig,
) -> Result<TabularSamplerOutcome, ActiveError> {
    assert!(alpha >= 0.0);
    assert_eq!(err_reward.len(), true_mdp.n_pairs());
    if err_reward.iter().any(|r| !r.is_finite()) {
        return Err(ActiveError::NonFinite("hybrid reward"));
    }
    let n = true_mdp.n_states;
    let na = true_mdp.n_actions;
    let mut logits = vec![0.0f64; n * na];
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut baseline = 0.0;
    let mut seen = 0.0;

    let hybrid = |s: usize, a: usize| {
        alpha * true_mdp.reward(s, a) + err_reward[true_mdp.pair_index(s, a)]
    };

    let mut batch_grad = vec![0.0f64; n * na];
    let mut in_batch = 0;
    for _ep in 0..cfg.episodes {
        let mut s = sample_index(&true_mdp.initial, &mut rng);
        let mut steps: Vec<(usize, usize)> = Vec::with_capacity(cfg.horizon);
        let mut rewards: Vec<f64> = Vec::with_capacity(cfg.horizon);
        for _ in 0..cfg.horizon {
            let probs = softmax(&logits[s * na..(s + 1) * na]);
            let a = sample_index(&probs, &mut rng);
            steps.push((s, a));
            rewards.push(hybrid(s, a));
            s = sample_index(true_mdp.row(s, a), &mut rng);
        }
        // Discounted returns-to-go.
        let mut ret = 0.0;
        let mut returns = vec![0.0; cfg.horizon];
        for t in (0..cfg.horizon).rev() {
            ret = rewards[t] + true_mdp.discount * ret;
            returns[t] = ret;
        }
        baseline = (baseline * seen + returns[0]) / (seen + 1.0);
        seen += 1.0;
        for (t, &(s, a)) in steps.iter().enumerate() {
            let adv = returns[t] - baseline;
            let probs = softmax(&logits[s * na..(s + 1) * na]);
            for j in 0..na {
                let indicator = if j == a { 1.0 } else { 0.0 };
                batch_grad[s * na + j] += adv * (indicator - probs[j]);
            }
        }
        in_batch += 1;
        if in_batch == cfg.batch_episodes {
            for (l, g) in logits.iter_mut().zip(&batch_grad) {
                *l += cfg.eta * g / cfg.batch_episodes as f64;
            }
            batch_grad.iter_mut().for_each(|g| *g = 0.0);
            in_batch = 0;
        }
    }

    let mut probs = vec![0.0; n * na];
    for s in 0..n {
        probs[s * na..(s + 1) * na].copy_from_slice(&softmax(&logits[s * na..(s + 1) * na]));
    }
    let policy = TabularPolicy::new(n, na, probs)?;
    let occ = occupancy(true_mdp, &policy)?;
    Ok(TabularSamplerOutcome { policy, occupancy: occ.normalized() })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter_mut().for_each(|v| *v /= z);
    e
}

/// Episodic continuous environment for the score-function sampler.
pub trait ContinuousEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn action_bound(&self) -> f64;
    fn reset(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Returns (next state, task reward, terminal).
    fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64, bool);
}

/// Diagonal-Gaussian policy: a network for the mean plus a global learnable
/// log-deviation per action dimension.
#[derive(Clone, Debug)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
    pub action_bound: f64,
}

impl GaussianPolicy {
    pub fn new(state_dim: usize, action_dim: usize, hidden: usize, action_bound: f64, seed: u64) -> Self {
        let mut mean_net = Mlp::new(&[state_dim, hidden, action_dim], seed);
        // Zeroed head: the initial policy is unbiased noise rather than a
        // random constant push to an action corner.
        let last = mean_net.weights.len() - 1;
        mean_net.weights[last].iter_mut().for_each(|w| *w = 0.0);
        mean_net.biases[last].iter_mut().for_each(|b| *b = 0.0);
        Self {
            mean_net,
            log_std: vec![(action_bound * 0.5).ln(); action_dim],
            action_bound,
        }
    }

    /// Unclamped draw plus the executed (clamped) action.
    pub fn sample(&self, s: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let mean = self.mean_net.forward(s);
        let raw: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| m + ls.exp() * gaussian(rng))
            .collect();
        let exec = raw.iter().map(|a| a.clamp(-self.action_bound, self.action_bound)).collect();
        (raw, exec)
    }

    pub fn param_count(&self) -> usize {
        self.mean_net.param_count() + self.log_std.len()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.mean_net.flat_params();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        let nm = self.mean_net.param_count();
        self.mean_net.set_flat_params(&flat[..nm]);
        self.log_std.copy_from_slice(&flat[nm..]);
    }
}

pub struct ContinuousSamplerOutcome {
    pub policy: GaussianPolicy,
    /// All transitions visited during the final quarter of training.
    pub late_transitions: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    pub mean_hybrid_return: f64,
    pub mean_task_return: f64,
}

/// Score-function training of a Gaussian policy on
/// `α·r_task + critic_bonus(s, a, s')`, with rewards-to-go against running
/// per-timestep baselines.
pub fn task_aware_sampler_continuous(
    env: &dyn ContinuousEnv,
    critic_bonus: &dyn Fn(&[f64], &[f64], &[f64]) -> f64,
    alpha: f64,
    cfg: &SamplerConfig,
) -> Result<ContinuousSamplerOutcome, ActiveError> {
    task_aware_sampler_continuous_from(env, critic_bonus, alpha, cfg, None)
}

/// Same loop, optionally warm-started from an existing policy.
pub fn task_aware_sampler_continuous_from(
    env: &dyn ContinuousEnv,
    critic_bonus: &dyn Fn(&[f64], &[f64], &[f64]) -> f64,
    alpha: f64,
    cfg: &SamplerConfig,
    warm_start: Option<GaussianPolicy>,
) -> Result<ContinuousSamplerOutcome, ActiveError> {
    assert!(alpha >= 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = warm_start.unwrap_or_else(|| {
        GaussianPolicy::new(env.state_dim(), env.action_dim(), 32, env.action_bound(), cfg.seed ^ 0x5a5a)
    });
    let mut adam = AdamState::new(cfg.eta * 0.01, policy.param_count());
    // Running mean reward-to-go per timestep.
    let mut togo_baseline = vec![0.0; cfg.horizon];
    let mut togo_seen = vec![0.0; cfg.horizon];
    let mut late = Vec::new();
    let late_from = cfg.episodes - cfg.episodes / 4;
    let mut hybrid_acc = 0.0;
    let mut task_acc = 0.0;

    struct Episode {
        steps: Vec<(Vec<f64>, Vec<f64>)>,
        togo: Vec<f64>,
    }
    let mut batch: Vec<Episode> = Vec::new();
    for ep in 0..cfg.episodes {
        let mut s = env.reset(&mut rng);
        let mut steps: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
        let mut rewards: Vec<f64> = Vec::new();
        let mut task_ret = 0.0;
        for _ in 0..cfg.horizon {
            let (raw, exec) = policy.sample(&s, &mut rng);
            let (next, r_task, done) = env.step(&s, &exec, &mut rng);
            let bonus = critic_bonus(&s, &exec, &next);
            if !bonus.is_finite() || !r_task.is_finite() {
                return Err(ActiveError::NonFinite("hybrid reward"));
            }
            rewards.push(alpha * r_task + bonus);
            task_ret += r_task;
            steps.push((s.clone(), raw));
            if ep >= late_from {
                late.push((s.clone(), exec.clone(), next.clone()));
            }
            s = next;
            if done {
                break;
            }
        }
        hybrid_acc += rewards.iter().sum::<f64>();
        task_acc += task_ret;
        let mut togo = vec![0.0; rewards.len()];
        let mut acc = 0.0;
        for t in (0..rewards.len()).rev() {
            acc += rewards[t];
            togo[t] = acc;
        }
        for (t, &g) in togo.iter().enumerate() {
            togo_baseline[t] = (togo_baseline[t] * togo_seen[t] + g) / (togo_seen[t] + 1.0);
            togo_seen[t] += 1.0;
        }
        batch.push(Episode { steps, togo });

        if batch.len() == cfg.batch_episodes {
            let mut grads = Grads::zeros_like(&policy.mean_net);
            let mut gstd = vec![0.0; policy.log_std.len()];
            let inv = 1.0 / cfg.batch_episodes as f64;
            for episode in &batch {
                for (t, (state, raw)) in episode.steps.iter().enumerate() {
                    let adv = episode.togo[t] - togo_baseline[t];
                    let (mean, cache) = policy.mean_net.forward_cache(state);
                    // ∇ log N(raw; mean, σ): gradient ascent on adv·log π.
                    let mut d_mean = vec![0.0; mean.len()];
                    for i in 0..mean.len() {
                        let sd = policy.log_std[i].exp();
                        let z = (raw[i] - mean[i]) / sd;
                        d_mean[i] = -adv * z / sd * inv;
                        gstd[i] += -adv * (z * z - 1.0) * inv;
                    }
                    grads.add_scaled(&policy.mean_net.backward(&cache, &d_mean), 1.0);
                }
            }
            let mut flat = policy.flat_params();
            let mut flat_grads = grads.flat();
            flat_grads.extend_from_slice(&gstd);
            adam.apply(&mut flat, &flat_grads)?;
            policy.set_flat_params(&flat);
            // Keep exploration from collapsing mid-training.
            let floor = (0.25 * policy.action_bound).ln();
            for ls in policy.log_std.iter_mut() {
                *ls = ls.clamp(floor, policy.action_bound.ln());
            }
            batch.clear();
        }
    }

    Ok(ContinuousSamplerOutcome {
        policy,
        late_transitions: late,
        mean_hybrid_return: hybrid_acc / cfg.episodes as f64,
        mean_task_return: task_acc / cfg.episodes as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_tabular;
    use crate::error_mdp::{build_error_mdp, solve_error_mdp, ErrorMetricMode};
    use crate::mdp::StateMetric;

    fn spearman(a: &[f64], b: &[f64]) -> f64 {
        let rank = |v: &[f64]| {
            let mut idx: Vec<usize> = (0..v.len()).collect();
            idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
            let mut r = vec![0.0; v.len()];
            for (pos, &i) in idx.iter().enumerate() {
                r[i] = pos as f64;
            }
            r
        };
        let ra = rank(a);
        let rb = rank(b);
        let n = a.len() as f64;
        let ma = ra.iter().sum::<f64>() / n;
        let mb = rb.iter().sum::<f64>() / n;
        let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va.sqrt() * vb.sqrt())
    }

    #[test]
    fn pure_error_sampler_tracks_the_error_seeking_optimum() {
        let mdp = make_random_tabular(3, 2, 0.0, 31).unwrap();
        let mut model = mdp.clone();
        model.row_mut(2, 1).copy_from_slice(&[0.9, 0.05, 0.05]);
        let metric = StateMetric::from_line(&[0.0, 1.0, 2.0]);
        let emdp = build_error_mdp(&mdp, &model, Some(&metric), ErrorMetricMode::W1).unwrap();
        let (opt_policy, _) = solve_error_mdp(&emdp, 1e-10).unwrap();
        let opt_occ = occupancy(&mdp, &opt_policy).unwrap().normalized();

        let out = task_aware_sampler_tabular(
            &mdp,
            &emdp.base.rewards,
            0.0,
            &SamplerConfig { episodes: 4000, horizon: 40, eta: 0.3, ..Default::default() },
        )
        .unwrap();
        let rho = spearman(&out.occupancy, &opt_occ);
        assert!(rho >= 0.8, "rank correlation {rho}");
    }

    #[test]
    fn large_alpha_recovers_pure_task_behavior() {
        let mdp = make_random_tabular(3, 2, 0.0, 32).unwrap();
        let err = vec![0.01; 6];
        let cfg = SamplerConfig { episodes: 4000, horizon: 40, eta: 0.3, ..Default::default() };
        let hybrid = task_aware_sampler_tabular(&mdp, &err, 1000.0, &cfg).unwrap();
        let pure = task_aware_sampler_tabular(&mdp, &vec![0.0; 6], 1.0, &cfg).unwrap();
        let v_hybrid = crate::mdp::policy_value(&mdp, &hybrid.policy).unwrap();
        let v_pure = crate::mdp::policy_value(&mdp, &pure.policy).unwrap();
        assert!(
            (v_hybrid - v_pure).abs() / v_pure.abs() < 0.05,
            "task returns diverge: {v_hybrid} vs {v_pure}"
        );
    }

    #[test]
    fn rejects_non_finite_rewards() {
        let mdp = make_random_tabular(2, 2, 0.0, 33).unwrap();
        let err = vec![f64::NAN; 4];
        let out = task_aware_sampler_tabular(&mdp, &err, 0.0, &SamplerConfig::default());
        assert!(matches!(out, Err(ActiveError::NonFinite(_))));
    }

    struct Line1d;

    impl ContinuousEnv for Line1d {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn action_bound(&self) -> f64 {
            0.2
        }
        fn reset(&self, _rng: &mut ChaCha8Rng) -> Vec<f64> {
            vec![0.0]
        }
        fn step(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> (Vec<f64>, f64, bool) {
            let next = (s[0] + a[0] + 0.01 * gaussian(rng)).clamp(-1.0, 1.0);
            (vec![next], 0.0, false)
        }
    }

    #[test]
    fn continuous_sampler_seeks_the_bonus_region() {
        // Bonus only past x = 0.5: the policy should learn to walk right.
        let bonus = |s: &[f64], _a: &[f64], _n: &[f64]| if s[0] > 0.5 { 1.0 } else { 0.0 };
        let cfg = SamplerConfig { episodes: 3000, horizon: 50, eta: 3.0, batch_episodes: 10, seed: 3 };
        let out = task_aware_sampler_continuous(&Line1d, &bonus, 0.0, &cfg).unwrap();
        let frac_right = out
            .late_transitions
            .iter()
            .filter(|(s, _, _)| s[0] > 0.5)
            .count() as f64
            / out.late_transitions.len() as f64;
        assert!(frac_right > 0.5, "late visitation past the threshold: {frac_right}");
    }
}
