//! Critic-guided active learning for continuous environments with generative
//! access, discretized over probe cells: per round the critic is trained on
//! the current data against a deterministic dynamics model, per-cell critic
//! gaps define the next sampling distribution, and importance clipping bounds
//! how far it may drift from the base distribution.

use super::{ActiveError, SamplingDistribution};
use crate::nn::{AdamState, CriticNet, Grads, Mlp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generative access discretized into sampling cells.
pub trait GenerativeEnv {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn n_cells(&self) -> usize;
    /// Draw a concrete (s, a) inside the cell.
    fn sample_in_cell(&self, cell: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);
    /// Draw s' from the true dynamics.
    fn sample_next(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Base sampling distribution over cells (the passive data collector).
    fn base_distribution(&self) -> Vec<f64>;
}

#[derive(Clone, Debug)]
pub struct WeightedTransition {
    pub s: Vec<f64>,
    pub a: Vec<f64>,
    pub s_next: Vec<f64>,
    pub weight: f64,
}

#[derive(Clone, Debug)]
pub struct ContinuousActiveConfig {
    pub rounds: usize,
    pub batch_per_round: usize,
    pub critic_steps: usize,
    pub model_steps: usize,
    pub eta_model: f64,
    pub eta_critic: f64,
    /// Importance clip for the critic-guided distribution against the base.
    pub w_max: f64,
    /// Fresh true-environment probes per cell when scoring the critic gap.
    pub probes_per_cell: usize,
    pub model_hidden: usize,
    pub critic_hidden: usize,
    pub critic_lipschitz: f64,
    pub seed: u64,
}

impl Default for ContinuousActiveConfig {
    fn default() -> Self {
        Self {
            rounds: 3,
            batch_per_round: 1500,
            critic_steps: 600,
            model_steps: 2500,
            eta_model: 3e-3,
            eta_critic: 3e-3,
            w_max: 1e9,
            probes_per_cell: 8,
            model_hidden: 64,
            critic_hidden: 64,
            critic_lipschitz: 1.0,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ContinuousActiveOutcome {
    /// Deterministic dynamics model trained on all collected data.
    pub model: Mlp,
    pub critic: CriticNet,
    /// Sampling distribution used in each round (over cells).
    pub round_dists: Vec<Vec<f64>>,
    /// Critic gap per cell, per round (scored after that round's training).
    pub cell_gaps: Vec<Vec<f64>>,
    /// All collected transitions with importance weights.
    pub data: Vec<WeightedTransition>,
    /// Final model-training loss per round; finiteness is the divergence check.
    pub model_losses: Vec<f64>,
}

/// Critic ascent on the real-versus-model gap over a transition pool.
pub fn train_critic(
    critic: &mut CriticNet,
    pool: &[WeightedTransition],
    model: &Mlp,
    steps: usize,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(), ActiveError> {
    let mut adam = AdamState::new(eta, critic.mlp.param_count());
    for _ in 0..steps {
        let mut grads = Grads::zeros_like(&critic.mlp);
        let b = 32;
        for _ in 0..b {
            let t = &pool[rng.gen_range(0..pool.len())];
            let pred = predict_next(model, &t.s, &t.a);
            let inv = 1.0 / b as f64;
            let (_, gr) = critic.score_backward(&t.s, &t.a, &t.s_next, -inv);
            let (_, gf) = critic.score_backward(&t.s, &t.a, &pred, inv);
            grads.add_scaled(&gr, 1.0);
            grads.add_scaled(&gf, 1.0);
        }
        let mut p = critic.mlp.flat_params();
        adam.apply(&mut p, &grads.flat())?;
        critic.mlp.set_flat_params(&p);
        critic.enforce_lipschitz();
    }
    Ok(())
}

/// Forward of a delta-predicting dynamics model.
pub fn predict_next(model: &Mlp, s: &[f64], a: &[f64]) -> Vec<f64> {
    let mut x = Vec::with_capacity(s.len() + a.len());
    x.extend_from_slice(s);
    x.extend_from_slice(a);
    let delta = model.forward(&x);
    s.iter().zip(&delta).map(|(sv, d)| sv + d).collect()
}

/// Weighted mean-squared-error training of a delta-predicting model.
pub fn train_dynamics_mlp(
    data: &[WeightedTransition],
    state_dim: usize,
    action_dim: usize,
    hidden: usize,
    steps: usize,
    eta: f64,
    seed: u64,
) -> Result<Mlp, ActiveError> {
    let mut model = Mlp::new(&[state_dim + action_dim, hidden, hidden, state_dim], seed);
    let mut adam = AdamState::new(eta, model.param_count());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7777);
    let batch = 32.min(data.len());
    let total_weight: f64 = data.iter().map(|t| t.weight).sum();
    assert!(total_weight > 0.0);
    // Weighted sampling via cumulative table.
    let mut cum = Vec::with_capacity(data.len());
    let mut acc = 0.0;
    for t in data {
        acc += t.weight / total_weight;
        cum.push(acc);
    }
    for _ in 0..steps {
        let mut grads = Grads::zeros_like(&model);
        let mut loss = 0.0;
        for _ in 0..batch {
            let u: f64 = rng.gen();
            let idx = cum.partition_point(|c| *c < u).min(data.len() - 1);
            let t = &data[idx];
            let mut x = Vec::with_capacity(state_dim + action_dim);
            x.extend_from_slice(&t.s);
            x.extend_from_slice(&t.a);
            let (out, cache) = model.forward_cache(&x);
            let mut grad_out = vec![0.0; state_dim];
            for i in 0..state_dim {
                let target = t.s_next[i] - t.s[i];
                let diff = out[i] - target;
                loss += diff * diff / batch as f64;
                grad_out[i] = 2.0 * diff / batch as f64;
            }
            grads.add_scaled(&model.backward(&cache, &grad_out), 1.0);
        }
        if !loss.is_finite() {
            return Err(ActiveError::NonFinite("dynamics model loss"));
        }
        let mut p = model.flat_params();
        adam.apply(&mut p, &grads.flat())?;
        model.set_flat_params(&p);
    }
    Ok(model)
}

/// The iterative loop: collect, fit, score, refocus.
pub fn iterative_learning_continuous(
    env: &dyn GenerativeEnv,
    cfg: &ContinuousActiveConfig,
) -> Result<ContinuousActiveOutcome, ActiveError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let base = env.base_distribution();
    let n_cells = env.n_cells();
    assert_eq!(base.len(), n_cells);

    let mut data: Vec<WeightedTransition> = Vec::new();
    // Probe sweeps are kept separately as well: the guidance rule is a
    // per-cell supremum, so the scoring critic trains on a distribution that
    // is uniform over cells rather than on the collection mass.
    let mut probe_pool: Vec<WeightedTransition> = Vec::new();
    let mut d = base.clone();
    // Critic-guided target before clipping; training weights push the drawn
    // samples toward it, clipped to the same trust region.
    let mut target = base.clone();
    let mut round_dists = Vec::new();
    let mut cell_gaps = Vec::new();
    let mut model_losses = Vec::new();
    let mut model = Mlp::new(
        &[env.state_dim() + env.action_dim(), cfg.model_hidden, cfg.model_hidden, env.state_dim()],
        cfg.seed ^ 0x11,
    );
    let mut critic = CriticNet::new(
        env.state_dim(),
        env.action_dim(),
        cfg.critic_hidden,
        crate::nn::LipschitzMode::projection(cfg.critic_lipschitz)?,
        false,
        cfg.seed ^ 0x22,
    );

    for round in 0..cfg.rounds {
        round_dists.push(d.clone());
        // Collect this round's batch from d; each sample carries the clipped
        // importance weight toward the unclipped critic-guided target.
        let w_lo = 1.0 / cfg.w_max.max(1.0);
        let w_hi = cfg.w_max.max(1.0);
        for _ in 0..cfg.batch_per_round {
            let cell = sample_cell(&d, &mut rng);
            let (s, a) = env.sample_in_cell(cell, &mut rng);
            let s_next = env.sample_next(&s, &a, &mut rng);
            let weight = if d[cell] > 0.0 { (target[cell] / d[cell]).clamp(w_lo, w_hi) } else { 1.0 };
            data.push(WeightedTransition { s, a, s_next, weight });
        }
        // A thin uniform probe sweep; the critic must see every cell to score
        // it, and the samples are real data so they join the pool.
        for cell in 0..n_cells {
            for _ in 0..cfg.probes_per_cell {
                let (s, a) = env.sample_in_cell(cell, &mut rng);
                let s_next = env.sample_next(&s, &a, &mut rng);
                data.push(WeightedTransition { s: s.clone(), a: a.clone(), s_next: s_next.clone(), weight: 1.0 });
                probe_pool.push(WeightedTransition { s, a, s_next, weight: 1.0 });
            }
        }

        // Refit the model on everything collected so far.
        model = train_dynamics_mlp(
            &data,
            env.state_dim(),
            env.action_dim(),
            cfg.model_hidden,
            cfg.model_steps,
            cfg.eta_model,
            cfg.seed ^ (round as u64 + 1),
        )?;
        let final_loss = eval_mse(&model, &data);
        if !final_loss.is_finite() {
            return Err(ActiveError::NonFinite("model loss"));
        }
        model_losses.push(final_loss);

        // Critic ascent on the real-vs-model gap over the probe pool, which
        // is uniform over cells.
        train_critic(&mut critic, &probe_pool, &model, cfg.critic_steps, cfg.eta_critic, &mut rng)?;

        // Score cells with fresh generative probes (not the training ones;
        // the critic has carved at those exact points). The guidance weight
        // is the absolute gap: a wrongly oriented witness still marks the
        // cell as poorly modeled.
        let mut gaps = vec![0.0; n_cells];
        for (cell, gap) in gaps.iter_mut().enumerate() {
            let mut acc = 0.0;
            for _ in 0..cfg.probes_per_cell {
                let (s, a) = env.sample_in_cell(cell, &mut rng);
                let s_next = env.sample_next(&s, &a, &mut rng);
                let pred = predict_next(&model, &s, &a);
                acc += critic.score(&s, &a, &s_next) - critic.score(&s, &a, &pred);
            }
            *gap = (acc / cfg.probes_per_cell as f64).abs();
        }
        cell_gaps.push(gaps.clone());

        // Critic-guided target; draws are clipped against the base.
        let mass: f64 = gaps.iter().sum();
        if mass <= 1e-12 {
            target = base.clone();
            d = base.clone();
        } else {
            let dist = SamplingDistribution::new(gaps, cfg.w_max.max(1.0))?;
            target = dist.probs.clone();
            d = dist.clipped_against(&base);
        };
    }

    Ok(ContinuousActiveOutcome { model, critic, round_dists, cell_gaps, data, model_losses })
}

fn eval_mse(model: &Mlp, data: &[WeightedTransition]) -> f64 {
    let mut acc = 0.0;
    let n = data.len().min(2000);
    for t in data.iter().take(n) {
        let pred = predict_next(model, &t.s, &t.a);
        acc += pred
            .iter()
            .zip(&t.s_next)
            .map(|(p, x)| (p - x) * (p - x))
            .sum::<f64>();
    }
    acc / n as f64
}

pub(crate) fn sample_cell(d: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in d.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    d.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gaussian;

    /// Toy 1-D environment: identity dynamics except a strong kink in the
    /// last quarter of the cells.
    struct Kinked;

    impl GenerativeEnv for Kinked {
        fn state_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            1
        }
        fn n_cells(&self) -> usize {
            8
        }
        fn sample_in_cell(&self, cell: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
            let lo = -1.0 + 0.25 * cell as f64;
            (vec![rng.gen_range(lo..lo + 0.25)], vec![rng.gen_range(-0.1..0.1)])
        }
        fn sample_next(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
            // Contact-like reflection plus a fast wiggle: hard to fit from a
            // handful of samples.
            let kink = if s[0] > 0.5 {
                -1.5 * (s[0] - 0.5) + 0.15 * (20.0 * (s[0] - 0.5)).sin()
            } else {
                0.0
            };
            vec![s[0] + a[0] + kink + 0.01 * gaussian(rng)]
        }
        fn base_distribution(&self) -> Vec<f64> {
            // Heavily under-samples the kinked cells.
            let mut d = vec![1.0; 8];
            d[6] = 0.05;
            d[7] = 0.05;
            let sum: f64 = d.iter().sum();
            d.iter_mut().for_each(|p| *p /= sum);
            d
        }
    }

    #[test]
    fn active_loop_focuses_on_the_kink() {
        let cfg = ContinuousActiveConfig {
            rounds: 2,
            batch_per_round: 400,
            critic_steps: 600,
            model_steps: 2000,
            model_hidden: 32,
            critic_hidden: 32,
            probes_per_cell: 12,
            seed: 5,
            ..Default::default()
        };
        let out = iterative_learning_continuous(&Kinked, &cfg).unwrap();
        assert!(out.model_losses.iter().all(|l| l.is_finite()));
        // Round-2 distribution concentrates on the under-sampled kink cells.
        let d2 = &out.round_dists[1];
        let kink_mass = d2[6] + d2[7];
        assert!(kink_mass > 0.5, "kink mass {kink_mass}, dist {d2:?}");
    }

    #[test]
    fn clipping_keeps_the_distribution_near_base() {
        let cfg = ContinuousActiveConfig {
            rounds: 2,
            batch_per_round: 400,
            critic_steps: 300,
            model_steps: 800,
            model_hidden: 32,
            critic_hidden: 32,
            probes_per_cell: 4,
            w_max: 2.0,
            seed: 6,
            ..Default::default()
        };
        let narrow = iterative_learning_continuous(&Kinked, &cfg).unwrap();
        let wide = iterative_learning_continuous(
            &Kinked,
            &ContinuousActiveConfig { w_max: 1e9, ..cfg.clone() },
        )
        .unwrap();
        let base = Kinked.base_distribution();
        let max_ratio = |d: &[f64]| {
            d.iter().zip(&base).map(|(x, b)| x / b).fold(0.0f64, f64::max)
        };
        // Renormalization after the two-sided clip can inflate the ratio by
        // at most another factor of w_max; the clip must still bite hard
        // relative to the open loop.
        let clipped = max_ratio(&narrow.round_dists[1]);
        let open = max_ratio(&wide.round_dists[1]);
        assert!(clipped <= 2.0 * 2.0 + 1e-9, "clipped ratio {clipped}");
        assert!(clipped < 0.5 * open, "clip did not bite: {clipped} vs {open}");
    }

    #[test]
    fn dynamics_training_fits_weighted_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut data = Vec::new();
        for _ in 0..500 {
            let s = rng.gen_range(-1.0..1.0);
            let a = rng.gen_range(-0.2..0.2);
            data.push(WeightedTransition {
                s: vec![s],
                a: vec![a],
                s_next: vec![s + a + 0.3 * s * s],
                weight: 1.0,
            });
        }
        let model = train_dynamics_mlp(&data, 1, 1, 32, 2500, 3e-3, 7).unwrap();
        let mut worst = 0.0f64;
        for i in 0..21 {
            let s = -0.9 + 0.09 * i as f64;
            let pred = predict_next(&model, &[s], &[0.0]);
            worst = worst.max((pred[0] - (s + 0.3 * s * s)).abs());
        }
        assert!(worst < 0.05, "dynamics fit error {worst}");
    }
}
