//! Critic-based minimax training for continuous-state models: alternating
//! critic ascent and model descent on the dual gap, with the critic bounded
//! for the total-variation game and Lipschitz-controlled for the transport
//! game. Gradients reach the model through the reparameterized sample.

use super::{GameConfig, GameError, GameTrace, RoundRecord};
use crate::nn::{gaussian, AdamState, CriticNet, GaussianModel, Grads, LipschitzMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Generative access to transitions of a continuous environment.
pub trait TransitionOracle {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Draw (s, a) from the data distribution.
    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>);
    /// Draw s' from the true dynamics.
    fn sample_next(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn reward(&self, _s: &[f64], _a: &[f64]) -> f64 {
        0.0
    }
}

/// Scalar test kernel: `s' ~ N(k_s·s + k_a·a, noise²)` with uniform pairs.
pub struct Gauss1d {
    pub k_s: f64,
    pub k_a: f64,
    pub noise: f64,
    pub reward: f64,
}

impl TransitionOracle for Gauss1d {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn sample_pair(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        (vec![rng.gen_range(-1.0..1.0)], vec![rng.gen_range(-1.0..1.0)])
    }

    fn sample_next(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![self.k_s * s[0] + self.k_a * a[0] + self.noise * gaussian(rng)]
    }

    fn reward(&self, _s: &[f64], _a: &[f64]) -> f64 {
        self.reward
    }
}

pub struct TrainOutcome {
    pub model: GaussianModel,
    /// Round-averaged model parameters.
    pub averaged: GaussianModel,
    pub critic: CriticNet,
    pub trace: GameTrace,
    /// Per-round model parameter snapshots when requested.
    pub snapshots: Vec<Vec<f64>>,
}

/// Total-variation critic game. The critic output is squashed to [-1, 1]
/// (the dual needs a bounded witness), one critic step per round alternates
/// with one model step, and round-averaged model parameters are returned.
pub fn train_tv_critic(
    oracle: &dyn TransitionOracle,
    mut model: GaussianModel,
    mut critic: CriticNet,
    cfg: &GameConfig,
) -> Result<TrainOutcome, GameError> {
    cfg.validate()?;
    assert!(critic.squash, "the bounded-witness game needs a squashed critic");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut critic_adam = AdamState::new(cfg.eta_phi, critic.mlp.param_count());
    let mut model_adam = AdamState::new(cfg.eta_theta, model.mlp.param_count());
    let mut avg = model.mlp.flat_params();
    avg.iter_mut().for_each(|v| *v = 0.0);
    let mut snapshots = Vec::new();
    let mut trace = GameTrace::default();

    for t in 1..=cfg.rounds {
        let batch = draw_batch(oracle, &model, cfg.batch_size, &mut rng);
        // Critic ascent on the dual gap.
        let mut cgrads = Grads::zeros_like(&critic.mlp);
        let mut obj = 0.0;
        for sample in &batch {
            let (real, greal) = critic.score_backward(&sample.s, &sample.a, &sample.s_true, -1.0 / cfg.batch_size as f64);
            let (fake, gfake) = critic.score_backward(&sample.s, &sample.a, &sample.s_fake, 1.0 / cfg.batch_size as f64);
            obj += (real - fake) / cfg.batch_size as f64;
            cgrads.add_scaled(&greal, 1.0);
            cgrads.add_scaled(&gfake, 1.0);
        }
        if !obj.is_finite() {
            return Err(GameError::NonFinite { quantity: "critic objective", round: t });
        }
        let mut cparams = critic.mlp.flat_params();
        critic_adam.apply(&mut cparams, &cgrads.flat())?;
        critic.mlp.set_flat_params(&cparams);

        // Model ascent on the fake score via the reparameterized sample.
        if cfg.decay_model_lr {
            model_adam.lr = cfg.eta_theta / (1.0 + t as f64 / 250.0).sqrt();
        }
        let model_loss = model_step(&mut model, &critic, &batch, 0.0, &mut model_adam, &mut rng, false)?;
        trace.push(RoundRecord {
            round: t,
            critic_obj: Some(obj),
            model_loss: Some(model_loss),
            ..Default::default()
        });

        let flat = model.mlp.flat_params();
        for (acc, v) in avg.iter_mut().zip(&flat) {
            *acc += v;
        }
        if cfg.keep_snapshots {
            snapshots.push(flat);
        }
    }

    avg.iter_mut().for_each(|v| *v /= cfg.rounds as f64);
    let mut averaged = model.clone();
    averaged.mlp.set_flat_params(&avg);
    Ok(TrainOutcome { model, averaged, critic, trace, snapshots })
}

/// Transport-critic game: an inner loop trains the critic to near-optimality
/// under its Lipschitz control (hard constraint or interpolate penalty), then
/// the model takes one step, optionally regularized toward the likelihood.
pub fn train_w1_critic(
    oracle: &dyn TransitionOracle,
    mut model: GaussianModel,
    mut critic: CriticNet,
    cfg: &GameConfig,
) -> Result<TrainOutcome, GameError> {
    cfg.validate()?;
    assert!(!critic.squash, "the transport witness is unbounded");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut critic_adam = AdamState::new(cfg.eta_phi, critic.mlp.param_count());
    let mut model_adam = AdamState::new(cfg.eta_theta, model.mlp.param_count());
    let mut avg = vec![0.0; model.mlp.param_count()];
    let mut snapshots = Vec::new();
    let mut trace = GameTrace::default();
    let penalty = matches!(critic.mode, LipschitzMode::FiniteDiffPenalty(_));

    for t in 1..=cfg.rounds {
        let batch = draw_batch(oracle, &model, cfg.batch_size, &mut rng);
        let mut obj = 0.0;
        for k in 0..cfg.n_critic {
            let mut cgrads = Grads::zeros_like(&critic.mlp);
            let mut gap = 0.0;
            for sample in &batch {
                let inv = 1.0 / cfg.batch_size as f64;
                let (real, greal) = critic.score_backward(&sample.s, &sample.a, &sample.s_true, -inv);
                let (fake, gfake) = critic.score_backward(&sample.s, &sample.a, &sample.s_fake, inv);
                gap += (real - fake) * inv;
                cgrads.add_scaled(&greal, 1.0);
                cgrads.add_scaled(&gfake, 1.0);
                if penalty {
                    let alpha: f64 = rng.gen();
                    let interp: Vec<f64> = sample
                        .s_true
                        .iter()
                        .zip(&sample.s_fake)
                        .map(|(r, f)| alpha * r + (1.0 - alpha) * f)
                        .collect();
                    let (_, pgrads) = critic.gradient_penalty(&sample.s, &sample.a, &interp, cfg.lambda_gp);
                    cgrads.add_scaled(&pgrads, inv);
                }
            }
            if !gap.is_finite() {
                return Err(GameError::NonFinite { quantity: "critic objective", round: t });
            }
            if k == cfg.n_critic - 1 {
                obj = gap;
            }
            let mut cparams = critic.mlp.flat_params();
            critic_adam.apply(&mut cparams, &cgrads.flat())?;
            critic.mlp.set_flat_params(&cparams);
            critic.enforce_lipschitz();
        }

        if cfg.decay_model_lr {
            model_adam.lr = cfg.eta_theta / (1.0 + t as f64 / 250.0).sqrt();
        }
        let model_loss = model_step(&mut model, &critic, &batch, cfg.lambda_lik, &mut model_adam, &mut rng, true)?;
        trace.push(RoundRecord {
            round: t,
            critic_obj: Some(obj),
            model_loss: Some(model_loss),
            ..Default::default()
        });

        let flat = model.mlp.flat_params();
        for (acc, v) in avg.iter_mut().zip(&flat) {
            *acc += v;
        }
        if cfg.keep_snapshots {
            snapshots.push(flat);
        }
    }

    avg.iter_mut().for_each(|v| *v /= cfg.rounds as f64);
    let mut averaged = model.clone();
    averaged.mlp.set_flat_params(&avg);
    Ok(TrainOutcome { model, averaged, critic, trace, snapshots })
}

pub struct MleOutcome {
    pub model: GaussianModel,
    pub trace: GameTrace,
}

/// Likelihood baseline: gradient descent on the negative log-likelihood of
/// observed transitions plus squared reward error.
pub fn mle_baseline(
    oracle: &dyn TransitionOracle,
    mut model: GaussianModel,
    cfg: &GameConfig,
) -> Result<MleOutcome, GameError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(cfg.eta_theta, model.mlp.param_count());
    let mut trace = GameTrace::default();
    for t in 1..=cfg.rounds {
        let mut grads = Grads::zeros_like(&model.mlp);
        let mut loss = 0.0;
        let inv = 1.0 / cfg.batch_size as f64;
        for _ in 0..cfg.batch_size {
            let (s, a) = oracle.sample_pair(&mut rng);
            let s_next = oracle.sample_next(&s, &a, &mut rng);
            let r = oracle.reward(&s, &a);
            let (l, g) = nll_and_reward_grads(&model, &s, &a, &s_next, r);
            loss += l * inv;
            grads.add_scaled(&g, inv);
        }
        if !loss.is_finite() {
            return Err(GameError::NonFinite { quantity: "likelihood loss", round: t });
        }
        let mut params = model.mlp.flat_params();
        adam.apply(&mut params, &grads.flat())?;
        model.mlp.set_flat_params(&params);
        trace.push(RoundRecord { round: t, model_loss: Some(loss), ..Default::default() });
    }
    Ok(MleOutcome { model, trace })
}

struct BatchSample {
    s: Vec<f64>,
    a: Vec<f64>,
    s_true: Vec<f64>,
    s_fake: Vec<f64>,
    noise: Vec<f64>,
}

fn draw_batch(
    oracle: &dyn TransitionOracle,
    model: &GaussianModel,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<BatchSample> {
    (0..batch)
        .map(|_| {
            let (s, a) = oracle.sample_pair(rng);
            let s_true = oracle.sample_next(&s, &a, rng);
            let noise: Vec<f64> = (0..oracle.state_dim()).map(|_| gaussian(rng)).collect();
            let s_fake = model.sample(&s, &a, &noise);
            BatchSample { s, a, s_true, s_fake, noise }
        })
        .collect()
}

/// One model step: ascend the critic's fake score (through the
/// reparameterized draw), optionally pulled toward the likelihood.
///
/// `fresh_draws` resamples the generated batch: after an inner critic loop
/// the slopes at the exact fakes the critic trained on are overfit.
fn model_step(
    model: &mut GaussianModel,
    critic: &CriticNet,
    batch: &[BatchSample],
    lambda_lik: f64,
    adam: &mut AdamState,
    rng: &mut ChaCha8Rng,
    fresh_draws: bool,
) -> Result<f64, GameError> {
    let inv = 1.0 / batch.len() as f64;
    let mut grads = Grads::zeros_like(&model.mlp);
    let mut loss = 0.0;
    for sample in batch {
        let out = model.predict(&sample.s, &sample.a);
        let noise: Vec<f64> = if fresh_draws {
            (0..model.state_dim).map(|_| gaussian(rng)).collect()
        } else {
            sample.noise.clone()
        };
        let fake: Vec<f64> = out
            .mean
            .iter()
            .zip(&out.logvar)
            .zip(&noise)
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect();
        let (score, cgrads) = critic.score_backward(&sample.s, &sample.a, &fake, 1.0);
        loss -= score * inv;
        // Input gradient on the next-state slice, chained through the draw.
        let d_next = &cgrads.input[sample.s.len() + sample.a.len()..];
        let mut d_mean = vec![0.0; model.state_dim];
        let mut d_logvar = vec![0.0; model.state_dim];
        for i in 0..model.state_dim {
            d_mean[i] = -inv * d_next[i];
            d_logvar[i] = -inv * d_next[i] * 0.5 * (0.5 * out.logvar[i]).exp() * noise[i];
        }
        grads.add_scaled(&model.backward(&out, &d_mean, &d_logvar, 0.0), 1.0);
        if lambda_lik > 0.0 {
            let (nll, ng) = model.nll_backward(&sample.s, &sample.a, &sample.s_true);
            loss += lambda_lik * nll * inv;
            grads.add_scaled(&ng, lambda_lik * inv);
        }
    }
    if !loss.is_finite() {
        return Err(GameError::NonFinite { quantity: "model loss", round: 0 });
    }
    let mut params = model.mlp.flat_params();
    adam.apply(&mut params, &grads.flat())?;
    model.mlp.set_flat_params(&params);
    Ok(loss)
}

fn nll_and_reward_grads(model: &GaussianModel, s: &[f64], a: &[f64], s_next: &[f64], r: f64) -> (f64, Grads) {
    let out = model.predict(s, a);
    let mut d_mean = vec![0.0; model.state_dim];
    let mut d_logvar = vec![0.0; model.state_dim];
    let mut loss = 0.0;
    for i in 0..model.state_dim {
        let var = out.logvar[i].exp();
        let diff = s_next[i] - out.mean[i];
        loss += 0.5 * ((2.0 * std::f64::consts::PI).ln() + out.logvar[i] + diff * diff / var);
        d_mean[i] = -diff / var;
        d_logvar[i] = 0.5 - 0.5 * diff * diff / var;
    }
    let rdiff = out.reward - r;
    loss += rdiff * rdiff;
    let grads = model.backward(&out, &d_mean, &d_logvar, 2.0 * rdiff);
    (loss, grads)
}

/// Mean prediction error of the model over a probe grid.
pub fn mean_rmse_on_grid(model: &GaussianModel, truth: impl Fn(f64, f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let mut sq = 0.0;
    let mut count = 0;
    for i in 0..n {
        for j in 0..n {
            let s = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            let a = lo + (hi - lo) * j as f64 / (n - 1) as f64;
            let out = model.predict(&[s], &[a]);
            let diff = out.mean[0] - truth(s, a);
            sq += diff * diff;
            count += 1;
        }
    }
    (sq / count as f64).sqrt()
}
