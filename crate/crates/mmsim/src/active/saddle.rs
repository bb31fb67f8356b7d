//! Regularized two-player sampling game with exact saddle-point accounting.
//!
//! Payoff `L(P̂, d) = E_d[W1(P, P̂)] − λ·KL(d‖u)`. The distribution player
//! follows the regularized leader (a multiplicative-weights update with the
//! running average error vector), the model player runs mirror descent per
//! kernel row through the transport dual. Both regrets and the duality gap of
//! the time-averaged strategies are computed in closed form each checkpoint.

use super::{ActiveError, SaddleRecord, SaddleTrace};
use crate::mdp::{StateMetric, TabularMdp};
use crate::metrics::w1_slices;
use crate::ot;

#[derive(Clone, Debug)]
pub struct SaddleConfig {
    pub rounds: usize,
    pub lambda: f64,
    pub eta_model: f64,
    pub model_steps: usize,
    /// Time constant of the 1/sqrt step decay on the model player; constant
    /// steps chatter on the polyhedral transport loss and stall the averaged
    /// iterate.
    pub eta_decay_tau: f64,
    /// Rounds at which the duality gap is evaluated; always includes the last.
    pub checkpoints: Vec<usize>,
}

impl Default for SaddleConfig {
    fn default() -> Self {
        Self {
            rounds: 1000,
            lambda: 0.3,
            eta_model: 0.8,
            model_steps: 1,
            eta_decay_tau: 25.0,
            checkpoints: vec![10, 100, 1000],
        }
    }
}

/// Runs the game and verifies `gap ≤ (Regret_M + Regret_D)/T` at every
/// checkpoint. The model class is the full product of simplices, so the
/// hindsight model optimum is the true kernel and the inner minimum of the
/// averaged-strategy payoff is available exactly.
pub fn regularized_game(
    true_mdp: &TabularMdp,
    metric: &StateMetric,
    prior: &[f64],
    cfg: &SaddleConfig,
) -> Result<SaddleTrace, ActiveError> {
    if cfg.lambda <= 0.0 {
        return Err(ActiveError::BadLambda(cfg.lambda));
    }
    let n_pairs = true_mdp.n_pairs();
    assert_eq!(prior.len(), n_pairs);
    let lambda = cfg.lambda;

    // Uniform-row initial model.
    let mut model = true_mdp.clone();
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            model
                .row_mut(s, a)
                .iter_mut()
                .for_each(|v| *v = 1.0 / true_mdp.n_states as f64);
        }
    }

    let mut d = prior.to_vec();
    let mut w_hist_sum = vec![0.0; n_pairs]; // Σ_τ w_τ
    let mut d_bar_sum = vec![0.0; n_pairs];
    let mut model_bar_sum = vec![0.0; true_mdp.transitions.len()];
    let mut realized_model_loss = 0.0; // Σ_τ E_{d_τ}[w_τ]
    let mut realized_payoff_sum = 0.0; // Σ_τ L(P̂_τ, d_τ)
    let mut trace = SaddleTrace::default();

    for t in 1..=cfg.rounds {
        // Per-pair transport errors of the current model.
        let mut w = vec![0.0; n_pairs];
        for s in 0..true_mdp.n_states {
            for a in 0..true_mdp.n_actions {
                w[true_mdp.pair_index(s, a)] =
                    w1_slices(true_mdp.row(s, a), model.row(s, a), metric);
            }
        }
        let e_d_w: f64 = d.iter().zip(&w).map(|(a, b)| a * b).sum();
        let kl_du: f64 = d
            .iter()
            .zip(prior)
            .filter(|(dd, _)| **dd > 0.0)
            .map(|(dd, uu)| dd * (dd / uu).ln())
            .sum();
        let payoff = e_d_w - lambda * kl_du;
        realized_model_loss += e_d_w;
        realized_payoff_sum += payoff;
        for (acc, v) in w_hist_sum.iter_mut().zip(&w) {
            *acc += v;
        }
        for (acc, v) in d_bar_sum.iter_mut().zip(&d) {
            *acc += v;
        }
        for (acc, v) in model_bar_sum.iter_mut().zip(&model.transitions) {
            *acc += v;
        }

        if cfg.checkpoints.contains(&t) || t == cfg.rounds {
            let record = checkpoint(
                true_mdp,
                metric,
                prior,
                lambda,
                t,
                payoff,
                &w_hist_sum,
                &d_bar_sum,
                &model_bar_sum,
                realized_model_loss,
                realized_payoff_sum,
            );
            trace.records.push(record);
        }

        // Distribution player: regularized-leader softmax on the running
        // average of past error vectors.
        let w_bar: Vec<f64> = w_hist_sum.iter().map(|v| v / t as f64).collect();
        d = softmax_prior(prior, &w_bar, lambda);

        // Model player: mirror descent per row against d_t.
        let eta_t = cfg.eta_model / (1.0 + t as f64 / cfg.eta_decay_tau).sqrt();
        for _ in 0..cfg.model_steps {
            for s in 0..true_mdp.n_states {
                for a in 0..true_mdp.n_actions {
                    let weight = d[true_mdp.pair_index(s, a)];
                    if weight == 0.0 {
                        continue;
                    }
                    let p = true_mdp.row(s, a);
                    let grad = if let Some(coords) = &metric.line_coords {
                        ot::w1_line(p, model.row(s, a), coords).1
                    } else {
                        ot::transport(p, model.row(s, a), &metric.dist).sink_potential
                    };
                    if grad.iter().all(|g| g.abs() < 1e-14) {
                        continue;
                    }
                    let row = model.row_mut(s, a);
                    let mut total = 0.0;
                    for (q, g) in row.iter_mut().zip(&grad) {
                        *q *= (-eta_t * weight * g).exp();
                        total += *q;
                    }
                    row.iter_mut().for_each(|q| *q /= total);
                }
            }
        }
    }

    Ok(trace)
}

#[allow(clippy::too_many_arguments)]
fn checkpoint(
    true_mdp: &TabularMdp,
    metric: &StateMetric,
    prior: &[f64],
    lambda: f64,
    t: usize,
    payoff: f64,
    w_hist_sum: &[f64],
    d_bar_sum: &[f64],
    model_bar_sum: &[f64],
    realized_model_loss: f64,
    realized_payoff_sum: f64,
) -> SaddleRecord {
    let tf = t as f64;
    // Regret of the model player: the hindsight optimum is the true kernel
    // (zero transport error), so the regret is the realized weighted loss.
    let regret_model = realized_model_loss;
    // Regret of the distribution player: closed-form best response to the
    // average error vector (entropic maximizer), minus realized payoffs.
    let w_bar: Vec<f64> = w_hist_sum.iter().map(|v| v / tf).collect();
    let best_fixed = tf * entropic_value(prior, &w_bar, lambda);
    let regret_dist = best_fixed - realized_payoff_sum;

    // Duality gap of the averaged strategies.
    let mut avg_model = true_mdp.clone();
    avg_model.transitions = model_bar_sum.iter().map(|v| v / tf).collect();
    let mut w_avg_model = vec![0.0; true_mdp.n_pairs()];
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            w_avg_model[true_mdp.pair_index(s, a)] =
                w1_slices(true_mdp.row(s, a), avg_model.row(s, a), metric);
        }
    }
    let max_d = entropic_value(prior, &w_avg_model, lambda);
    let d_bar: Vec<f64> = d_bar_sum.iter().map(|v| v / tf).collect();
    let kl_bar: f64 = d_bar
        .iter()
        .zip(prior)
        .filter(|(dd, _)| **dd > 0.0)
        .map(|(dd, uu)| dd * (dd / uu).ln())
        .sum();
    // Full simplex class: the inner minimizer of E_{d̄}[W1] is the true kernel.
    let min_model = -lambda * kl_bar;
    let gap = max_d - min_model;
    let bound_rhs = (regret_model + regret_dist) / tf + 1e-8;
    SaddleRecord { t, payoff, regret_model, regret_dist, gap, bound_rhs }
}

/// `max_d E_d[w] − λ·KL(d‖u) = λ·ln Σ u·exp(w/λ)`.
fn entropic_value(prior: &[f64], w: &[f64], lambda: f64) -> f64 {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = prior.iter().zip(w).map(|(u, wi)| u * ((wi - m) / lambda).exp()).sum();
    m + lambda * z.ln()
}

/// The maximizer itself: `d ∝ u·exp(w/λ)`.
fn softmax_prior(prior: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    let m = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut d: Vec<f64> = prior.iter().zip(w).map(|(u, wi)| u * ((wi - m) / lambda).exp()).collect();
    let sum: f64 = d.iter().sum();
    d.iter_mut().for_each(|x| *x /= sum);
    d
}
