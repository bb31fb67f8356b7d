//! Tabular instantiations of the critic games where the inner maximization
//! is available in closed form, plus the misspecification contrast between
//! the likelihood-optimal and value-optimal members of a model family.

use super::{GameError, GameTrace, RoundRecord};
use crate::envs::MinimalNoiseInstance;
use crate::mdp::{occupancy, worst_case_gap, PolicyClass, TabularMdp, TabularPolicy};
use crate::metrics::{
    occupancy_weighted_divergence, sample_index, tv_slices, Divergence,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug)]
pub struct ExactTvOutcome {
    pub model: TabularMdp,
    pub trace: GameTrace,
}

/// Total-variation game with the exact sign witness as critic: the critic
/// objective at the witness equals twice the data-weighted TV, and the model
/// row follows a multiplicative-weights step against the witness signal.
pub fn exact_tv_game(
    true_mdp: &TabularMdp,
    d_data: &[f64],
    eta: f64,
    rounds: usize,
) -> Result<ExactTvOutcome, GameError> {
    assert_eq!(d_data.len(), true_mdp.n_pairs());
    let n = true_mdp.n_states;
    let mut model = true_mdp.clone();
    for s in 0..n {
        for a in 0..true_mdp.n_actions {
            model.row_mut(s, a).iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }
    let mut trace = GameTrace::default();
    for t in 1..=rounds {
        let mut obj = 0.0;
        for s in 0..n {
            for a in 0..true_mdp.n_actions {
                let w = d_data[true_mdp.pair_index(s, a)];
                if w == 0.0 {
                    continue;
                }
                let p = true_mdp.row(s, a).to_vec();
                obj += w * 2.0 * tv_slices(&p, model.row(s, a));
                let row = model.row_mut(s, a);
                let mut total = 0.0;
                for (q, &ps) in row.iter_mut().zip(&p) {
                    // Witness is sign(p−q), zero on ties; the model descends
                    // the critic gap.
                    let sign = if ps > *q { 1.0 } else if ps < *q { -1.0 } else { 0.0 };
                    *q *= (eta * w * sign).exp();
                    total += *q;
                }
                row.iter_mut().for_each(|q| *q /= total);
            }
        }
        trace.push(RoundRecord { round: t, critic_obj: Some(obj), ..Default::default() });
    }
    Ok(ExactTvOutcome { model, trace })
}

/// Stochastic-gradient likelihood fit of a tabular kernel from transition
/// samples, parameterized by per-row softmax logits.
pub fn tabular_mle_sgd(
    samples: &[(usize, usize, usize)],
    n_states: usize,
    n_actions: usize,
    eta: f64,
    epochs: usize,
    seed: u64,
) -> Vec<f64> {
    let mut logits = vec![0.0f64; n_states * n_actions * n_states];
    // Tail-averaged iterate; the raw final iterate carries step noise.
    let mut tail_avg = vec![0.0f64; n_states * n_actions * n_states];
    let tail_start = epochs.saturating_sub(epochs / 5 + 1);
    let mut tail_count = 0.0f64;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for epoch in 0..epochs {
        let eta_e = eta / (1.0 + epoch as f64).sqrt();
        // Fisher-Yates shuffle, stdlib-only.
        for i in (1..order.len()).rev() {
            let j = (rand::Rng::gen_range(&mut rng, 0..=i)) as usize;
            order.swap(i, j);
        }
        for &idx in &order {
            let (s, a, sn) = samples[idx];
            let base = (s * n_actions + a) * n_states;
            let row = &mut logits[base..base + n_states];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for (i, l) in row.iter_mut().enumerate() {
                let p = exps[i] / z;
                let grad = p - if i == sn { 1.0 } else { 0.0 };
                *l -= eta_e * grad;
            }
        }
        if epoch >= tail_start {
            for (t, l) in tail_avg.iter_mut().zip(&logits) {
                *t += l;
            }
            tail_count += 1.0;
        }
    }
    tail_avg.iter_mut().for_each(|t| *t /= tail_count.max(1.0));
    // Softmax rows out.
    let mut kernel = vec![0.0; tail_avg.len()];
    for row_idx in 0..n_states * n_actions {
        let base = row_idx * n_states;
        let row = &tail_avg[base..base + n_states];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        for i in 0..n_states {
            kernel[base + i] = exps[i] / z;
        }
    }
    kernel
}

/// Draw transition samples from a tabular kernel under a pair distribution.
pub fn sample_transitions(
    mdp: &TabularMdp,
    d_pairs: &[f64],
    n: usize,
    seed: u64,
) -> Vec<(usize, usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let pair = sample_index(d_pairs, &mut rng);
            let (s, a) = (pair / mdp.n_actions, pair % mdp.n_actions);
            let sn = sample_index(mdp.row(s, a), &mut rng);
            (s, a, sn)
        })
        .collect()
}

/// Likelihood-optimal versus value-optimal model selection on the
/// minimal-noise instance.
#[derive(Clone, Debug, Serialize)]
pub struct MisspecReport {
    pub gap_mle: f64,
    pub gap_minimax: f64,
    pub kl_mle: f64,
    pub kl_minimax: f64,
    pub weight_mle: f64,
    pub weight_minimax: f64,
}

/// Selects both fits exactly by enumeration: the likelihood fit minimizes the
/// occupancy-weighted KL under the uniform-policy occupancy, the minimax fit
/// minimizes the worst-case value gap over the instance's policy set.
pub fn misspecification_demo(instance: &MinimalNoiseInstance) -> Result<MisspecReport, GameError> {
    let true_mdp = &instance.true_mdp;
    let uniform = TabularPolicy::uniform(true_mdp.n_states, true_mdp.n_actions);
    let occ = occupancy(true_mdp, &uniform)?;

    let mut best_kl = f64::INFINITY;
    let mut best_kl_idx = 0;
    let mut best_gap = f64::INFINITY;
    let mut best_gap_idx = 0;
    let mut kls = Vec::new();
    let mut gaps = Vec::new();
    for (i, model) in instance.model_class.iter().enumerate() {
        let kl = occupancy_weighted_divergence(true_mdp, model, &occ, Divergence::Kl, None)?;
        let (_, gap) = worst_case_gap(true_mdp, model, PolicyClass::GivenSet(&instance.policy_set))?;
        if kl < best_kl {
            best_kl = kl;
            best_kl_idx = i;
        }
        if gap < best_gap {
            best_gap = gap;
            best_gap_idx = i;
        }
        kls.push(kl);
        gaps.push(gap);
    }
    Ok(MisspecReport {
        gap_mle: gaps[best_kl_idx],
        gap_minimax: gaps[best_gap_idx],
        kl_mle: kls[best_kl_idx],
        kl_minimax: kls[best_gap_idx],
        weight_mle: instance.class_weights[best_kl_idx],
        weight_minimax: instance.class_weights[best_gap_idx],
    })
}
