//! Online model-learning game on tabular instances: an adversary picks a
//! policy each round, the learner pays the occupancy-weighted likelihood loss
//! and updates its kernel by exponentiated gradient. Regret is computed in
//! closed form (the realizable hindsight optimum is the true kernel), and the
//! per-round average value gap is checked against the likelihood bound
//! `γRmax/(1−γ)·sqrt(½·(approx + regret/T))`.

use super::{GameError, GameTrace, RoundRecord};
use crate::mdp::{occupancy, value_gap, worst_case_gap, PolicyClass, TabularMdp, TabularPolicy};
use crate::metrics::{expected_entropy, kl_slices, nll_loss_with_occupancy};

/// Who plays the policies.
#[derive(Clone, Debug)]
pub enum Adversary {
    /// Exact best response: optimal policy of the error MDP whose reward is
    /// the per-pair KL between true and current model rows.
    BestResponseErrorMdp,
    /// Enumerated worst-case value-gap policy.
    Enumeration,
    /// A fixed repeating sequence.
    FixedSequence(Vec<TabularPolicy>),
}

#[derive(Clone, Debug)]
pub struct OnlineGameConfig {
    pub rounds: usize,
    /// Exponentiated-gradient step size on the kernel rows.
    pub eg_rate: f64,
}

impl Default for OnlineGameConfig {
    fn default() -> Self {
        Self { rounds: 2000, eg_rate: 0.5 }
    }
}

#[derive(Clone, Debug)]
pub struct OnlineRound {
    pub nll: f64,
    pub value_gap: f64,
    pub entropy_term: f64,
    /// Cumulative regret against the best fixed kernel in hindsight.
    pub regret: f64,
    /// Running average value gap up to this round.
    pub avg_gap: f64,
    /// Likelihood bound on the running average gap.
    pub bound_rhs: f64,
}

#[derive(Debug)]
pub struct OnlineOutcome {
    pub trace: GameTrace,
    pub rounds: Vec<OnlineRound>,
    pub final_model: TabularMdp,
    /// Rounds where the average gap exceeded the bound (beyond 1e-8).
    pub violations: usize,
}

pub fn online_game(
    true_mdp: &TabularMdp,
    adversary: &Adversary,
    cfg: &OnlineGameConfig,
) -> Result<OnlineOutcome, GameError> {
    assert!(cfg.rounds > 0 && cfg.eg_rate > 0.0);
    let n = true_mdp.n_states;
    let na = true_mdp.n_actions;
    // Uniform-row initial model.
    let mut model = true_mdp.clone();
    for s in 0..n {
        for a in 0..na {
            model.row_mut(s, a).iter_mut().for_each(|v| *v = 1.0 / n as f64);
        }
    }

    let c = true_mdp.discount * true_mdp.r_max / (1.0 - true_mdp.discount);
    let mut trace = GameTrace::default();
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut sum_gap = 0.0;
    let mut sum_nll = 0.0;
    let mut sum_entropy = 0.0;
    let mut violations = 0usize;

    for t in 1..=cfg.rounds {
        let pi_t = pick_policy(true_mdp, &model, adversary, t)?;
        let occ = occupancy(true_mdp, &pi_t)?;
        let gap = value_gap(true_mdp, &model, &pi_t)?;
        let nll = nll_loss_with_occupancy(true_mdp, &model, &occ)?;
        if !nll.is_finite() {
            return Err(GameError::NonFinite { quantity: "likelihood loss", round: t });
        }
        let ent = expected_entropy(true_mdp, &occ);

        sum_gap += gap;
        sum_nll += nll;
        sum_entropy += ent;
        // Realizable class: the hindsight minimizer is the true kernel, so
        // the cumulative minimum loss is the cumulative entropy term.
        let regret = sum_nll - sum_entropy;
        let avg_gap = sum_gap / t as f64;
        let bound_rhs = c * (0.5 * sum_nll / t as f64).sqrt();
        if avg_gap > bound_rhs + 1e-8 {
            violations += 1;
        }
        rounds.push(OnlineRound { nll, value_gap: gap, entropy_term: ent, regret, avg_gap, bound_rhs });
        trace.push(RoundRecord {
            round: t,
            critic_obj: None,
            model_loss: Some(nll),
            value_gap: Some(gap),
            regret: Some(regret),
            nll: Some(nll),
            bound_rhs: Some(bound_rhs),
        });

        // Exponentiated-gradient step on every visited row. The raw gradient
        // −d(s,a)·p/q is unbounded near the simplex boundary, so the step is
        // normalized by the row's largest gradient entry; the direction is
        // exact and the multiplicative jump stays bounded by exp(η).
        for s in 0..n {
            for a in 0..na {
                if occ.get(s, a) == 0.0 {
                    continue;
                }
                let p = true_mdp.row(s, a).to_vec();
                let row = model.row_mut(s, a);
                let g_max = p
                    .iter()
                    .zip(row.iter())
                    .map(|(&ps, &q)| ps / q)
                    .fold(0.0f64, f64::max)
                    .max(1e-300);
                let mut total = 0.0;
                for (q, &ps) in row.iter_mut().zip(&p) {
                    *q *= (cfg.eg_rate * (ps / *q) / g_max).exp();
                    total += *q;
                }
                row.iter_mut().for_each(|q| *q /= total);
            }
        }
    }

    Ok(OnlineOutcome { trace, rounds, final_model: model, violations })
}

fn pick_policy(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    adversary: &Adversary,
    round: usize,
) -> Result<TabularPolicy, GameError> {
    match adversary {
        Adversary::BestResponseErrorMdp => {
            let mut rewards = vec![0.0; true_mdp.n_pairs()];
            let mut r_max = 1e-9f64;
            for s in 0..true_mdp.n_states {
                for a in 0..true_mdp.n_actions {
                    let v = kl_slices(true_mdp.row(s, a), model.row(s, a));
                    rewards[true_mdp.pair_index(s, a)] = v;
                    r_max = r_max.max(v);
                }
            }
            let err_base = TabularMdp::new(
                true_mdp.n_states,
                true_mdp.n_actions,
                true_mdp.transitions.clone(),
                rewards,
                true_mdp.discount,
                true_mdp.initial.clone(),
                r_max,
            )?;
            let (_, greedy) = crate::mdp::value_iteration(&err_base, 1e-10);
            Ok(greedy)
        }
        Adversary::Enumeration => {
            let (pi, _) = worst_case_gap(true_mdp, model, PolicyClass::AllDeterministic)?;
            Ok(pi)
        }
        Adversary::FixedSequence(seq) => Ok(seq[(round - 1) % seq.len()].clone()),
    }
}
