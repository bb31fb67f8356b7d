//! Error-reward MDPs: the true dynamics paired with the pointwise model
//! error as reward. Their optimal policies are maximally exploitative
//! adversaries, and their optimal values upper-bound the worst-case policy
//! value gap after scaling by γ·L_v.

use crate::mdp::{
    occupancy, policy_state_values, policy_value, value_iteration, worst_case_gap, MdpError,
    PolicyClass, StateMetric, TabularMdp, TabularPolicy,
};
use crate::metrics::{tv_slices, w1_slices};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ErrorMdpError {
    #[error("transport error reward needs a state metric")]
    MissingMetric,
    #[error("joint error reward needs model rewards of matching shape")]
    MissingModelRewards,
    #[error("value Lipschitz constant undefined: gamma*L_P = {0} >= 1")]
    ContractionViolated(f64),
    #[error("distinct states {0} and {1} at zero metric distance")]
    ZeroDistance(usize, usize),
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Which local error the reward measures.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ErrorMetricMode {
    /// Transport distance between kernel rows.
    W1,
    /// Total variation between kernel rows.
    Tv,
    /// `|r − r̂| + λ·W1(P, P̂)`; λ defaults to γ·L_v.
    JointW1 { lambda: Option<f64>, l_v: f64 },
    /// `|r − r̂| + λ·TV(P, P̂)`; λ defaults to γ·Rmax/(2(1−γ))
    /// (the scale matching the ℓ1 simulation decomposition).
    JointTv { lambda: Option<f64> },
}

/// True dynamics with the model-error reward.
#[derive(Clone, Debug)]
pub struct ErrorMdp {
    /// True kernel P, error rewards, same discount and start distribution.
    pub base: TabularMdp,
    pub mode: ErrorMetricMode,
}

impl ErrorMdp {
    pub fn err_reward(&self, s: usize, a: usize) -> f64 {
        self.base.reward(s, a)
    }
}

pub fn build_error_mdp(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    metric: Option<&StateMetric>,
    mode: ErrorMetricMode,
) -> Result<ErrorMdp, ErrorMdpError> {
    if !true_mdp.same_shape(model) {
        return Err(MdpError::ShapeMismatch { context: "error reward kernels".into() }.into());
    }
    let needs_metric = matches!(mode, ErrorMetricMode::W1 | ErrorMetricMode::JointW1 { .. });
    if needs_metric && metric.is_none() {
        return Err(ErrorMdpError::MissingMetric);
    }
    let gamma = true_mdp.discount;
    let mut rewards = vec![0.0; true_mdp.n_pairs()];
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            let p = true_mdp.row(s, a);
            let q = model.row(s, a);
            let idx = true_mdp.pair_index(s, a);
            rewards[idx] = match mode {
                ErrorMetricMode::W1 => w1_slices(p, q, metric.unwrap()),
                ErrorMetricMode::Tv => tv_slices(p, q),
                ErrorMetricMode::JointW1 { lambda, l_v } => {
                    let lam = lambda.unwrap_or(gamma * l_v);
                    (true_mdp.reward(s, a) - model.reward(s, a)).abs()
                        + lam * w1_slices(p, q, metric.unwrap())
                }
                ErrorMetricMode::JointTv { lambda } => {
                    let lam = lambda.unwrap_or(gamma * true_mdp.r_max / (2.0 * (1.0 - gamma)));
                    // TV is half the ℓ1 distance, so the ℓ1 scale doubles here.
                    (true_mdp.reward(s, a) - model.reward(s, a)).abs() + lam * 2.0 * tv_slices(p, q)
                }
            };
        }
    }
    let r_max = rewards.iter().cloned().fold(0.0f64, f64::max).max(1e-9);
    let base = TabularMdp::new(
        true_mdp.n_states,
        true_mdp.n_actions,
        true_mdp.transitions.clone(),
        rewards,
        gamma,
        true_mdp.initial.clone(),
        r_max,
    )?;
    Ok(ErrorMdp { base, mode })
}

/// Optimal error-seeking policy and the ρ0-weighted optimal value, using the
/// same unnormalized discounted convention as the occupancies.
pub fn solve_error_mdp(emdp: &ErrorMdp, tol: f64) -> Result<(TabularPolicy, f64), ErrorMdpError> {
    let (_, greedy) = value_iteration(&emdp.base, tol);
    // Exact solve of the greedy policy rather than the iterated values.
    let v_star = policy_value(&emdp.base, &greedy)?;
    Ok((greedy, v_star))
}

/// One duality record, JSON-serializable.
#[derive(Clone, Debug, Serialize)]
pub struct DualityReport {
    pub instance_hash: String,
    pub lhs: f64,
    pub rhs: f64,
    pub l_v: f64,
    pub v_star: f64,
    pub holds: bool,
    /// lhs/rhs when rhs > 0; tightness diagnostic, no assertion attached.
    pub ratio: f64,
}

/// Checks `sup_π |V_π(P) − V_π(P̂)| ≤ γ·L_v·V*(M_err)` by exact enumeration
/// over deterministic policies. `l_v` must be a uniform Lipschitz bound on
/// the model's value functions over that class.
pub fn duality_check(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    metric: &StateMetric,
    l_v: f64,
) -> Result<DualityReport, ErrorMdpError> {
    let (_, lhs) = worst_case_gap(true_mdp, model, PolicyClass::AllDeterministic)?;
    let emdp = build_error_mdp(true_mdp, model, Some(metric), ErrorMetricMode::W1)?;
    let (_, v_star) = solve_error_mdp(&emdp, 1e-10)?;
    let rhs = true_mdp.discount * l_v * v_star;
    Ok(DualityReport {
        instance_hash: format!("{:016x}", true_mdp.fingerprint() ^ model.fingerprint().rotate_left(17)),
        lhs,
        rhs,
        l_v,
        v_star,
        holds: lhs <= rhs + 1e-8,
        ratio: if rhs > 0.0 { lhs / rhs } else { 1.0 },
    })
}

/// `L_v = L_r / (1 − γ·L_P)` from reward and kernel Lipschitz moduli.
pub fn lipschitz_value_constant(l_r: f64, l_p: f64, gamma: f64) -> Result<f64, ErrorMdpError> {
    let contraction = gamma * l_p;
    if contraction >= 1.0 {
        return Err(ErrorMdpError::ContractionViolated(contraction));
    }
    Ok(l_r / (1.0 - contraction))
}

/// Largest value increment per unit metric distance for one policy.
pub fn empirical_value_lipschitz(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    metric: &StateMetric,
) -> Result<f64, ErrorMdpError> {
    let v = policy_state_values(mdp, pi)?;
    let mut worst = 0.0f64;
    for i in 0..mdp.n_states {
        for j in i + 1..mdp.n_states {
            let d = metric.get(i, j);
            if d == 0.0 {
                return Err(ErrorMdpError::ZeroDistance(i, j));
            }
            worst = worst.max((v[i] - v[j]).abs() / d);
        }
    }
    Ok(worst)
}

/// Uniform empirical Lipschitz bound of a model's value functions over all
/// deterministic policies.
pub fn uniform_value_lipschitz(model: &TabularMdp, metric: &StateMetric) -> Result<f64, ErrorMdpError> {
    let mut worst = 0.0f64;
    for pi in crate::mdp::DeterministicPolicies::new(model.n_states, model.n_actions) {
        worst = worst.max(empirical_value_lipschitz(model, &pi, metric)?);
    }
    Ok(worst)
}

/// Reward and kernel Lipschitz moduli realized by an instance.
pub fn instance_moduli(mdp: &TabularMdp, metric: &StateMetric) -> Result<(f64, f64), ErrorMdpError> {
    let mut l_r = 0.0f64;
    let mut l_p = 0.0f64;
    for a in 0..mdp.n_actions {
        for i in 0..mdp.n_states {
            for j in i + 1..mdp.n_states {
                let d = metric.get(i, j);
                if d == 0.0 {
                    return Err(ErrorMdpError::ZeroDistance(i, j));
                }
                l_r = l_r.max((mdp.reward(i, a) - mdp.reward(j, a)).abs() / d);
                l_p = l_p.max(w1_slices(mdp.row(i, a), mdp.row(j, a), metric) / d);
            }
        }
    }
    Ok((l_r, l_p))
}

/// Occupancy of the error-seeking policy concentrated on one pair; used by
/// tests and the active loop to compare against enumeration.
pub fn pair_visitation(mdp: &TabularMdp, pi: &TabularPolicy, s: usize, a: usize) -> Result<f64, ErrorMdpError> {
    Ok(occupancy(mdp, pi)?.get(s, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_tabular;
    use crate::mdp::DeterministicPolicies;
    use crate::testutil::random_policy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn line_metric(n: usize) -> StateMetric {
        StateMetric::from_line(&(0..n).map(|i| i as f64).collect::<Vec<_>>())
    }

    fn corrupt_row(mdp: &TabularMdp, s: usize, a: usize, seed: u64) -> TabularMdp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = mdp.clone();
        let row = out.row_mut(s, a);
        for v in row.iter_mut() {
            *v = (*v + rng.gen_range(0.1..0.8)).max(1e-6);
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= sum);
        out
    }

    #[test]
    fn exact_model_gives_zero_error_reward() {
        let mdp = make_random_tabular(3, 2, 0.0, 1).unwrap();
        let metric = line_metric(3);
        for mode in [ErrorMetricMode::W1, ErrorMetricMode::Tv] {
            let emdp = build_error_mdp(&mdp, &mdp, Some(&metric), mode).unwrap();
            assert!(emdp.base.rewards.iter().all(|r| *r == 0.0));
        }
    }

    #[test]
    fn single_corrupted_row_matches_pointwise_oracle() {
        let mdp = make_random_tabular(4, 2, 0.0, 2).unwrap();
        let model = corrupt_row(&mdp, 2, 1, 7);
        let metric = line_metric(4);
        let emdp = build_error_mdp(&mdp, &model, Some(&metric), ErrorMetricMode::W1).unwrap();
        for s in 0..4 {
            for a in 0..2 {
                let expect = if (s, a) == (2, 1) {
                    w1_slices(mdp.row(2, 1), model.row(2, 1), &metric)
                } else {
                    0.0
                };
                assert!((emdp.err_reward(s, a) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn joint_mode_reduces_to_each_pure_mode() {
        let mdp = make_random_tabular(3, 2, 0.0, 3).unwrap();
        let metric = line_metric(3);

        // Only reward corruption: joint error equals |r − r̂|.
        let mut reward_off = mdp.clone();
        reward_off.rewards[1] = (reward_off.rewards[1] + 0.3).min(1.0);
        let emdp =
            build_error_mdp(&mdp, &reward_off, Some(&metric), ErrorMetricMode::JointW1 { lambda: None, l_v: 2.0 })
                .unwrap();
        for s in 0..3 {
            for a in 0..2 {
                let expect = (mdp.reward(s, a) - reward_off.reward(s, a)).abs();
                assert!((emdp.err_reward(s, a) - expect).abs() < 1e-12);
            }
        }

        // Only dynamics corruption: joint error equals λ times the pure mode.
        let dyn_off = corrupt_row(&mdp, 0, 0, 9);
        let l_v = 2.0;
        let joint =
            build_error_mdp(&mdp, &dyn_off, Some(&metric), ErrorMetricMode::JointW1 { lambda: None, l_v }).unwrap();
        let pure = build_error_mdp(&mdp, &dyn_off, Some(&metric), ErrorMetricMode::W1).unwrap();
        let lam = mdp.discount * l_v;
        for idx in 0..mdp.n_pairs() {
            assert!((joint.base.rewards[idx] - lam * pure.base.rewards[idx]).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_metric_is_an_error() {
        let mdp = make_random_tabular(3, 2, 0.0, 4).unwrap();
        assert!(matches!(
            build_error_mdp(&mdp, &mdp, None, ErrorMetricMode::W1),
            Err(ErrorMdpError::MissingMetric)
        ));
    }

    #[test]
    fn zero_error_reward_solves_to_zero_value() {
        let mdp = make_random_tabular(3, 2, 0.0, 5).unwrap();
        let metric = line_metric(3);
        let emdp = build_error_mdp(&mdp, &mdp, Some(&metric), ErrorMetricMode::W1).unwrap();
        let (_, v_star) = solve_error_mdp(&emdp, 1e-10).unwrap();
        assert!(v_star.abs() < 1e-12);
    }

    #[test]
    fn adversary_maximizes_visitation_of_the_corrupted_pair() {
        for seed in 0..10 {
            let mdp = make_random_tabular(3, 2, 0.0, 100 + seed).unwrap();
            let model = corrupt_row(&mdp, 1, 0, seed);
            let metric = line_metric(3);
            let emdp = build_error_mdp(&mdp, &model, Some(&metric), ErrorMetricMode::W1).unwrap();
            let (adv, _) = solve_error_mdp(&emdp, 1e-10).unwrap();
            let adv_visit = pair_visitation(&mdp, &adv, 1, 0).unwrap();
            let mut best = 0.0f64;
            for pi in DeterministicPolicies::new(3, 2) {
                best = best.max(pair_visitation(&mdp, &pi, 1, 0).unwrap());
            }
            assert!(adv_visit >= best - 1e-8, "adversary visits {adv_visit}, enumeration best {best}");
        }
    }

    #[test]
    fn optimal_value_dominates_random_policies() {
        let mdp = make_random_tabular(4, 2, 0.0, 6).unwrap();
        let model = corrupt_row(&mdp, 3, 1, 11);
        let metric = line_metric(4);
        let emdp = build_error_mdp(&mdp, &model, Some(&metric), ErrorMetricMode::W1).unwrap();
        let (_, v_star) = solve_error_mdp(&emdp, 1e-10).unwrap();
        for seed in 0..50 {
            let pi = random_policy(4, 2, seed);
            let v = policy_value(&emdp.base, &pi).unwrap();
            assert!(v <= v_star + 1e-8);
        }
    }

    #[test]
    fn duality_trivial_for_exact_model() {
        let mdp = make_random_tabular(3, 2, 0.0, 7).unwrap();
        let metric = line_metric(3);
        let l_v = uniform_value_lipschitz(&mdp, &metric).unwrap();
        let rep = duality_check(&mdp, &mdp, &metric, l_v).unwrap();
        assert!(rep.lhs.abs() < 1e-12 && rep.rhs.abs() < 1e-12 && rep.holds);
    }

    #[test]
    fn duality_holds_on_corrupted_instances() {
        for seed in 0..100 {
            let mdp = make_random_tabular(3, 2, 0.0, 700 + seed).unwrap();
            let model = corrupt_row(&mdp, (seed % 3) as usize, (seed % 2) as usize, seed ^ 0xf0);
            let metric = line_metric(3);
            let l_v = uniform_value_lipschitz(&model, &metric).unwrap();
            let rep = duality_check(&mdp, &model, &metric, l_v).unwrap();
            assert!(rep.holds, "duality violated at seed {seed}: lhs {} rhs {}", rep.lhs, rep.rhs);
        }
    }

    #[test]
    fn duality_report_serializes() {
        let mdp = make_random_tabular(3, 2, 0.0, 8).unwrap();
        let metric = line_metric(3);
        let rep = duality_check(&mdp, &mdp, &metric, 1.0).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        assert!(json.contains("instance_hash") && json.contains("v_star"));
    }

    #[test]
    fn value_constant_closed_forms() {
        assert_eq!(lipschitz_value_constant(3.0, 0.0, 0.9).unwrap(), 3.0);
        assert_eq!(lipschitz_value_constant(1.0, 1.0, 0.5).unwrap(), 2.0);
        assert!(matches!(
            lipschitz_value_constant(1.0, 2.0, 0.5),
            Err(ErrorMdpError::ContractionViolated(_))
        ));
    }

    #[test]
    fn constant_reward_has_zero_empirical_lipschitz() {
        let mdp = make_random_tabular(4, 2, 0.0, 9).unwrap();
        let flat = mdp.with_rewards(vec![0.5; mdp.n_pairs()], 1.0).unwrap();
        let metric = line_metric(4);
        let pi = random_policy(4, 2, 3);
        let l = empirical_value_lipschitz(&flat, &pi, &metric).unwrap();
        assert!(l < 1e-9, "lipschitz {l}");
    }

    /// Shift-invariant random-walk chain: the kernel modulus stays at most 1,
    /// so the closed-form constant applies.
    fn smooth_chain(n: usize, gamma: f64, l_r: f64, seed: u64) -> (TabularMdp, StateMetric) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_actions = 2;
        let mut transitions = vec![0.0; n * n_actions * n];
        // Per-action step distribution over {-1, 0, +1}, shared across states.
        for a in 0..n_actions {
            let mut step = [rng.gen::<f64>(), rng.gen::<f64>(), rng.gen::<f64>()];
            let sum: f64 = step.iter().sum();
            step.iter_mut().for_each(|v| *v /= sum);
            for s in 0..n {
                let base = (s * n_actions + a) * n;
                let lo = s.saturating_sub(1);
                let hi = (s + 1).min(n - 1);
                transitions[base + lo] += step[0];
                transitions[base + s] += step[1];
                transitions[base + hi] += step[2];
            }
        }
        let mut rewards = vec![0.0; n * n_actions];
        for a in 0..n_actions {
            let offset = rng.gen_range(0.0..0.2);
            for s in 0..n {
                rewards[s * n_actions + a] = (offset + l_r * s as f64).min(1.0);
            }
        }
        let mdp = TabularMdp::new(n, n_actions, transitions, rewards, gamma, vec![1.0 / n as f64; n], 1.0).unwrap();
        (mdp, line_metric(n))
    }

    #[test]
    fn empirical_lipschitz_below_closed_form_on_chains() {
        // The closed-form constant assumes the per-action moduli carry over to
        // the policy-induced kernel, which holds for state-constant action
        // mixtures (a state-varying policy adds modulus of its own).
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for seed in 0..50 {
            let (mdp, metric) = smooth_chain(5, 0.5, 0.12, 1000 + seed);
            let (l_r, l_p) = instance_moduli(&mdp, &metric).unwrap();
            let bound = lipschitz_value_constant(l_r, l_p, mdp.discount).unwrap();
            for _ in 0..8 {
                let w: f64 = rng.gen();
                let mut probs = vec![0.0; 10];
                for s in 0..5 {
                    probs[s * 2] = w;
                    probs[s * 2 + 1] = 1.0 - w;
                }
                let pi = TabularPolicy::new(5, 2, probs).unwrap();
                let emp = empirical_value_lipschitz(&mdp, &pi, &metric).unwrap();
                assert!(emp <= bound + 1e-9, "empirical {emp} above bound {bound}");
            }
        }
    }

    #[test]
    fn two_state_instance_saturates_the_constant() {
        // Two absorbing states with reward difference l_r at unit distance:
        // the value gap per distance hits l_r/(1−γ) exactly.
        let gamma = 0.7;
        let l_r = 0.3;
        let mdp = TabularMdp::new(
            2,
            1,
            vec![1.0, 0.0, 0.0, 1.0],
            vec![0.2, 0.2 + l_r],
            gamma,
            vec![0.5, 0.5],
            1.0,
        )
        .unwrap();
        let metric = line_metric(2);
        let (l_r_got, l_p) = instance_moduli(&mdp, &metric).unwrap();
        assert!((l_r_got - l_r).abs() < 1e-12);
        let bound = lipschitz_value_constant(l_r_got, l_p, gamma).unwrap();
        let emp = empirical_value_lipschitz(&mdp, &TabularPolicy::uniform(2, 1), &metric).unwrap();
        assert!(emp <= bound + 1e-12);
        assert!(emp >= 0.9 * bound, "saturation too loose: {emp} vs {bound}");
    }

    #[test]
    fn zero_distance_distinct_states_error() {
        let mdp = make_random_tabular(2, 1, 0.0, 1).unwrap();
        let metric = StateMetric::from_line(&[1.0, 1.0]);
        let err = empirical_value_lipschitz(&mdp, &TabularPolicy::uniform(2, 1), &metric);
        assert!(matches!(err, Err(ErrorMdpError::ZeroDistance(0, 1))));
    }
}
