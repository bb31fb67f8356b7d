//! Exact finite-MDP machinery: policies, occupancies, value evaluation and
//! best responses. Everything here is solved with dense linear algebra so the
//! results are oracle-grade for bound verification.

use crate::linalg;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum MdpError {
    #[error("transition row ({state},{action}) sums to {sum}, expected 1")]
    BadTransitionRow { state: usize, action: usize, sum: f64 },
    #[error("negative probability in transition row ({state},{action})")]
    NegativeProbability { state: usize, action: usize },
    #[error("reward r({state},{action}) = {value} outside [0, {r_max}]")]
    RewardOutOfRange { state: usize, action: usize, value: f64, r_max: f64 },
    #[error("initial distribution sums to {sum}, expected 1")]
    BadInitial { sum: f64 },
    #[error("discount {gamma} outside (0, 1)")]
    BadDiscount { gamma: f64 },
    #[error("policy row for state {state} sums to {sum}, expected 1")]
    BadPolicyRow { state: usize, sum: f64 },
    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },
    #[error("numerical solve failed: residual {residual} above {limit}")]
    SolveResidual { residual: f64, limit: f64 },
    #[error("deterministic policy enumeration needs {needed} policies, budget is {budget}")]
    EnumerationBudget { needed: f64, budget: usize },
    #[error(transparent)]
    Solve(#[from] linalg::SolveError),
    #[error("metric violates {axiom} at states ({i},{j},{k})")]
    BadMetric { axiom: &'static str, i: usize, j: usize, k: usize },
}

const ROW_SUM_TOL: f64 = 1e-9;
const SOLVE_RESIDUAL_LIMIT: f64 = 1e-8;

/// Finite discounted MDP with dense transition tensor and reward matrix.
///
/// `transitions[s][a]` is a probability row over next states, `rewards[s][a]`
/// lies in `[0, r_max]`, and `initial` is the start-state distribution.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a][s']`.
    pub transitions: Vec<f64>,
    /// Row-major `[s][a]`.
    pub rewards: Vec<f64>,
    pub discount: f64,
    pub initial: Vec<f64>,
    pub r_max: f64,
}

impl TabularMdp {
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        discount: f64,
        initial: Vec<f64>,
        r_max: f64,
    ) -> Result<Self, MdpError> {
        let mdp = Self { n_states, n_actions, transitions, rewards, discount, initial, r_max };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let (s, a) = (self.n_states, self.n_actions);
        if self.transitions.len() != s * a * s || self.rewards.len() != s * a || self.initial.len() != s {
            return Err(MdpError::ShapeMismatch { context: "tensor sizes vs state/action counts".into() });
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(MdpError::BadDiscount { gamma: self.discount });
        }
        for st in 0..s {
            for ac in 0..a {
                let row = self.row(st, ac);
                if row.iter().any(|&p| p < 0.0) {
                    return Err(MdpError::NegativeProbability { state: st, action: ac });
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(MdpError::BadTransitionRow { state: st, action: ac, sum });
                }
                let r = self.reward(st, ac);
                if !(0.0..=self.r_max + 1e-12).contains(&r) {
                    return Err(MdpError::RewardOutOfRange { state: st, action: ac, value: r, r_max: self.r_max });
                }
            }
        }
        let rho_sum: f64 = self.initial.iter().sum();
        if (rho_sum - 1.0).abs() > ROW_SUM_TOL || self.initial.iter().any(|&p| p < 0.0) {
            return Err(MdpError::BadInitial { sum: rho_sum });
        }
        Ok(())
    }

    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    pub fn row_mut(&mut self, s: usize, a: usize) -> &mut [f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &mut self.transitions[base..base + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    /// Flat index of the state-action pair.
    #[inline]
    pub fn pair_index(&self, s: usize, a: usize) -> usize {
        s * self.n_actions + a
    }

    /// Same state/action spaces as `other`.
    pub fn same_shape(&self, other: &TabularMdp) -> bool {
        self.n_states == other.n_states && self.n_actions == other.n_actions
    }

    /// Stable fingerprint of the instance (kernel, rewards, discount, initial).
    pub fn fingerprint(&self) -> u64 {
        let mut all = self.transitions.clone();
        all.extend_from_slice(&self.rewards);
        all.push(self.discount);
        all.extend_from_slice(&self.initial);
        all.push(self.r_max);
        linalg::fingerprint_f64(&all)
    }

    /// Copy with a different reward matrix, same dynamics.
    pub fn with_rewards(&self, rewards: Vec<f64>, r_max: f64) -> Result<Self, MdpError> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transitions.clone(),
            rewards,
            self.discount,
            self.initial.clone(),
            r_max,
        )
    }
}

/// Stationary stochastic policy; one probability row per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a]`.
    pub probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self, MdpError> {
        if probs.len() != n_states * n_actions {
            return Err(MdpError::ShapeMismatch { context: "policy matrix size".into() });
        }
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL || row.iter().any(|&p| p < 0.0) {
                return Err(MdpError::BadPolicyRow { state: s, sum });
            }
        }
        Ok(Self { n_states, n_actions, probs })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    /// One-hot policy from an action index per state.
    pub fn deterministic(n_states: usize, n_actions: usize, actions: &[usize]) -> Self {
        assert_eq!(actions.len(), n_states);
        let mut probs = vec![0.0; n_states * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            probs[s * n_actions + a] = 1.0;
        }
        Self { n_states, n_actions, probs }
    }

    #[inline]
    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    /// State-wise mixture of two policies with weight `w` on `self`.
    pub fn mix(&self, other: &TabularPolicy, w: f64) -> TabularPolicy {
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(p, q)| w * p + (1.0 - w) * q)
            .collect();
        TabularPolicy { n_states: self.n_states, n_actions: self.n_actions, probs }
    }
}

/// Unnormalized discounted state-action visitation; total mass 1/(1−γ).
#[derive(Clone, Debug)]
pub struct OccupancyMeasure {
    pub n_states: usize,
    pub n_actions: usize,
    /// Row-major `[s][a]`.
    pub d: Vec<f64>,
}

impl OccupancyMeasure {
    #[inline]
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.d[s * self.n_actions + a]
    }

    pub fn mass(&self) -> f64 {
        self.d.iter().sum()
    }

    /// Probability distribution over pairs (mass divided out).
    pub fn normalized(&self) -> Vec<f64> {
        let m = self.mass();
        self.d.iter().map(|v| v / m).collect()
    }
}

/// Symmetric state metric with zero diagonal; optionally backed by 1-D
/// coordinates, which unlocks the closed-form transport distance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StateMetric {
    pub n_states: usize,
    /// Row-major `[s][s']`.
    pub dist: Vec<f64>,
    /// Set when the metric is |x_i − x_j| over these coordinates.
    pub line_coords: Option<Vec<f64>>,
}

impl StateMetric {
    pub fn from_matrix(n_states: usize, dist: Vec<f64>) -> Result<Self, MdpError> {
        if dist.len() != n_states * n_states {
            return Err(MdpError::ShapeMismatch { context: "metric matrix size".into() });
        }
        let m = Self { n_states, dist, line_coords: None };
        m.validate()?;
        Ok(m)
    }

    /// Metric |x_i − x_j| induced by per-state coordinates on the line.
    pub fn from_line(coords: &[f64]) -> Self {
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                dist[i * n + j] = (coords[i] - coords[j]).abs();
            }
        }
        Self { n_states: n, dist, line_coords: Some(coords.to_vec()) }
    }

    /// Unit discrete metric; W1 under it equals TV.
    pub fn discrete(n_states: usize) -> Self {
        let mut dist = vec![1.0; n_states * n_states];
        for i in 0..n_states {
            dist[i * n_states + i] = 0.0;
        }
        Self { n_states, dist, line_coords: None }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.n_states + j]
    }

    pub fn validate(&self) -> Result<(), MdpError> {
        let n = self.n_states;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(MdpError::BadMetric { axiom: "zero diagonal", i, j: i, k: i });
            }
            for j in 0..n {
                if self.get(i, j) < 0.0 {
                    return Err(MdpError::BadMetric { axiom: "nonnegativity", i, j, k: j });
                }
                if (self.get(i, j) - self.get(j, i)).abs() > 1e-12 {
                    return Err(MdpError::BadMetric { axiom: "symmetry", i, j, k: j });
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    if self.get(i, j) > self.get(i, k) + self.get(k, j) + 1e-12 {
                        return Err(MdpError::BadMetric { axiom: "triangle inequality", i, j, k });
                    }
                }
            }
        }
        Ok(())
    }
}

/// State-to-state kernel under a fixed policy: `P_π(s' | s)`.
fn policy_kernel(mdp: &TabularMdp, pi: &TabularPolicy) -> Vec<f64> {
    let n = mdp.n_states;
    let mut k = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..mdp.n_actions {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            let row = mdp.row(s, a);
            for (sn, &p) in row.iter().enumerate() {
                k[s * n + sn] += w * p;
            }
        }
    }
    k
}

/// Exact discounted occupancy: solves the flow balance system
/// `μ = ρ0 + γ P_πᵀ μ` and spreads state mass over actions by π.
pub fn occupancy(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<OccupancyMeasure, MdpError> {
    check_policy_shape(mdp, pi)?;
    let n = mdp.n_states;
    let k = policy_kernel(mdp, pi);
    // (I − γ Kᵀ) μ = ρ0
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = if i == j { 1.0 } else { 0.0 } - mdp.discount * k[j * n + i];
        }
    }
    let mu = linalg::solve(a.clone(), mdp.initial.clone())?;
    let res = linalg::residual(&a, &mu, &mdp.initial);
    if res > SOLVE_RESIDUAL_LIMIT {
        return Err(MdpError::SolveResidual { residual: res, limit: SOLVE_RESIDUAL_LIMIT });
    }
    let mut d = vec![0.0; mdp.n_pairs()];
    for s in 0..n {
        for ac in 0..mdp.n_actions {
            d[s * mdp.n_actions + ac] = mu[s] * pi.prob(s, ac);
        }
    }
    Ok(OccupancyMeasure { n_states: n, n_actions: mdp.n_actions, d })
}

/// ρ0-weighted policy value via the exact Bellman solve
/// `(I − γ P_π) V = r_π`.
pub fn policy_value(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<f64, MdpError> {
    let v = policy_state_values(mdp, pi)?;
    Ok(v.iter().zip(&mdp.initial).map(|(v, r)| v * r).sum())
}

/// Per-state values of a fixed policy.
pub fn policy_state_values(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<Vec<f64>, MdpError> {
    check_policy_shape(mdp, pi)?;
    let n = mdp.n_states;
    let k = policy_kernel(mdp, pi);
    let mut a = vec![0.0; n * n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        for j in 0..n {
            a[s * n + j] = if s == j { 1.0 } else { 0.0 } - mdp.discount * k[s * n + j];
        }
        for ac in 0..mdp.n_actions {
            b[s] += pi.prob(s, ac) * mdp.reward(s, ac);
        }
    }
    let v = linalg::solve(a.clone(), b.clone())?;
    let res = linalg::residual(&a, &v, &b);
    if res > SOLVE_RESIDUAL_LIMIT {
        return Err(MdpError::SolveResidual { residual: res, limit: SOLVE_RESIDUAL_LIMIT });
    }
    Ok(v)
}

/// |V_π(P) − V_π(P̂)| for two kernels sharing rewards.
pub fn value_gap(true_mdp: &TabularMdp, model: &TabularMdp, pi: &TabularPolicy) -> Result<f64, MdpError> {
    if !true_mdp.same_shape(model) {
        return Err(MdpError::ShapeMismatch { context: "value_gap kernels".into() });
    }
    Ok((policy_value(true_mdp, pi)? - policy_value(model, pi)?).abs())
}

/// Policy class for the worst-case search.
pub enum PolicyClass<'a> {
    /// Every deterministic stationary policy (guarded enumeration).
    AllDeterministic,
    /// An explicit set.
    GivenSet(&'a [TabularPolicy]),
}

pub const ENUMERATION_BUDGET: usize = 1_000_000;

/// Iterator over all deterministic stationary policies, lowest action indices
/// first (mixed-radix counter over states).
pub struct DeterministicPolicies {
    n_states: usize,
    n_actions: usize,
    actions: Vec<usize>,
    done: bool,
}

impl DeterministicPolicies {
    pub fn new(n_states: usize, n_actions: usize) -> Self {
        Self { n_states, n_actions, actions: vec![0; n_states], done: n_states == 0 || n_actions == 0 }
    }

    pub fn count(n_states: usize, n_actions: usize) -> f64 {
        (n_actions as f64).powi(n_states as i32)
    }
}

impl Iterator for DeterministicPolicies {
    type Item = TabularPolicy;

    fn next(&mut self) -> Option<TabularPolicy> {
        if self.done {
            return None;
        }
        let pol = TabularPolicy::deterministic(self.n_states, self.n_actions, &self.actions);
        let mut s = 0;
        loop {
            if s == self.n_states {
                self.done = true;
                break;
            }
            self.actions[s] += 1;
            if self.actions[s] < self.n_actions {
                break;
            }
            self.actions[s] = 0;
            s += 1;
        }
        Some(pol)
    }
}

/// sup over the policy class of |V_π(P) − V_π(P̂)|; returns the argmax policy.
pub fn worst_case_gap(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    class: PolicyClass,
) -> Result<(TabularPolicy, f64), MdpError> {
    if !true_mdp.same_shape(model) {
        return Err(MdpError::ShapeMismatch { context: "worst_case_gap kernels".into() });
    }
    let mut best: Option<(TabularPolicy, f64)> = None;
    let mut consider = |pi: TabularPolicy, gap: f64| {
        if best.as_ref().map_or(true, |(_, g)| gap > *g) {
            best = Some((pi, gap));
        }
    };
    match class {
        PolicyClass::AllDeterministic => {
            let needed = DeterministicPolicies::count(true_mdp.n_states, true_mdp.n_actions);
            if needed > ENUMERATION_BUDGET as f64 {
                return Err(MdpError::EnumerationBudget { needed, budget: ENUMERATION_BUDGET });
            }
            for pi in DeterministicPolicies::new(true_mdp.n_states, true_mdp.n_actions) {
                let gap = value_gap(true_mdp, model, &pi)?;
                consider(pi, gap);
            }
        }
        PolicyClass::GivenSet(set) => {
            for pi in set {
                let gap = value_gap(true_mdp, model, pi)?;
                consider(pi.clone(), gap);
            }
        }
    }
    best.ok_or(MdpError::ShapeMismatch { context: "empty policy class".into() })
}

/// Value iteration to sup-norm Bellman residual ≤ tol. Greedy ties break to
/// the lowest action index.
pub fn value_iteration(mdp: &TabularMdp, tol: f64) -> (Vec<f64>, TabularPolicy) {
    assert!(tol > 0.0, "tolerance must be positive");
    let n = mdp.n_states;
    let mut v = vec![0.0; n];
    loop {
        let mut next = vec![0.0; n];
        let mut delta = 0.0f64;
        for s in 0..n {
            let mut best = f64::NEG_INFINITY;
            for a in 0..mdp.n_actions {
                let row = mdp.row(s, a);
                let q = mdp.reward(s, a)
                    + mdp.discount * row.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
                if q > best {
                    best = q;
                }
            }
            next[s] = best;
            delta = delta.max((next[s] - v[s]).abs());
        }
        v = next;
        // Contraction: residual of v is within delta·γ/(1−γ) of zero.
        if delta * mdp.discount / (1.0 - mdp.discount) <= tol {
            break;
        }
    }
    let mut actions = vec![0usize; n];
    for s in 0..n {
        let mut best = f64::NEG_INFINITY;
        for a in 0..mdp.n_actions {
            let row = mdp.row(s, a);
            let q = mdp.reward(s, a)
                + mdp.discount * row.iter().zip(&v).map(|(p, vv)| p * vv).sum::<f64>();
            if q > best + 1e-15 {
                best = q;
                actions[s] = a;
            }
        }
    }
    (v, TabularPolicy::deterministic(n, mdp.n_actions, &actions))
}

fn check_policy_shape(mdp: &TabularMdp, pi: &TabularPolicy) -> Result<(), MdpError> {
    if pi.n_states != mdp.n_states || pi.n_actions != mdp.n_actions {
        return Err(MdpError::ShapeMismatch { context: "policy vs MDP".into() });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::make_random_tabular;
    use crate::testutil::random_policy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_state_mdp(gamma: f64, reward: f64) -> TabularMdp {
        TabularMdp::new(1, 1, vec![1.0], vec![reward], gamma, vec![1.0], reward.max(1.0)).unwrap()
    }

    #[test]
    fn occupancy_single_state_is_geometric_mass() {
        let mdp = single_state_mdp(0.9, 1.0);
        let d = occupancy(&mdp, &TabularPolicy::uniform(1, 1)).unwrap();
        assert!((d.get(0, 0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn occupancy_two_state_cycle_is_symmetric() {
        // Deterministic 2-cycle, uniform start, γ=0.5: each pair carries mass 1.
        let transitions = vec![
            0.0, 1.0, // s0 -> s1
            1.0, 0.0, // s1 -> s0
        ];
        let mdp = TabularMdp::new(2, 1, transitions, vec![0.0, 0.0], 0.5, vec![0.5, 0.5], 1.0).unwrap();
        let d = occupancy(&mdp, &TabularPolicy::uniform(2, 1)).unwrap();
        assert!((d.get(0, 0) - 1.0).abs() < 1e-9);
        assert!((d.get(1, 0) - 1.0).abs() < 1e-9);
    }

    /// Truncated-rollout visitation oracle, independent of the linear solve.
    fn rollout_occupancy(mdp: &TabularMdp, pi: &TabularPolicy, horizon: usize, n_traj: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts = vec![0.0; mdp.n_pairs()];
        for _ in 0..n_traj {
            let mut s = sample_index(&mdp.initial, &mut rng);
            let mut disc = 1.0;
            for _ in 0..horizon {
                let a = sample_index(&pi.probs[s * mdp.n_actions..(s + 1) * mdp.n_actions], &mut rng);
                counts[s * mdp.n_actions + a] += disc;
                disc *= mdp.discount;
                s = sample_index(mdp.row(s, a), &mut rng);
            }
        }
        counts.iter().map(|c| c / n_traj as f64).collect()
    }

    fn sample_index(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
        let mut u: f64 = rng.gen();
        for (i, &p) in probs.iter().enumerate() {
            u -= p;
            if u <= 0.0 {
                return i;
            }
        }
        probs.len() - 1
    }

    #[test]
    fn occupancy_matches_rollout_oracle() {
        let mdp = make_random_tabular(3, 2, 0.0, 11).unwrap();
        let pi = TabularPolicy::uniform(3, 2);
        let d = occupancy(&mdp, &pi).unwrap();
        let oracle = rollout_occupancy(&mdp, &pi, 200, 200_000, 5);
        for (exact, sampled) in d.d.iter().zip(&oracle) {
            assert!(
                (exact - sampled).abs() < 1e-1 && (exact - sampled).abs() / d.mass() < 1e-4 * 10.0,
                "exact {exact} vs rollout {sampled}"
            );
        }
        // Per-pair agreement at the spec tolerance relative to total mass.
        let worst = d.d.iter().zip(&oracle).map(|(e, s)| (e - s).abs()).fold(0.0f64, f64::max);
        assert!(worst < 5e-3, "worst deviation {worst}");
    }

    #[test]
    fn occupancy_mass_is_geometric_on_random_instances() {
        for seed in 0..100 {
            let mdp = make_random_tabular(2 + (seed as usize % 5), 1 + (seed as usize % 3), 0.3, seed).unwrap();
            let pi = random_policy(mdp.n_states, mdp.n_actions, seed ^ 0xabc);
            let d = occupancy(&mdp, &pi).unwrap();
            let expected = 1.0 / (1.0 - mdp.discount);
            assert!((d.mass() - expected).abs() < 1e-6, "mass {} vs {}", d.mass(), expected);
        }
    }

    #[test]
    fn value_single_state() {
        let mdp = single_state_mdp(0.9, 1.0);
        let v = policy_value(&mdp, &TabularPolicy::uniform(1, 1)).unwrap();
        assert!((v - 10.0).abs() < 1e-9);
    }

    #[test]
    fn value_zero_rewards_is_zero() {
        let mdp = make_random_tabular(4, 2, 0.0, 3).unwrap();
        let zeroed = mdp.with_rewards(vec![0.0; mdp.n_pairs()], 1.0).unwrap();
        for seed in 0..5 {
            let pi = random_policy(4, 2, seed);
            assert!(policy_value(&zeroed, &pi).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn value_equals_occupancy_dot_reward() {
        for seed in 0..20 {
            let mdp = make_random_tabular(4, 3, 0.0, seed).unwrap();
            let pi = random_policy(4, 3, seed + 100);
            let v = policy_value(&mdp, &pi).unwrap();
            let d = occupancy(&mdp, &pi).unwrap();
            let via_occ: f64 = d.d.iter().zip(&mdp.rewards).map(|(dd, r)| dd * r).sum();
            assert!((v - via_occ).abs() < 1e-8, "{v} vs {via_occ}");
        }
    }

    #[test]
    fn gap_zero_for_identical_kernels_and_symmetric() {
        let mdp = make_random_tabular(3, 2, 0.0, 9).unwrap();
        let pi = random_policy(3, 2, 1);
        assert_eq!(value_gap(&mdp, &mdp, &pi).unwrap(), 0.0);
        let model = make_random_tabular(3, 2, 0.0, 10).unwrap();
        let model = mdp.with_rewards(mdp.rewards.clone(), mdp.r_max).map(|mut m| {
            m.transitions = model.transitions.clone();
            m
        }).unwrap();
        let g1 = value_gap(&mdp, &model, &pi).unwrap();
        let g2 = value_gap(&model, &mdp, &pi).unwrap();
        assert!((g1 - g2).abs() < 1e-12);
        assert!(g1 >= 0.0);
    }

    #[test]
    fn gap_on_swapped_deterministic_transition() {
        // True: s0 -> s1 (reward 1 at s1's action). Model: s0 -> s0.
        let true_mdp = TabularMdp::new(
            2,
            1,
            vec![0.0, 1.0, 0.0, 1.0],
            vec![0.0, 1.0],
            0.5,
            vec![1.0, 0.0],
            1.0,
        )
        .unwrap();
        let mut model = true_mdp.clone();
        model.row_mut(0, 0).copy_from_slice(&[1.0, 0.0]);
        let pi = TabularPolicy::uniform(2, 1);
        // True value from s0: 0 + γ·(1/(1−γ)) = 1. Model value: 0.
        let gap = value_gap(&true_mdp, &model, &pi).unwrap();
        assert!((gap - 1.0).abs() < 1e-9);
    }

    #[test]
    fn worst_case_gap_equals_brute_force_and_mixtures_never_exceed() {
        let true_mdp = make_random_tabular(2, 2, 0.0, 21).unwrap();
        let mut model = true_mdp.clone();
        // Perturb one row.
        model.row_mut(0, 1).copy_from_slice(&[0.9, 0.1]);
        let (argmax, sup) = worst_case_gap(&true_mdp, &model, PolicyClass::AllDeterministic).unwrap();
        let mut brute = 0.0f64;
        for pi in DeterministicPolicies::new(2, 2) {
            brute = brute.max(value_gap(&true_mdp, &model, &pi).unwrap());
        }
        assert!((sup - brute).abs() < 1e-12);
        assert!((value_gap(&true_mdp, &model, &argmax).unwrap() - sup).abs() < 1e-12);
        // Random mixtures of deterministic policies never increase the max.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let dets: Vec<TabularPolicy> = DeterministicPolicies::new(2, 2).collect();
        for _ in 0..50 {
            let i = rng.gen_range(0..dets.len());
            let j = rng.gen_range(0..dets.len());
            let mixed = dets[i].mix(&dets[j], rng.gen());
            assert!(value_gap(&true_mdp, &model, &mixed).unwrap() <= sup + 1e-10);
        }
    }

    #[test]
    fn worst_case_gap_zero_for_true_model() {
        let mdp = make_random_tabular(3, 2, 0.0, 2).unwrap();
        let (_, sup) = worst_case_gap(&mdp, &mdp, PolicyClass::AllDeterministic).unwrap();
        assert_eq!(sup, 0.0);
    }

    #[test]
    fn enumeration_budget_guard() {
        let mdp = make_random_tabular(3, 2, 0.0, 2).unwrap();
        // 2^3 policies is fine; fake a huge space by constructing a wide MDP.
        let wide = make_random_tabular(8, 10, 0.0, 2).unwrap();
        assert!(worst_case_gap(&mdp, &mdp, PolicyClass::AllDeterministic).is_ok());
        let err = worst_case_gap(&wide, &wide, PolicyClass::AllDeterministic).unwrap_err();
        assert!(matches!(err, MdpError::EnumerationBudget { .. }));
    }

    #[test]
    fn value_iteration_zero_rewards() {
        let mdp = make_random_tabular(5, 2, 0.0, 31).unwrap();
        let zeroed = mdp.with_rewards(vec![0.0; mdp.n_pairs()], 1.0).unwrap();
        let (v, _) = value_iteration(&zeroed, 1e-10);
        assert!(v.iter().all(|x| x.abs() < 1e-9));
    }

    #[test]
    fn value_iteration_bandit_prefers_first_action() {
        let mdp = TabularMdp::new(1, 2, vec![1.0, 1.0], vec![1.0, 0.0], 0.9, vec![1.0], 1.0).unwrap();
        let (v, greedy) = value_iteration(&mdp, 1e-10);
        assert!((v[0] - 10.0).abs() < 1e-8);
        assert_eq!(greedy.prob(0, 0), 1.0);
    }

    #[test]
    fn value_iteration_matches_exact_policy_value() {
        for seed in 0..10 {
            let mdp = make_random_tabular(5, 3, 0.0, 40 + seed).unwrap();
            let (v, greedy) = value_iteration(&mdp, 1e-9);
            let exact = policy_state_values(&mdp, &greedy).unwrap();
            for (a, b) in v.iter().zip(&exact) {
                assert!((a - b).abs() < 1e-7, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn value_iteration_greedy_attains_enumerated_max() {
        for seed in 0..10 {
            let mdp = make_random_tabular(4, 2, 0.0, 60 + seed).unwrap();
            let (_, greedy) = value_iteration(&mdp, 1e-10);
            let v_greedy = policy_value(&mdp, &greedy).unwrap();
            let mut best = f64::NEG_INFINITY;
            for pi in DeterministicPolicies::new(4, 2) {
                best = best.max(policy_value(&mdp, &pi).unwrap());
            }
            assert!((v_greedy - best).abs() < 1e-7, "{v_greedy} vs {best}");
        }
    }

    #[test]
    fn deterministic_extreme_property() {
        // Kernels that differ only at an unreachable state have equal values on
        // every deterministic policy; mixtures must then agree as well.
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..20 {
            let mut true_mdp = make_random_tabular(4, 2, 0.0, 200 + seed).unwrap();
            // Make state 3 unreachable: nobody transitions into it, no start mass.
            for s in 0..3 {
                for a in 0..2 {
                    let row = true_mdp.row_mut(s, a);
                    let spill = row[3];
                    row[3] = 0.0;
                    row[0] += spill;
                }
            }
            true_mdp.initial = vec![0.4, 0.3, 0.3, 0.0];
            true_mdp.validate().unwrap();
            let mut model = true_mdp.clone();
            model.row_mut(3, 0).copy_from_slice(&[0.25, 0.25, 0.25, 0.25]);
            model.row_mut(3, 1).copy_from_slice(&[0.7, 0.1, 0.1, 0.1]);

            let dets: Vec<TabularPolicy> = DeterministicPolicies::new(4, 2).collect();
            for pi in &dets {
                assert!(value_gap(&true_mdp, &model, pi).unwrap() < 1e-10);
            }
            for _ in 0..10 {
                let i = rng.gen_range(0..dets.len());
                let j = rng.gen_range(0..dets.len());
                let mixed = dets[i].mix(&dets[j], rng.gen());
                assert!(value_gap(&true_mdp, &model, &mixed).unwrap() < 1e-8);
            }
        }
    }

    #[test]
    fn metric_validation_catches_violations() {
        let m = StateMetric::from_line(&[0.0, 1.0, 3.0]);
        m.validate().unwrap();
        let bad = StateMetric { n_states: 2, dist: vec![0.0, 1.0, 2.0, 0.0], line_coords: None };
        assert!(bad.validate().is_err());
        // Triangle violation.
        let tri = StateMetric {
            n_states: 3,
            dist: vec![0.0, 1.0, 5.0, 1.0, 0.0, 1.0, 5.0, 1.0, 0.0],
            line_coords: None,
        };
        assert!(matches!(tri.validate().unwrap_err(), MdpError::BadMetric { axiom: "triangle inequality", .. }));
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        assert!(TabularMdp::new(1, 1, vec![0.9], vec![0.0], 0.9, vec![1.0], 1.0).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![2.0], 0.9, vec![1.0], 1.0).is_err());
        assert!(TabularMdp::new(1, 1, vec![1.0], vec![0.5], 1.0, vec![1.0], 1.0).is_err());
        assert!(TabularPolicy::new(1, 2, vec![0.6, 0.6]).is_err());
    }
}
