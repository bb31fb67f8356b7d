//! Divergences between one-step kernels and the bridges connecting them to
//! policy-value gaps: the TV simulation bound, the Pinsker chain, transport
//! distances, and coverage constants.

use crate::mdp::{occupancy, MdpError, OccupancyMeasure, StateMetric, TabularMdp, TabularPolicy};
use crate::ot;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error("distribution does not sum to 1 (sum {sum})")]
    NotNormalized { sum: f64 },
    #[error("negative probability {value} at index {index}")]
    Negative { index: usize, value: f64 },
    #[error("support size mismatch: {left} vs {right}")]
    SupportMismatch { left: usize, right: usize },
    #[error("negative divergence input {value}")]
    NegativeInput { value: f64 },
    #[error(transparent)]
    Mdp(#[from] MdpError),
}

/// Validated probability vector.
#[derive(Clone, Debug)]
pub struct DiscreteDist(Vec<f64>);

impl DiscreteDist {
    pub fn new(p: Vec<f64>) -> Result<Self, MetricError> {
        for (i, &v) in p.iter().enumerate() {
            if v < 0.0 {
                return Err(MetricError::Negative { index: i, value: v });
            }
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MetricError::NotNormalized { sum });
        }
        Ok(Self(p))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Total variation ½·Σ|p−q|.
pub fn tv(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64, MetricError> {
    check_support(p, q)?;
    Ok(tv_slices(p.as_slice(), q.as_slice()))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// The witness `D = sign(p−q)` attains the variational form exactly:
/// `tv = ½(E_p[D] − E_q[D])`.
pub fn tv_dual_value(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in p.iter().zip(q) {
        acc += (a - b).signum() * (a - b);
    }
    0.5 * acc
}

/// KL(p‖q) with 0·log 0 = 0; +∞ when p puts mass where q has none.
pub fn kl(p: &DiscreteDist, q: &DiscreteDist) -> Result<f64, MetricError> {
    check_support(p, q)?;
    Ok(kl_slices(p.as_slice(), q.as_slice()))
}

pub(crate) fn kl_slices(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == 0.0 {
            continue;
        }
        if b == 0.0 {
            return f64::INFINITY;
        }
        acc += a * (a / b).ln();
    }
    acc.max(0.0)
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.ln()).sum::<f64>()
}

/// Exact W1 between distributions over states of a metric space. Uses the
/// cumulative closed form when the metric comes from line coordinates and the
/// transport LP otherwise.
pub fn w1_discrete(p: &DiscreteDist, q: &DiscreteDist, metric: &StateMetric) -> Result<f64, MetricError> {
    check_support(p, q)?;
    if p.len() != metric.n_states {
        return Err(MetricError::SupportMismatch { left: p.len(), right: metric.n_states });
    }
    Ok(w1_slices(p.as_slice(), q.as_slice(), metric))
}

pub(crate) fn w1_slices(p: &[f64], q: &[f64], metric: &StateMetric) -> f64 {
    if let Some(coords) = &metric.line_coords {
        ot::w1_line(p, q, coords).0
    } else {
        ot::transport(p, q, &metric.dist).cost
    }
}

/// ℓ1/2 Pinsker bound `½·sqrt(2·kl)`; always dominates TV of the same pair.
pub fn pinsker_bound(kl_value: f64) -> Result<f64, MetricError> {
    if kl_value < 0.0 {
        return Err(MetricError::NegativeInput { value: kl_value });
    }
    Ok(0.5 * (2.0 * kl_value).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    Tv,
    Kl,
    W1,
}

/// `Σ_{s,a} occ(s,a)·D(P(·|s,a), P̂(·|s,a))` with the unnormalized occupancy.
pub fn occupancy_weighted_divergence(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    occ: &OccupancyMeasure,
    which: Divergence,
    metric: Option<&StateMetric>,
) -> Result<f64, MetricError> {
    if !true_mdp.same_shape(model) || occ.d.len() != true_mdp.n_pairs() {
        return Err(MetricError::SupportMismatch { left: occ.d.len(), right: true_mdp.n_pairs() });
    }
    let mut acc = 0.0;
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            let w = occ.get(s, a);
            if w == 0.0 {
                continue;
            }
            let p = true_mdp.row(s, a);
            let q = model.row(s, a);
            let d = match which {
                Divergence::Tv => tv_slices(p, q),
                Divergence::Kl => kl_slices(p, q),
                Divergence::W1 => {
                    let metric = metric.expect("W1 weighting needs a state metric");
                    w1_slices(p, q, metric)
                }
            };
            if d.is_infinite() {
                return Ok(f64::INFINITY);
            }
            acc += w * d;
        }
    }
    Ok(acc)
}

/// Expected negative log-likelihood of the model on the true kernel under the
/// policy's (unnormalized) occupancy. Decomposes as weighted KL plus weighted
/// entropy of the true kernel.
pub fn nll_loss(true_mdp: &TabularMdp, model: &TabularMdp, pi: &TabularPolicy) -> Result<f64, MetricError> {
    let occ = occupancy(true_mdp, pi)?;
    nll_loss_with_occupancy(true_mdp, model, &occ)
}

pub fn nll_loss_with_occupancy(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    occ: &OccupancyMeasure,
) -> Result<f64, MetricError> {
    if !true_mdp.same_shape(model) {
        return Err(MetricError::SupportMismatch { left: model.n_pairs(), right: true_mdp.n_pairs() });
    }
    let mut acc = 0.0;
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            let w = occ.get(s, a);
            if w == 0.0 {
                continue;
            }
            let p = true_mdp.row(s, a);
            let q = model.row(s, a);
            for (&ps, &qs) in p.iter().zip(q) {
                if ps == 0.0 {
                    continue;
                }
                if qs == 0.0 {
                    return Ok(f64::INFINITY);
                }
                acc -= w * ps * qs.ln();
            }
        }
    }
    Ok(acc)
}

/// Occupancy-weighted entropy of the true kernel (unnormalized weighting).
pub fn expected_entropy(true_mdp: &TabularMdp, occ: &OccupancyMeasure) -> f64 {
    let mut acc = 0.0;
    for s in 0..true_mdp.n_states {
        for a in 0..true_mdp.n_actions {
            let w = occ.get(s, a);
            if w > 0.0 {
                acc += w * entropy(true_mdp.row(s, a));
            }
        }
    }
    acc
}

/// Both sides of the TV simulation bound:
/// `lhs = |V_π(P) − V_π(P̂)|`, `rhs = γ·Rmax/(1−γ)·Σ d_π·TV`.
pub fn simulation_bound(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi: &TabularPolicy,
) -> Result<(f64, f64), MetricError> {
    let lhs = crate::mdp::value_gap(true_mdp, model, pi)?;
    let occ = occupancy(true_mdp, pi)?;
    let weighted_tv = occupancy_weighted_divergence(true_mdp, model, &occ, Divergence::Tv, None)?;
    let c = true_mdp.discount * true_mdp.r_max / (1.0 - true_mdp.discount);
    Ok((lhs, c * weighted_tv))
}

/// Coverage constant and the witness achieving it.
#[derive(Clone, Debug, Serialize)]
pub struct CoverageReport {
    pub kappa: f64,
    /// (index into the policy set, state, action) achieving the max ratio.
    pub witness: (usize, usize, usize),
}

/// `κ = max_{π,s,a} d_π(s,a) / d_data(s,a)` over a finite policy set, with
/// unnormalized occupancies against a probability data distribution. Reports
/// +∞ (with the witness) when the data misses a visited pair.
pub fn coverage_constant(
    true_mdp: &TabularMdp,
    policy_set: &[TabularPolicy],
    d_data: &[f64],
) -> Result<CoverageReport, MetricError> {
    if d_data.len() != true_mdp.n_pairs() {
        return Err(MetricError::SupportMismatch { left: d_data.len(), right: true_mdp.n_pairs() });
    }
    let mut kappa = 0.0f64;
    let mut witness = (0, 0, 0);
    for (pi_idx, pi) in policy_set.iter().enumerate() {
        let occ = occupancy(true_mdp, pi)?;
        for s in 0..true_mdp.n_states {
            for a in 0..true_mdp.n_actions {
                let dv = occ.get(s, a);
                if dv <= 1e-300 {
                    continue;
                }
                let data = d_data[true_mdp.pair_index(s, a)];
                let ratio = if data > 0.0 { dv / data } else { f64::INFINITY };
                if ratio > kappa {
                    kappa = ratio;
                    witness = (pi_idx, s, a);
                }
            }
        }
    }
    Ok(CoverageReport { kappa, witness })
}

/// Mean over `t < horizon` of the empirical W1 between time-t state marginals
/// of the two kernels under the same policy (independent sampling). A
/// diagnostic: marginal, not joint, trajectory comparison.
pub fn trajectory_w1(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi: &TabularPolicy,
    metric: &StateMetric,
    horizon: usize,
    n_traj: usize,
    seed: u64,
) -> Result<f64, MetricError> {
    assert!(horizon >= 1 && n_traj >= 1);
    if !true_mdp.same_shape(model) {
        return Err(MetricError::SupportMismatch { left: model.n_states, right: true_mdp.n_states });
    }
    let marg_true = empirical_marginals(true_mdp, pi, horizon, n_traj, seed);
    let marg_model = empirical_marginals(model, pi, horizon, n_traj, seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut acc = 0.0;
    for t in 0..horizon {
        acc += w1_slices(&marg_true[t], &marg_model[t], metric);
    }
    Ok(acc / horizon as f64)
}

fn empirical_marginals(
    mdp: &TabularMdp,
    pi: &TabularPolicy,
    horizon: usize,
    n_traj: usize,
    seed: u64,
) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut marginals = vec![vec![0.0; mdp.n_states]; horizon];
    for _ in 0..n_traj {
        let mut s = sample_index(&mdp.initial, &mut rng);
        for marg in marginals.iter_mut() {
            marg[s] += 1.0;
            let a = sample_index(&pi.probs[s * mdp.n_actions..(s + 1) * mdp.n_actions], &mut rng);
            s = sample_index(mdp.row(s, a), &mut rng);
        }
    }
    for marg in marginals.iter_mut() {
        marg.iter_mut().for_each(|v| *v /= n_traj as f64);
    }
    marginals
}

pub(crate) fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

fn check_support(p: &DiscreteDist, q: &DiscreteDist) -> Result<(), MetricError> {
    if p.len() != q.len() {
        return Err(MetricError::SupportMismatch { left: p.len(), right: q.len() });
    }
    Ok(())
}
