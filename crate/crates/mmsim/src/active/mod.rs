//! Active data selection: critic-guided iterative model learning, the
//! regularized sampling game with exact duality-gap accounting, and
//! error-seeking samplers with importance-weight clipping.

mod grid;
mod iterative;
mod saddle;
mod sampler;

pub use grid::{
    iterative_learning_continuous, predict_next, train_critic, train_dynamics_mlp,
    ContinuousActiveConfig, ContinuousActiveOutcome, GenerativeEnv, WeightedTransition,
};
pub use iterative::{
    finite_time_check, iterative_learning, FiniteTimeReport, IterativeConfig, IterativeOutcome,
    IterativeRound, KernelMixture,
};
pub use saddle::{regularized_game, SaddleConfig};
pub use sampler::{
    task_aware_sampler_continuous, task_aware_sampler_continuous_from, task_aware_sampler_tabular,
    ContinuousEnv, GaussianPolicy, SamplerConfig, TabularSamplerOutcome,
};

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum ActiveError {
    #[error("regularization weight must be positive, got {0}")]
    BadLambda(f64),
    #[error("importance clip must be at least 1, got {0}")]
    BadClip(f64),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Mdp(#[from] crate::mdp::MdpError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    ErrorMdp(#[from] crate::error_mdp::ErrorMdpError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Explicit sampling distribution over state-action cells with an importance
/// clip bound for reuse against a base distribution.
#[derive(Clone, Debug)]
pub struct SamplingDistribution {
    pub probs: Vec<f64>,
    pub w_max: f64,
}

impl SamplingDistribution {
    pub fn new(probs: Vec<f64>, w_max: f64) -> Result<Self, ActiveError> {
        if w_max < 1.0 {
            return Err(ActiveError::BadClip(w_max));
        }
        let sum: f64 = probs.iter().sum();
        assert!(sum > 0.0, "sampling distribution has no mass");
        Ok(Self { probs: probs.iter().map(|p| p / sum).collect(), w_max })
    }

    /// Effective reuse distribution: per-cell importance ratio `d/base`
    /// clipped to `[1/w_max, w_max]`, renormalized. A clip of 1 therefore
    /// reproduces the base exactly, and larger clips open a symmetric trust
    /// region around it.
    pub fn clipped_against(&self, base: &[f64]) -> Vec<f64> {
        let mut eff: Vec<f64> = self
            .probs
            .iter()
            .zip(base)
            .map(|(d, b)| {
                if *b <= 0.0 {
                    *d
                } else {
                    b * (d / b).clamp(1.0 / self.w_max, self.w_max)
                }
            })
            .collect();
        let sum: f64 = eff.iter().sum();
        if sum <= 0.0 {
            return base.to_vec();
        }
        eff.iter_mut().for_each(|p| *p /= sum);
        eff
    }
}

/// Saddle-point trace at checkpoints.
#[derive(Clone, Debug, Default)]
pub struct SaddleTrace {
    pub records: Vec<SaddleRecord>,
}

#[derive(Clone, Copy, Debug)]
pub struct SaddleRecord {
    pub t: usize,
    /// Realized payoff at this round.
    pub payoff: f64,
    pub regret_model: f64,
    pub regret_dist: f64,
    /// Exact duality gap of the time-averaged strategies.
    pub gap: f64,
    pub bound_rhs: f64,
}

impl SaddleTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("T,payoff,regret_M,regret_D,duality_gap,bound_rhs\n");
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}",
                r.t, r.payoff, r.regret_model, r.regret_dist, r.gap, r.bound_rhs
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_at_one_reproduces_base() {
        let base = vec![0.5, 0.3, 0.2];
        let d = SamplingDistribution::new(vec![0.9, 0.05, 0.05], 1.0).unwrap();
        let eff = d.clipped_against(&base);
        for (e, b) in eff.iter().zip(&base) {
            assert!((e - b).abs() < 1e-12);
        }
        assert!(SamplingDistribution::new(vec![1.0], 0.5).is_err());
    }

    #[test]
    fn clipping_bounds_the_ratio() {
        let base = vec![0.25; 4];
        let d = SamplingDistribution::new(vec![0.97, 0.01, 0.01, 0.01], 3.0).unwrap();
        let eff = d.clipped_against(&base);
        for (e, b) in eff.iter().zip(&base) {
            assert!(e / b <= 3.0 + 1e-12);
        }
        let sum: f64 = eff.iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }
}
