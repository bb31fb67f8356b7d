//! Adversarial training objectives: the critic games, the likelihood
//! baseline, the online no-regret game with exact regret accounting, and the
//! misspecification contrast between likelihood-optimal and value-optimal
//! model selection.

mod neural;
mod online;
mod tabular;

pub use neural::{
    mean_rmse_on_grid, mle_baseline, train_tv_critic, train_w1_critic, Gauss1d, MleOutcome,
    TrainOutcome, TransitionOracle,
};
pub use online::{online_game, Adversary, OnlineGameConfig, OnlineOutcome, OnlineRound};
pub use tabular::{
    exact_tv_game, misspecification_demo, sample_transitions, tabular_mle_sgd, ExactTvOutcome,
    MisspecReport,
};

use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("non-finite {quantity} at round {round}")]
    NonFinite { quantity: &'static str, round: usize },
    #[error(transparent)]
    Mdp(#[from] crate::mdp::MdpError),
    #[error(transparent)]
    Metric(#[from] crate::metrics::MetricError),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    ErrorMdp(#[from] crate::error_mdp::ErrorMdpError),
}

/// Knobs shared by the critic games.
#[derive(Clone, Debug)]
pub struct GameConfig {
    pub batch_size: usize,
    /// Model learning rate.
    pub eta_theta: f64,
    /// Critic learning rate.
    pub eta_phi: f64,
    /// Inner critic steps per round.
    pub n_critic: usize,
    /// Gradient-penalty coefficient (penalty mode only).
    pub lambda_gp: f64,
    /// Optional likelihood regularizer on the model update.
    pub lambda_lik: f64,
    pub rounds: usize,
    pub seed: u64,
    /// Retain per-round parameter snapshots so the averaging invariant can be
    /// recomputed; memory scales with rounds.
    pub keep_snapshots: bool,
    /// Decay the model step as 1/sqrt(1 + t/250); damps minimax cycling so
    /// the averaged iterate settles.
    pub decay_model_lr: bool,
}

impl Default for GameConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            eta_theta: 3e-4,
            eta_phi: 3e-4,
            n_critic: 5,
            lambda_gp: 10.0,
            lambda_lik: 0.0,
            rounds: 1000,
            seed: 0,
            keep_snapshots: false,
            decay_model_lr: false,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), GameError> {
        assert!(self.batch_size > 0 && self.rounds > 0 && self.n_critic > 0, "counts must be positive");
        assert!(self.eta_theta > 0.0 && self.eta_phi > 0.0, "learning rates must be positive");
        Ok(())
    }
}

/// One per-round record; fields are filled where the game defines them.
#[derive(Clone, Debug, Default)]
pub struct RoundRecord {
    pub round: usize,
    pub critic_obj: Option<f64>,
    pub model_loss: Option<f64>,
    pub value_gap: Option<f64>,
    pub regret: Option<f64>,
    pub nll: Option<f64>,
    pub bound_rhs: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct GameTrace {
    pub records: Vec<RoundRecord>,
}

impl GameTrace {
    pub fn push(&mut self, rec: RoundRecord) {
        self.records.push(rec);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,critic_obj,model_loss,value_gap,regret,bound_rhs\n");
        for r in &self.records {
            let cell = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.round,
                cell(r.critic_obj),
                cell(r.model_loss),
                cell(r.value_gap),
                cell(r.regret),
                cell(r.bound_rhs),
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_csv_has_fixed_header_and_blank_missing_cells() {
        let mut trace = GameTrace::default();
        trace.push(RoundRecord { round: 1, critic_obj: Some(0.5), ..Default::default() });
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "round,critic_obj,model_loss,value_gap,regret,bound_rhs");
        let row = lines.next().unwrap();
        assert!(row.starts_with("1,5.0"));
        assert!(row.ends_with(",,,,"));
    }
}
