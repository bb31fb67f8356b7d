//! Run configuration: a TOML file with one table per subcommand. Unknown
//! keys anywhere are rejected. Flags override file values; the environment
//! only overrides the output directory and thread count.

use mmsim::linalg::fnv1a;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("config schema violation: {0}")]
    Schema(#[from] toml::de::Error),
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub active: ActiveSection,
    #[serde(default)]
    pub narrow_passage: NarrowPassageSection,
    #[serde(default)]
    pub bias_study: BiasSection,
    #[serde(default)]
    pub stability: StabilitySection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub out_dir: String,
    pub seed: u64,
    /// Worker threads for seed-level parallelism.
    pub threads: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { out_dir: "runs".into(), seed: 0, threads: 4 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub simulation_instances: usize,
    pub pinsker_pairs: usize,
    pub pinsker_instances: usize,
    pub online_instances: usize,
    pub online_rounds: usize,
    pub duality_instances: usize,
    pub saddle_checkpoints: Vec<usize>,
    pub finite_time_runs: usize,
    /// Perturb a kernel row after computing one bound, to prove the checker
    /// can fail. Forces a violation and a nonzero exit.
    pub sabotage: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            simulation_instances: 100,
            pinsker_pairs: 1000,
            pinsker_instances: 100,
            online_instances: 20,
            online_rounds: 2000,
            duality_instances: 100,
            saddle_checkpoints: vec![10, 100, 1000],
            finite_time_runs: 50,
            sabotage: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rounds: usize,
    pub batch_size: usize,
    pub eta_model: f64,
    pub eta_critic: f64,
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub lambda_lik: f64,
    pub hidden: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            rounds: 2000,
            batch_size: 64,
            eta_model: 1e-3,
            eta_critic: 3e-3,
            n_critic: 5,
            lambda_gp: 10.0,
            lambda_lik: 1.0,
            hidden: 64,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActiveSection {
    pub n_states: usize,
    pub n_actions: usize,
    pub rounds: usize,
    pub eta_model: f64,
    pub saddle_lambda: f64,
    pub saddle_rounds: usize,
}

impl Default for ActiveSection {
    fn default() -> Self {
        Self { n_states: 4, n_actions: 2, rounds: 20, eta_model: 0.6, saddle_lambda: 0.3, saddle_rounds: 1000 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NarrowPassageSection {
    pub seeds: Vec<u64>,
    pub rounds: usize,
    pub grid: usize,
    pub batch_per_round: usize,
    pub probes_per_cell: usize,
    pub model_steps: usize,
    pub critic_steps: usize,
    pub alpha: f64,
    pub w_max: f64,
    /// Wind region variant: true applies wind only inside the passage.
    pub wind_inside_only: bool,
    /// Wall rule: true rejects blocked motion instead of truncating.
    pub wall_reject: bool,
}

impl Default for NarrowPassageSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            rounds: 3,
            grid: 20,
            batch_per_round: 1200,
            probes_per_cell: 24,
            model_steps: 3000,
            critic_steps: 1500,
            alpha: 1.0,
            w_max: 1e9,
            wind_inside_only: false,
            wall_reject: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasSection {
    pub seeds: Vec<u64>,
    pub bias_factor: f64,
    pub cells: usize,
    pub rounds: usize,
    pub batch_per_round: usize,
    pub probes_per_cell: usize,
    pub model_steps: usize,
    pub critic_steps: usize,
    pub w_max: f64,
    pub test_points: usize,
}

impl Default for BiasSection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            bias_factor: 10.0,
            cells: 20,
            rounds: 3,
            batch_per_round: 700,
            probes_per_cell: 5,
            model_steps: 2500,
            critic_steps: 700,
            w_max: 1e9,
            test_points: 4000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilitySection {
    pub seeds: Vec<u64>,
    pub w_max_stabilized: f64,
    pub w_max_aggressive: f64,
    pub bias_factor: f64,
    pub cells: usize,
    pub rounds: usize,
    pub batch_per_round: usize,
    pub probes_per_cell: usize,
    pub model_steps: usize,
    pub critic_steps: usize,
    pub test_points: usize,
}

impl Default for StabilitySection {
    fn default() -> Self {
        Self {
            seeds: vec![0, 1, 2, 3, 4],
            w_max_stabilized: 3.0,
            w_max_aggressive: 10.0,
            bias_factor: 10.0,
            cells: 30,
            rounds: 3,
            batch_per_round: 600,
            probes_per_cell: 2,
            model_steps: 2500,
            critic_steps: 700,
            test_points: 4000,
        }
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            None => Config::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|source| ConfigError::Io { path: p.display().to_string(), source })?;
                toml::from_str(&text)?
            }
        };
        if let Ok(dir) = std::env::var("MMSIM_OUT_DIR") {
            cfg.run.out_dir = dir;
        }
        if let Ok(threads) = std::env::var("MMSIM_THREADS") {
            if let Ok(n) = threads.parse() {
                cfg.run.threads = n;
            }
        }
        Ok(cfg)
    }

    /// Canonical serialization; the run hash is derived from it so identical
    /// configurations land in the same output directory.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn run_hash(&self, subcommand: &str) -> String {
        let mut bytes = subcommand.as_bytes().to_vec();
        bytes.extend_from_slice(self.canonical().as_bytes());
        format!("{:016x}", fnv1a(&bytes))
    }

    pub fn run_dir(&self, subcommand: &str) -> PathBuf {
        PathBuf::from(&self.run.out_dir).join(format!("{subcommand}-{}", self.run_hash(subcommand)))
    }
}
