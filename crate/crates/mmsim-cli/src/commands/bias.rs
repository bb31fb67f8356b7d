//! Biased-coverage accuracy study: maximum-likelihood fitting on biased data
//! against critic-guided active sampling with the same total budget, scored
//! on a uniform test distribution, overall and inside the sensitive region.

use crate::config::{BiasSection, Config};
use crate::report::Report;
use crate::svg;
use mmsim::active::{
    iterative_learning_continuous, predict_next, train_dynamics_mlp, ContinuousActiveConfig,
    GenerativeEnv, WeightedTransition,
};
use mmsim::envs::BiasedCoverageEnv;
use mmsim::nn::Mlp;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::path::Path;

pub struct BiasedGrid {
    pub env: BiasedCoverageEnv,
    pub cells: usize,
}

impl BiasedGrid {
    fn cell_range(&self, cell: usize) -> (f64, f64) {
        let w = 2.0 / self.cells as f64;
        let lo = -1.0 + w * cell as f64;
        (lo, lo + w)
    }

    pub fn cell_sensitive(&self, cell: usize) -> bool {
        let (lo, hi) = self.cell_range(cell);
        self.env.sensitive(0.5 * (lo + hi))
    }
}

impl GenerativeEnv for BiasedGrid {
    fn state_dim(&self) -> usize {
        1
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn n_cells(&self) -> usize {
        self.cells
    }

    fn sample_in_cell(&self, cell: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let (lo, hi) = self.cell_range(cell);
        (vec![rng.gen_range(lo..hi)], vec![rng.gen_range(-mmsim::envs::BIASED_ACTION_BOUND..mmsim::envs::BIASED_ACTION_BOUND)])
    }

    fn sample_next(&self, s: &[f64], a: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        vec![self.env.step(s[0], a[0], self.env.noise_std * mmsim::nn::gaussian(rng))]
    }

    fn base_distribution(&self) -> Vec<f64> {
        // The biased collector: the sensitive region receives its uniform
        // share divided by the bias factor.
        let n_sens = (0..self.cells).filter(|c| self.cell_sensitive(*c)).count();
        let n_benign = self.cells - n_sens;
        let sens_total = self.env.sensitive_fraction() / self.env.bias_factor;
        let benign_total = 1.0 - sens_total;
        (0..self.cells)
            .map(|c| {
                if self.cell_sensitive(c) {
                    sens_total / n_sens as f64
                } else {
                    benign_total / n_benign as f64
                }
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct SeedResult {
    pub mle_avg: f64,
    pub mle_sens: f64,
    pub active_avg: f64,
    pub active_sens: f64,
    pub losses_finite: bool,
}

/// One seed of the study at a given importance clip.
pub fn run_seed(section: &BiasSection, w_max: f64, seed: u64) -> SeedResult {
    let env = BiasedCoverageEnv { bias_factor: section.bias_factor, ..Default::default() };
    let grid = BiasedGrid { env, cells: section.cells };
    let cfg = ContinuousActiveConfig {
        rounds: section.rounds,
        batch_per_round: section.batch_per_round,
        critic_steps: section.critic_steps,
        model_steps: section.model_steps,
        probes_per_cell: section.probes_per_cell,
        w_max,
        model_hidden: 64,
        critic_hidden: 64,
        seed,
        ..Default::default()
    };
    let active = iterative_learning_continuous(&grid, &cfg).expect("active run");

    // Baseline: likelihood (least-squares) fit on biased data of equal size.
    let total = active.data.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1b1a5);
    let base = grid.base_distribution();
    let mut biased_data = Vec::with_capacity(total);
    for _ in 0..total {
        let cell = sample_from(&base, &mut rng);
        let (s, a) = grid.sample_in_cell(cell, &mut rng);
        let s_next = grid.sample_next(&s, &a, &mut rng);
        biased_data.push(WeightedTransition { s, a, s_next, weight: 1.0 });
    }
    let mle = train_dynamics_mlp(&biased_data, 1, 1, 64, section.model_steps, 3e-3, seed ^ 0x3b3)
        .expect("baseline training");

    let (mle_avg, mle_sens) = uniform_rmse(&grid, &mle, section.test_points, seed ^ 0xe7a1);
    let (active_avg, active_sens) = uniform_rmse(&grid, &active.model, section.test_points, seed ^ 0xe7a1);
    SeedResult {
        mle_avg,
        mle_sens,
        active_avg,
        active_sens,
        losses_finite: active.model_losses.iter().all(|l| l.is_finite()),
    }
}

/// RMSE on a uniform test distribution: (overall, sensitive region only).
fn uniform_rmse(grid: &BiasedGrid, model: &Mlp, n: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sq = 0.0;
    let mut sq_sens = 0.0;
    let mut n_sens = 0usize;
    for _ in 0..n {
        let s = rng.gen_range(-1.0..1.0);
        let a = rng.gen_range(-mmsim::envs::BIASED_ACTION_BOUND..mmsim::envs::BIASED_ACTION_BOUND);
        let observed = grid.sample_next(&[s], &[a], &mut rng)[0];
        let pred = predict_next(model, &[s], &[a])[0];
        let d2 = (pred - observed) * (pred - observed);
        sq += d2;
        if grid.env.sensitive(s) {
            sq_sens += d2;
            n_sens += 1;
        }
    }
    ((sq / n as f64).sqrt(), (sq_sens / n_sens.max(1) as f64).sqrt())
}

pub fn run(cfg: &Config, out: Option<&Path>) -> Report {
    let section = &cfg.bias_study;
    let mut report = Report::new("bias-study", &cfg.run_hash("bias-study"));
    let results: Vec<SeedResult> = crate::parallel_map(cfg.run.threads, &section.seeds, |&seed| {
        run_seed(section, section.w_max, seed)
    });

    let sens_gains: Vec<f64> = results.iter().map(|r| r.mle_sens / r.active_sens).collect();
    let avg_gains: Vec<f64> = results.iter().map(|r| r.mle_avg / r.active_avg).collect();
    let (gain_mean, gain_std) = mean_std(&sens_gains);
    let (avg_mean, avg_std) = mean_std(&avg_gains);

    for (seed, r) in section.seeds.iter().zip(&results) {
        report.value(&format!("seed{}_mle_sens_rmse", seed), r.mle_sens);
        report.value(&format!("seed{}_active_sens_rmse", seed), r.active_sens);
    }
    report.value("sensitive_gain_mean", gain_mean);
    if section.seeds.len() > 1 {
        report.value("sensitive_gain_std", gain_std);
        report.value("avg_gain_std", avg_std);
    }
    report.value("avg_gain_mean", avg_mean);
    report.value("avg_gain_below_one", if avg_mean < 1.0 { 1.0 } else { 0.0 });

    report.check(
        "sensitive_gain_above_one",
        gain_mean - gain_std > 1.0,
        gain_mean - gain_std,
        1.0,
        format!("mean {gain_mean:.3} std {gain_std:.3} over {} seeds", section.seeds.len()),
    );

    if let Some(dir) = out {
        let _ = std::fs::create_dir_all(dir);
        let _ = svg::line_plot(
            dir,
            "sensitive_gains",
            &[("sensitive_gain", &sens_gains[..]), ("avg_gain", &avg_gains[..])],
            "RMSE gain (likelihood baseline / active) per seed",
        );
    }
    report
}

pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub(crate) fn sample_from(d: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in d.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    d.len() - 1
}
