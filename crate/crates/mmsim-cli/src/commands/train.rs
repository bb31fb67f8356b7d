//! Critic-game training runs on the scalar benchmark kernel, emitting the
//! per-round trace.

use crate::config::Config;
use crate::report::Report;
use crate::svg;
use mmsim::games::{
    mean_rmse_on_grid, train_tv_critic, train_w1_critic, GameConfig, Gauss1d,
};
use mmsim::nn::{CriticNet, GaussianModel, LipschitzMode};
use std::path::Path;

fn oracle() -> Gauss1d {
    Gauss1d { k_s: 0.8, k_a: 0.4, noise: 0.15, reward: 0.5 }
}

fn game_config(cfg: &Config) -> GameConfig {
    let t = &cfg.train;
    GameConfig {
        batch_size: t.batch_size,
        eta_theta: t.eta_model,
        eta_phi: t.eta_critic,
        n_critic: t.n_critic,
        lambda_gp: t.lambda_gp,
        lambda_lik: t.lambda_lik,
        rounds: t.rounds,
        seed: cfg.run.seed,
        keep_snapshots: false,
        decay_model_lr: true,
    }
}

pub fn run_tv(cfg: &Config, out: Option<&Path>) -> Report {
    let mut report = Report::new("train-tv", &cfg.run_hash("train-tv"));
    let oracle = oracle();
    let model = GaussianModel::new(1, 1, cfg.train.hidden, cfg.run.seed ^ 1);
    let critic = CriticNet::new(1, 1, cfg.train.hidden, LipschitzMode::None, true, cfg.run.seed ^ 2);
    match train_tv_critic(&oracle, model, critic, &game_config(cfg)) {
        Ok(outcome) => {
            let bounded = outcome
                .trace
                .records
                .iter()
                .all(|r| r.critic_obj.map(|o| o.is_finite() && o.abs() <= 2.0).unwrap_or(false));
            report.check("witness_bounded", bounded, 0.0, 2.0, "squashed witness stayed in range");
            if let Some(dir) = out {
                let _ = std::fs::create_dir_all(dir);
                let _ = std::fs::write(dir.join("trace.csv"), outcome.trace.to_csv());
                emit_objective_plot(dir, &outcome.trace);
            }
        }
        Err(e) => report.check("training", false, 0.0, 0.0, format!("{e}")),
    }
    report
}

pub fn run_w1(cfg: &Config, out: Option<&Path>) -> Report {
    let mut report = Report::new("train-w1", &cfg.run_hash("train-w1"));
    let oracle = oracle();
    let mut model = GaussianModel::new(1, 1, cfg.train.hidden, cfg.run.seed ^ 1);
    model.logvar_clamp = (-6.0, 2.0);
    let critic = CriticNet::new(
        1,
        1,
        cfg.train.hidden,
        LipschitzMode::projection(3.0).expect("positive constant"),
        false,
        cfg.run.seed ^ 2,
    );
    match train_w1_critic(&oracle, model, critic, &game_config(cfg)) {
        Ok(outcome) => {
            let rmse = mean_rmse_on_grid(&outcome.averaged, |s, a| 0.8 * s + 0.4 * a, -0.8, 0.8, 12);
            report.value("averaged_model_mean_rmse", rmse);
            report.check("mean_learned", rmse <= 0.05, rmse, 0.05, "averaged model on the covered region");
            if let Some(dir) = out {
                let _ = std::fs::create_dir_all(dir);
                let _ = std::fs::write(dir.join("trace.csv"), outcome.trace.to_csv());
                emit_objective_plot(dir, &outcome.trace);
            }
        }
        Err(e) => report.check("training", false, 0.0, 0.0, format!("{e}")),
    }
    report
}

fn emit_objective_plot(dir: &Path, trace: &mmsim::games::GameTrace) {
    let obj: Vec<f64> = trace.records.iter().filter_map(|r| r.critic_obj).collect();
    let loss: Vec<f64> = trace.records.iter().filter_map(|r| r.model_loss).collect();
    let _ = svg::line_plot(
        dir,
        "objectives",
        &[("critic_obj", &obj[..]), ("model_loss", &loss[..])],
        "per-round game objectives",
    );
}
