//! Stability study: the same active loop under a tight importance clip, an
//! aggressive clip, and the likelihood baseline. Reports per-regime mean and
//! spread of the sensitive-region error plus the training loss curves.

use super::bias::{self, mean_std, SeedResult};
use crate::config::Config;
use crate::report::Report;
use crate::svg;
use std::path::Path;

pub struct RegimeSummary {
    pub name: &'static str,
    pub rmse: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub all_finite: bool,
}

pub fn run(cfg: &Config, out: Option<&Path>) -> Report {
    let st = &cfg.stability;
    let mut report = Report::new("stability", &cfg.run_hash("stability"));

    let section = crate::config::BiasSection {
        seeds: st.seeds.clone(),
        bias_factor: st.bias_factor,
        cells: st.cells,
        rounds: st.rounds,
        batch_per_round: st.batch_per_round,
        probes_per_cell: st.probes_per_cell,
        model_steps: st.model_steps,
        critic_steps: st.critic_steps,
        w_max: st.w_max_stabilized,
        test_points: st.test_points,
    };

    let regimes: Vec<(&'static str, Option<f64>)> = vec![
        ("stabilized", Some(st.w_max_stabilized)),
        ("aggressive", Some(st.w_max_aggressive)),
        ("likelihood", None),
    ];

    let mut summaries = Vec::new();
    for (name, clip) in &regimes {
        let results: Vec<SeedResult> = crate::parallel_map(cfg.run.threads, &st.seeds, |&seed| {
            bias::run_seed(&section, clip.unwrap_or(1.0), seed)
        });
        let rmse: Vec<f64> = results
            .iter()
            .map(|r| if clip.is_some() { r.active_sens } else { r.mle_sens })
            .collect();
        let all_finite = results.iter().all(|r| r.losses_finite && rmse.iter().all(|x| x.is_finite()));
        let (mean, std) = mean_std(&rmse);
        report.value(&format!("{name}_strategic_rmse_mean"), mean);
        report.value(&format!("{name}_strategic_rmse_std"), std);
        summaries.push(RegimeSummary { name, rmse, mean, std, all_finite });
    }

    let stab = &summaries[0];
    let aggr = &summaries[1];
    report.check(
        "stabilized_variance_below_aggressive",
        stab.std < aggr.std,
        stab.std,
        aggr.std,
        format!("inter-seed std over {} seeds", st.seeds.len()),
    );
    report.check(
        "all_runs_finite",
        summaries.iter().all(|s| s.all_finite),
        0.0,
        0.0,
        "no divergence in any regime",
    );
    report.check(
        "three_regimes_reported",
        summaries.len() == 3,
        summaries.len() as f64,
        3.0,
        "stabilized, aggressive, likelihood",
    );

    if let Some(dir) = out {
        let _ = std::fs::create_dir_all(dir);
        let series: Vec<(&str, &[f64])> =
            summaries.iter().map(|s| (s.name, s.rmse.as_slice())).collect();
        let _ = svg::line_plot(dir, "strategic_rmse_by_seed", &series, "sensitive-region RMSE per seed");
    }
    report
}
