use mmsim::active::{regularized_game, SaddleConfig};
use mmsim::envs::{make_random_tabular, make_random_tabular_with};
use mmsim::error_mdp::{build_error_mdp, solve_error_mdp, uniform_value_lipschitz, ErrorMetricMode};
use mmsim::mdp::{value_gap, worst_case_gap, PolicyClass, StateMetric};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    for (gamma, n_corrupt, scale, rew_slope) in [(0.9, 1, 0.8, 0.4), (0.9, 1, 0.8, 0.45), (0.8, 1, 0.8, 0.4), (0.9, 1, 1.2, 0.45), (0.8, 1, 1.2, 0.45)] {
        let mut rng = ChaCha8Rng::seed_from_u64(0x54);
        let mut effective = 0;
        let mut ratios = Vec::new();
        for i in 0..100u64 {
            let mut mdp = make_random_tabular_with(3, 2, 0.0, gamma, 1.0, 4000 + i).unwrap();
            // Coordinate-aligned rewards: Lipschitz along the line metric.
            for s in 0..3 {
                for a in 0..2 {
                    mdp.rewards[s * 2 + a] = 0.05 + rew_slope * s as f64 / 2.0 + rng.gen_range(0.0..0.1);
                }
            }
            let mut model = mdp.clone();
            for _ in 0..n_corrupt {
                let (s, a) = (rng.gen_range(0..3), rng.gen_range(0..2));
                let row = model.row_mut(s, a);
                let mut total = 0.0;
                for x in row.iter_mut() {
                    *x = (*x + rng.gen_range((scale * 0.33)..scale)).max(1e-9);
                    total += *x;
                }
                row.iter_mut().for_each(|x| *x /= total);
            }
            let metric = StateMetric::from_line(&[0.0, 1.0, 2.0]);
            let emdp = build_error_mdp(&mdp, &model, Some(&metric), ErrorMetricMode::W1).unwrap();
            let (adv, v_star) = solve_error_mdp(&emdp, 1e-10).unwrap();
            let realized = value_gap(&mdp, &model, &adv).unwrap();
            let (_, sup) = worst_case_gap(&mdp, &model, PolicyClass::AllDeterministic).unwrap();
            let l_v = uniform_value_lipschitz(&model, &metric).unwrap();
            let bound = mdp.discount * l_v * v_star;
            if realized <= bound + 1e-8 && (sup == 0.0 || realized >= 0.5 * sup) {
                effective += 1;
            }
            ratios.push(if sup > 0.0 { realized / sup } else { 1.0 });
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        println!(
            "gamma={gamma} corrupts={n_corrupt} scale={scale} slope={rew_slope}: effective {effective}/100, ratio p10={:.2} p50={:.2}",
            ratios[10], ratios[50]
        );
    }

    for (eta, steps, lambda) in [(0.8, 1, 0.3), (1.2, 1, 0.3), (1.6, 1, 0.3), (1.2, 1, 0.15)] {
        let mut worst: f64 = 0.0;
        for i in 0..10u64 {
            let mdp = make_random_tabular(3, 2, 0.0, i).unwrap();
            let metric = StateMetric::from_line(&[0.0, 1.0, 2.0]);
            let prior = vec![1.0 / 6.0; 6];
            let cfg = SaddleConfig { rounds: 1000, lambda, eta_model: eta, model_steps: steps, checkpoints: vec![10, 100, 1000], ..Default::default() };
            let trace = regularized_game(&mdp, &metric, &prior, &cfg).unwrap();
            let g10 = trace.records[0].gap;
            let g1000 = trace.records.last().unwrap().gap;
            worst = worst.max(g1000 / g10);
            assert!(trace.records.iter().all(|r| r.gap <= r.bound_rhs));
        }
        println!("eta={eta} steps={steps} lambda={lambda}: worst decay {worst:.4}");
    }
}
