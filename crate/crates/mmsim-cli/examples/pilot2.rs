use mmsim::active::{predict_next, train_dynamics_mlp, WeightedTransition};
use mmsim::envs::NarrowPassage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() {
    let env = NarrowPassage::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    // Round-1-style data: uniform batch + probes, ~11k samples.
    let mut data = Vec::new();
    for _ in 0..11000 {
        let s = vec![rng.gen::<f64>(), rng.gen::<f64>()];
        let a = vec![rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
        let next = env.step_random([s[0], s[1]], [a[0], a[1]], &mut rng).unwrap().to_vec();
        data.push(WeightedTransition { s, a, s_next: next, weight: 1.0 });
    }
    for steps in [3000usize, 8000, 16000] {
        let model = train_dynamics_mlp(&data, 2, 2, 64, steps, 3e-3, 9).unwrap();
        // True bias field: |E[s'] - pred| via noiseless mean — approximate the
        // conditional mean with 64 noisy draws.
        let mut band_bias = 0.0;
        let mut out_bias = 0.0;
        let (mut nb, mut no) = (0, 0);
        for _ in 0..600 {
            let s = vec![rng.gen::<f64>(), rng.gen::<f64>()];
            let a = vec![rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let mut mean = [0.0, 0.0];
            for _ in 0..64 {
                let n = env.step_random([s[0], s[1]], [a[0], a[1]], &mut rng).unwrap();
                mean[0] += n[0] / 64.0;
                mean[1] += n[1] / 64.0;
            }
            let pred = predict_next(&model, &s, &a);
            let b = ((mean[0] - pred[0]).powi(2) + (mean[1] - pred[1]).powi(2)).sqrt();
            if (0.4..=0.6).contains(&s[0]) {
                band_bias += b;
                nb += 1;
            } else {
                out_bias += b;
                no += 1;
            }
        }
        println!(
            "model_steps={steps}: true |bias| band {:.4} out {:.4} (ratio {:.2})",
            band_bias / nb as f64,
            out_bias / no as f64,
            (band_bias / nb as f64) / (out_bias / no as f64)
        );
    }
}
