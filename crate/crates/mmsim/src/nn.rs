//! Minimal feed-forward network stack: rectifier MLPs with exact manual
//! backprop, Adam, Lipschitz control for critics, and Gaussian dynamics
//! heads. Parameters are plain `f64` vectors; everything is deterministic
//! given a seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum NnError {
    #[error("shape mismatch: expected input of {expected}, got {got}")]
    InputShape { expected: usize, got: usize },
    #[error("non-finite value in {context}")]
    NonFinite { context: &'static str },
    #[error("invalid Lipschitz constant {value}")]
    BadLipschitzConstant { value: f64 },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Fully connected network with rectifier hidden layers and a linear output.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    /// Per layer, row-major out×in.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

pub struct ForwardCache {
    input: Vec<f64>,
    /// Post-activation outputs of each layer (last layer linear).
    activations: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input: Vec<f64>,
}

impl Mlp {
    /// He-style initialization, deterministic per seed.
    pub fn new(sizes: &[usize], seed: u64) -> Self {
        assert!(sizes.len() >= 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        let n_layers = sizes.len() - 1;
        for (l, w) in sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let scale = (2.0 / n_in as f64).sqrt();
            weights.push((0..n_in * n_out).map(|_| scale * gaussian(&mut rng)).collect());
            // Spread hidden rectifier kinks across the input box; zero biases
            // leave the net exactly linear over off-origin regions.
            if l + 1 < n_layers {
                biases.push((0..n_out).map(|_| rng.gen_range(-0.5..0.5)).collect());
            } else {
                biases.push(vec![0.0; n_out]);
            }
        }
        Self { sizes: sizes.to_vec(), weights, biases }
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cache(x).0
    }

    pub fn forward_cache(&self, x: &[f64]) -> (Vec<f64>, ForwardCache) {
        assert_eq!(x.len(), self.input_dim(), "input width");
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers);
        let mut cur = x.to_vec();
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            let mut next = vec![0.0; n_out];
            for o in 0..n_out {
                let mut acc = b[o];
                let row = &w[o * n_in..(o + 1) * n_in];
                for (wi, xi) in row.iter().zip(&cur) {
                    acc += wi * xi;
                }
                next[o] = if l + 1 < n_layers { acc.max(0.0) } else { acc };
            }
            activations.push(next.clone());
            cur = next;
        }
        (cur.clone(), ForwardCache { input: x.to_vec(), activations })
    }

    /// Exact gradients of a scalar loss given `d loss / d output`.
    pub fn backward(&self, cache: &ForwardCache, grad_out: &[f64]) -> Grads {
        let n_layers = self.weights.len();
        let mut gw: Vec<Vec<f64>> = self.weights.iter().map(|w| vec![0.0; w.len()]).collect();
        let mut gb: Vec<Vec<f64>> = self.biases.iter().map(|b| vec![0.0; b.len()]).collect();
        let mut delta = grad_out.to_vec();
        for l in (0..n_layers).rev() {
            let n_in = self.sizes[l];
            let n_out = self.sizes[l + 1];
            if l + 1 < n_layers {
                // Rectifier gate on this layer's outputs.
                for (d, &a) in delta.iter_mut().zip(&cache.activations[l]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            let below: &[f64] = if l == 0 { &cache.input } else { &cache.activations[l - 1] };
            for o in 0..n_out {
                gb[l][o] = delta[o];
                let row = &mut gw[l][o * n_in..(o + 1) * n_in];
                for (g, &x) in row.iter_mut().zip(below) {
                    *g = delta[o] * x;
                }
            }
            let mut next_delta = vec![0.0; n_in];
            for o in 0..n_out {
                let row = &self.weights[l][o * n_in..(o + 1) * n_in];
                for (nd, &w) in next_delta.iter_mut().zip(row) {
                    *nd += delta[o] * w;
                }
            }
            delta = next_delta;
        }
        Grads { weights: gw, biases: gb, input: delta }
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>() + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.param_count());
        let mut i = 0;
        for (w, b) in self.weights.iter_mut().zip(&mut self.biases) {
            let (wn, bn) = (w.len(), b.len());
            w.copy_from_slice(&flat[i..i + wn]);
            i += wn;
            b.copy_from_slice(&flat[i..i + bn]);
            i += bn;
        }
    }

    /// Spectral norm of one weight matrix by power iteration.
    pub fn spectral_norm(&self, layer: usize, iters: usize) -> f64 {
        let n_in = self.sizes[layer];
        let n_out = self.sizes[layer + 1];
        let w = &self.weights[layer];
        let mut v: Vec<f64> = (0..n_in).map(|i| ((i + 1) as f64).sin() + 1.5).collect();
        normalize(&mut v);
        let mut sigma = 0.0;
        for _ in 0..iters {
            let mut u = vec![0.0; n_out];
            for o in 0..n_out {
                for i in 0..n_in {
                    u[o] += w[o * n_in + i] * v[i];
                }
            }
            sigma = normalize(&mut u);
            let mut vt = vec![0.0; n_in];
            for o in 0..n_out {
                for i in 0..n_in {
                    vt[i] += w[o * n_in + i] * u[o];
                }
            }
            normalize(&mut vt);
            v = vt;
        }
        sigma
    }
}

impl Grads {
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn add_scaled(&mut self, other: &Grads, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn zeros_like(mlp: &Mlp) -> Grads {
        Grads {
            weights: mlp.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: mlp.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            input: vec![0.0; mlp.input_dim()],
        }
    }
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

/// Standard normal draw (Box-Muller).
pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Adam on a flat parameter vector; state shaped like the parameters.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: vec![0.0; n_params], v: vec![0.0; n_params] }
    }

    pub fn apply(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(NnError::NonFinite { context: "gradients" });
        }
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let mhat = self.m[i] / b1t;
            let vhat = self.v[i] / b2t;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
        Ok(())
    }
}

/// Lipschitz control for critics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LipschitzMode {
    None,
    WeightClip(f64),
    Projection(f64),
    FiniteDiffPenalty(f64),
}

impl LipschitzMode {
    pub fn weight_clip(c: f64) -> Result<Self, NnError> {
        if c <= 0.0 {
            return Err(NnError::BadLipschitzConstant { value: c });
        }
        Ok(Self::WeightClip(c))
    }

    pub fn projection(l: f64) -> Result<Self, NnError> {
        if l <= 0.0 {
            return Err(NnError::BadLipschitzConstant { value: l });
        }
        Ok(Self::Projection(l))
    }

    pub fn finite_diff_penalty(lambda: f64) -> Result<Self, NnError> {
        if lambda <= 0.0 {
            return Err(NnError::BadLipschitzConstant { value: lambda });
        }
        Ok(Self::FiniteDiffPenalty(lambda))
    }

    /// Target Lipschitz constant for probing, when one is implied.
    pub fn target(&self) -> Option<f64> {
        match self {
            LipschitzMode::Projection(l) => Some(*l),
            LipschitzMode::FiniteDiffPenalty(_) => Some(1.0),
            _ => None,
        }
    }
}

pub const SPECTRAL_POWER_ITERS: usize = 10;

/// Critic over concatenated (s, a, s') with a linear head; an optional tanh
/// squash bounds the output to [-1, 1] for the total-variation game.
#[derive(Clone, Debug)]
pub struct CriticNet {
    pub mlp: Mlp,
    pub mode: LipschitzMode,
    pub squash: bool,
    pub state_dim: usize,
    pub action_dim: usize,
}

impl CriticNet {
    pub fn new(state_dim: usize, action_dim: usize, hidden: usize, mode: LipschitzMode, squash: bool, seed: u64) -> Self {
        let sizes = [state_dim + action_dim + state_dim, hidden, hidden, 1];
        Self { mlp: Mlp::new(&sizes, seed), mode, squash, state_dim, action_dim }
    }

    pub fn input(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(s.len() + a.len() + s_next.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        x.extend_from_slice(s_next);
        x
    }

    pub fn score(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> f64 {
        let raw = self.mlp.forward(&self.input(s, a, s_next))[0];
        if self.squash {
            raw.tanh()
        } else {
            raw
        }
    }

    /// Score plus parameter gradients scaled by `upstream`.
    pub fn score_backward(&self, s: &[f64], a: &[f64], s_next: &[f64], upstream: f64) -> (f64, Grads) {
        let (out, cache) = self.mlp.forward_cache(&self.input(s, a, s_next));
        let raw = out[0];
        let (value, draw) = if self.squash {
            let t = raw.tanh();
            (t, 1.0 - t * t)
        } else {
            (raw, 1.0)
        };
        let grads = self.mlp.backward(&cache, &[upstream * draw]);
        (value, grads)
    }

    /// Apply the configured hard constraint. Weight clipping clamps every
    /// weight; projection rescales layers so the product of spectral norms
    /// stays at or below the target. The penalty mode constrains through the
    /// loss instead and leaves parameters untouched.
    pub fn enforce_lipschitz(&mut self) {
        match self.mode {
            LipschitzMode::None | LipschitzMode::FiniteDiffPenalty(_) => {}
            LipschitzMode::WeightClip(c) => {
                for w in &mut self.mlp.weights {
                    for v in w.iter_mut() {
                        *v = v.clamp(-c, c);
                    }
                }
            }
            LipschitzMode::Projection(l) => {
                let n_layers = self.mlp.weights.len();
                let norms: Vec<f64> =
                    (0..n_layers).map(|i| self.mlp.spectral_norm(i, SPECTRAL_POWER_ITERS)).collect();
                let product: f64 = norms.iter().product();
                if product > l {
                    let shrink = (l / product).powf(1.0 / n_layers as f64);
                    for w in &mut self.mlp.weights {
                        for v in w.iter_mut() {
                            *v *= shrink;
                        }
                    }
                }
            }
        }
    }

    /// Gradient-penalty term `λ·(‖∇_{s'} D‖ − 1)²` at an interpolate, with the
    /// input gradient estimated by symmetric finite differences per next-state
    /// coordinate. Returns the penalty value and its parameter gradient
    /// (first-order backprop through each probe).
    pub fn gradient_penalty(&self, s: &[f64], a: &[f64], s_tilde: &[f64], lambda: f64) -> (f64, Grads) {
        self.gradient_penalty_impl(s, a, s_tilde, lambda, false)
    }

    /// One-sided variant `λ·max(0, ‖∇_{s'} D‖ − 1)²`. The duality constraint
    /// is an upper bound on the slope; the symmetric form also pushes flat
    /// segments toward unit slope, which pins wrongly oriented pieces.
    pub fn gradient_penalty_one_sided(&self, s: &[f64], a: &[f64], s_tilde: &[f64], lambda: f64) -> (f64, Grads) {
        self.gradient_penalty_impl(s, a, s_tilde, lambda, true)
    }

    fn gradient_penalty_impl(
        &self,
        s: &[f64],
        a: &[f64],
        s_tilde: &[f64],
        lambda: f64,
        one_sided: bool,
    ) -> (f64, Grads) {
        let h = 1e-4;
        let dim = s_tilde.len();
        let mut comp = vec![0.0; dim];
        let mut probe_grads: Vec<(Grads, Grads)> = Vec::with_capacity(dim);
        for i in 0..dim {
            let mut plus = s_tilde.to_vec();
            plus[i] += h;
            let mut minus = s_tilde.to_vec();
            minus[i] -= h;
            let (vp, gp) = self.score_backward(s, a, &plus, 1.0);
            let (vm, gm) = self.score_backward(s, a, &minus, 1.0);
            comp[i] = (vp - vm) / (2.0 * h);
            probe_grads.push((gp, gm));
        }
        let norm = comp.iter().map(|c| c * c).sum::<f64>().sqrt().max(1e-12);
        if one_sided && norm <= 1.0 {
            return (0.0, Grads::zeros_like(&self.mlp));
        }
        let penalty = lambda * (norm - 1.0) * (norm - 1.0);
        // d penalty / d θ = 2λ(‖g‖−1)/‖g‖ · Σ_i g_i · dg_i/dθ.
        let scale = 2.0 * lambda * (norm - 1.0) / norm;
        let mut grads = Grads::zeros_like(&self.mlp);
        for (i, (gp, gm)) in probe_grads.iter().enumerate() {
            let c = scale * comp[i] / (2.0 * h);
            grads.add_scaled(gp, c);
            grads.add_scaled(gm, -c);
        }
        (penalty, grads)
    }

    /// Empirical Lipschitz ratio over random input pairs.
    pub fn lipschitz_probe(&self, n_pairs: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = self.mlp.input_dim();
        let mut worst = 0.0f64;
        for _ in 0..n_pairs {
            let x: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let dist = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dist < 1e-9 {
                continue;
            }
            let fx = self.mlp.forward(&x)[0];
            let fy = self.mlp.forward(&y)[0];
            worst = worst.max((fx - fy).abs() / dist);
        }
        worst
    }
}

pub const LOGVAR_CLAMP: (f64, f64) = (-10.0, 2.0);

/// Gaussian dynamics model: (s, a) → next-state mean and log-variance per
/// dimension plus a predicted reward.
#[derive(Clone, Debug)]
pub struct GaussianModel {
    pub mlp: Mlp,
    pub state_dim: usize,
    pub action_dim: usize,
    pub logvar_clamp: (f64, f64),
}

pub struct GaussianOutput {
    pub mean: Vec<f64>,
    pub logvar: Vec<f64>,
    pub reward: f64,
    /// Per-dimension clamp mask; clamped log-variances pass no gradient.
    clamped: Vec<bool>,
    cache: ForwardCache,
}

impl GaussianModel {
    pub fn new(state_dim: usize, action_dim: usize, hidden: usize, seed: u64) -> Self {
        let sizes = [state_dim + action_dim, hidden, hidden, 2 * state_dim + 1];
        let mut mlp = Mlp::new(&sizes, seed);
        // Start with small predicted variance; wide initial clouds stall the
        // adversarial games.
        let last = mlp.biases.len() - 1;
        for i in state_dim..2 * state_dim {
            mlp.biases[last][i] = -2.0;
        }
        Self { mlp, state_dim, action_dim, logvar_clamp: LOGVAR_CLAMP }
    }

    pub fn predict(&self, s: &[f64], a: &[f64]) -> GaussianOutput {
        let mut x = Vec::with_capacity(s.len() + a.len());
        x.extend_from_slice(s);
        x.extend_from_slice(a);
        let (out, cache) = self.mlp.forward_cache(&x);
        let d = self.state_dim;
        let mean = out[..d].to_vec();
        let mut logvar = Vec::with_capacity(d);
        let mut clamped = Vec::with_capacity(d);
        for &raw in &out[d..2 * d] {
            let c = raw.clamp(self.logvar_clamp.0, self.logvar_clamp.1);
            clamped.push(c != raw);
            logvar.push(c);
        }
        GaussianOutput { mean, logvar, reward: out[2 * d], clamped, cache }
    }

    /// Reparameterized draw `mean + exp(½ logvar)·noise`.
    pub fn sample(&self, s: &[f64], a: &[f64], noise: &[f64]) -> Vec<f64> {
        let out = self.predict(s, a);
        out.mean
            .iter()
            .zip(&out.logvar)
            .zip(noise)
            .map(|((m, lv), n)| m + (0.5 * lv).exp() * n)
            .collect()
    }

    /// Log-density of `s_next` under the predicted Gaussian.
    pub fn logprob(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> f64 {
        let out = self.predict(s, a);
        log_density(&out.mean, &out.logvar, s_next)
    }

    /// Parameter gradients given gradients on (mean, logvar, reward).
    pub fn backward(&self, out: &GaussianOutput, d_mean: &[f64], d_logvar: &[f64], d_reward: f64) -> Grads {
        let d = self.state_dim;
        let mut grad_out = vec![0.0; 2 * d + 1];
        grad_out[..d].copy_from_slice(d_mean);
        for i in 0..d {
            grad_out[d + i] = if out.clamped[i] { 0.0 } else { d_logvar[i] };
        }
        grad_out[2 * d] = d_reward;
        self.mlp.backward(&out.cache, &grad_out)
    }

    /// Gradient of `−log p(s_next | s, a)` with respect to the parameters,
    /// plus the loss value.
    pub fn nll_backward(&self, s: &[f64], a: &[f64], s_next: &[f64]) -> (f64, Grads) {
        let out = self.predict(s, a);
        let mut d_mean = vec![0.0; self.state_dim];
        let mut d_logvar = vec![0.0; self.state_dim];
        let mut nll = 0.0;
        for i in 0..self.state_dim {
            let var = out.logvar[i].exp();
            let diff = s_next[i] - out.mean[i];
            nll += 0.5 * ((2.0 * std::f64::consts::PI).ln() + out.logvar[i] + diff * diff / var);
            d_mean[i] = -diff / var;
            d_logvar[i] = 0.5 - 0.5 * diff * diff / var;
        }
        let grads = self.backward(&out, &d_mean, &d_logvar, 0.0);
        (nll, grads)
    }
}

pub fn log_density(mean: &[f64], logvar: &[f64], x: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let var = logvar[i].exp();
        let diff = x[i] - mean[i];
        lp -= 0.5 * ((2.0 * std::f64::consts::PI).ln() + logvar[i] + diff * diff / var);
    }
    lp
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"MMCP";
const CHECKPOINT_VERSION: u32 = 1;

/// Versioned flat binary checkpoint: magic, version, count, then f64 LE data.
pub fn save_params(path: &Path, params: &[f64]) -> Result<(), NnError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    f.write_all(&(params.len() as u64).to_le_bytes())?;
    for p in params {
        f.write_all(&p.to_le_bytes())?;
    }
    Ok(())
}

pub fn load_params(path: &Path) -> Result<Vec<f64>, NnError> {
    let mut f = std::fs::File::open(path)?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::Checkpoint("bad magic".into()));
    }
    let mut ver = [0u8; 4];
    f.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != CHECKPOINT_VERSION {
        return Err(NnError::Checkpoint(format!("unsupported version {}", u32::from_le_bytes(ver))));
    }
    let mut len = [0u8; 8];
    f.read_exact(&mut len)?;
    let n = u64::from_le_bytes(len) as usize;
    let mut out = Vec::with_capacity(n);
    let mut buf = [0u8; 8];
    for _ in 0..n {
        f.read_exact(&mut buf)?;
        out.push(f64::from_le_bytes(buf));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Central finite differences over every parameter of a scalar loss.
    fn fd_param_grads(loss: &mut dyn FnMut(&[f64]) -> f64, params: &[f64], h: f64) -> Vec<f64> {
        let mut out = vec![0.0; params.len()];
        let mut p = params.to_vec();
        for i in 0..params.len() {
            let orig = p[i];
            p[i] = orig + h;
            let up = loss(&p);
            p[i] = orig - h;
            let down = loss(&p);
            p[i] = orig;
            out[i] = (up - down) / (2.0 * h);
        }
        out
    }

    fn assert_grads_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        assert_grads_close_floor(analytic, numeric, tol, 1e-6);
    }

    fn assert_grads_close_floor(analytic: &[f64], numeric: &[f64], tol: f64, floor: f64) {
        for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
            let denom = a.abs().max(n.abs()).max(floor);
            assert!(
                (a - n).abs() / denom <= tol,
                "grad {i}: analytic {a} vs numeric {n} (rel {})",
                (a - n).abs() / denom
            );
        }
    }

    #[test]
    fn zero_weight_net_outputs_bias() {
        let mut net = Mlp::new(&[3, 4, 2], 0);
        for w in &mut net.weights {
            w.iter_mut().for_each(|v| *v = 0.0);
        }
        net.biases[1] = vec![0.7, -0.2];
        let out = net.forward(&[1.0, 2.0, 3.0]);
        assert_eq!(out, vec![0.7, -0.2]);
    }

    #[test]
    fn linear_layer_gradient_has_outer_product_form() {
        // Single linear layer, loss ½‖Wx+b‖²: dW = (Wx+b)·xᵀ.
        let net = Mlp::new(&[2, 2], 3);
        let x = [0.3, -0.8];
        let (out, cache) = net.forward_cache(&x);
        let grads = net.backward(&cache, &out);
        for o in 0..2 {
            for i in 0..2 {
                let expect = out[o] * x[i];
                assert!((grads.weights[0][o * 2 + i] - expect).abs() < 1e-12);
            }
            assert!((grads.biases[0][o] - out[o]).abs() < 1e-12);
        }
    }

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let net = Mlp::new(&[3, 8, 8, 2], 11);
        let x = [0.4, -0.2, 0.9];
        let target = [0.5, -1.0];
        // Loss: ½‖f(x) − t‖².
        let (out, cache) = net.forward_cache(&x);
        let grad_out: Vec<f64> = out.iter().zip(&target).map(|(o, t)| o - t).collect();
        let analytic = net.backward(&cache, &grad_out).flat();

        let mut probe = net.clone();
        let mut loss = |p: &[f64]| {
            probe.set_flat_params(p);
            let o = probe.forward(&x);
            0.5 * o.iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let numeric = fd_param_grads(&mut loss, &net.flat_params(), 1e-5);
        assert_grads_close(&analytic, &numeric, 1e-4);
    }

    #[test]
    fn critic_gradients_match_finite_differences() {
        for &squash in &[false, true] {
            let critic = CriticNet::new(2, 2, 6, LipschitzMode::None, squash, 5);
            let (s, a, sn) = ([0.2, 0.7], [0.05, -0.03], [0.25, 0.68]);
            let (_, grads) = critic.score_backward(&s, &a, &sn, 1.0);
            let analytic = grads.flat();
            let mut probe = critic.clone();
            let mut loss = |p: &[f64]| {
                probe.mlp.set_flat_params(p);
                probe.score(&s, &a, &sn)
            };
            let numeric = fd_param_grads(&mut loss, &critic.mlp.flat_params(), 1e-5);
            assert_grads_close(&analytic, &numeric, 1e-4);
        }
    }

    #[test]
    fn gaussian_model_nll_gradients_match_finite_differences() {
        let model = GaussianModel::new(2, 1, 6, 9);
        let (s, a, sn) = ([0.1, -0.4], [0.08], [0.2, -0.3]);
        let (_, grads) = model.nll_backward(&s, &a, &sn);
        let analytic = grads.flat();
        let mut probe = model.clone();
        let mut loss = |p: &[f64]| {
            probe.mlp.set_flat_params(p);
            -probe.logprob(&s, &a, &sn)
        };
        let numeric = fd_param_grads(&mut loss, &model.mlp.flat_params(), 1e-5);
        assert_grads_close(&analytic, &numeric, 1e-4);
    }

    #[test]
    fn gaussian_sampling_and_logprob_basics() {
        let model = GaussianModel::new(2, 1, 6, 2);
        let s = [0.3, 0.3];
        let a = [0.0];
        let out = model.predict(&s, &a);
        // Zero noise returns the mean.
        let sample = model.sample(&s, &a, &[0.0, 0.0]);
        for (x, m) in sample.iter().zip(&out.mean) {
            assert!((x - m).abs() < 1e-12);
        }
        // Log-density of the mean under unit variance in 1-D is −½ log 2π.
        let lp = log_density(&[0.0], &[0.0], &[0.0]);
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-12);
        // Log-prob of its own sample is finite.
        let drawn = model.sample(&s, &a, &[1.3, -0.4]);
        assert!(model.logprob(&s, &a, &drawn).is_finite());
    }

    #[test]
    fn reparameterized_mean_gradient_is_unit() {
        // d sample / d mean-bias = 1 through the reparameterization.
        let model = GaussianModel::new(1, 1, 4, 8);
        let (s, a) = ([0.2], [0.1]);
        let noise = [0.7];
        let out = model.predict(&s, &a);
        let grads = model.backward(&out, &[1.0], &[0.5 * (0.5 * out.logvar[0]).exp() * noise[0]], 0.0);
        let analytic = grads.flat();
        let mut probe = model.clone();
        let mut loss = |p: &[f64]| {
            probe.mlp.set_flat_params(p);
            probe.sample(&s, &a, &noise)[0]
        };
        let numeric = fd_param_grads(&mut loss, &model.mlp.flat_params(), 1e-5);
        assert_grads_close(&analytic, &numeric, 1e-4);
    }

    #[test]
    fn adam_step_properties() {
        let mut adam = AdamState::new(0.01, 1);
        let mut p = vec![1.0];
        adam.apply(&mut p, &[0.0]).unwrap();
        assert_eq!(p[0], 1.0, "zero gradient must not move parameters");
        // Bias correction makes the very first nonzero step ≈ −lr·sign(grad).
        let mut fresh = AdamState::new(0.01, 1);
        let mut q = vec![1.0];
        fresh.apply(&mut q, &[2.5]).unwrap();
        assert!((q[0] - (1.0 - 0.01)).abs() < 1e-6, "first step ≈ −lr·sign(grad), got {}", q[0]);
        assert!(fresh.apply(&mut q, &[f64::NAN]).is_err());
    }

    #[test]
    fn identical_seeds_give_identical_training() {
        let run = || {
            let mut net = Mlp::new(&[2, 8, 1], 77);
            let mut adam = AdamState::new(3e-4, net.param_count());
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..50 {
                let x = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
                let target = x[0] * 0.5 - x[1];
                let (out, cache) = net.forward_cache(&x);
                let g = net.backward(&cache, &[out[0] - target]);
                let mut flat = net.flat_params();
                adam.apply(&mut flat, &g.flat()).unwrap();
                net.set_flat_params(&flat);
            }
            net.flat_params()
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn weight_clip_and_projection() {
        let mut critic = CriticNet::new(1, 1, 4, LipschitzMode::weight_clip(0.2).unwrap(), false, 3);
        let before = critic.mlp.flat_params();
        critic.enforce_lipschitz();
        for w in &critic.mlp.weights {
            assert!(w.iter().all(|v| v.abs() <= 0.2 + 1e-12));
        }
        // Weights already in range stay put.
        let mut small = CriticNet::new(1, 1, 4, LipschitzMode::weight_clip(100.0).unwrap(), false, 3);
        small.enforce_lipschitz();
        assert_eq!(small.mlp.flat_params(), before);

        // Single linear layer with weight 2I projects to operator norm 1.
        let mut lin = CriticNet::new(1, 1, 4, LipschitzMode::projection(1.0).unwrap(), false, 3);
        lin.mlp = Mlp::new(&[2, 2], 0);
        lin.mlp.weights[0] = vec![2.0, 0.0, 0.0, 2.0];
        lin.mlp.biases[0] = vec![0.0, 0.0];
        lin.enforce_lipschitz();
        let sigma = lin.mlp.spectral_norm(0, 30);
        assert!((sigma - 1.0).abs() < 1e-6, "projected norm {sigma}");

        assert!(LipschitzMode::weight_clip(0.0).is_err());
        assert!(LipschitzMode::projection(-1.0).is_err());
        assert!(LipschitzMode::finite_diff_penalty(0.0).is_err());
    }

    #[test]
    fn projected_critic_passes_empirical_probe() {
        for target in [1.0, 3.0] {
            let mut critic = CriticNet::new(2, 2, 16, LipschitzMode::projection(target).unwrap(), false, 21);
            // Inflate weights, then project.
            for w in &mut critic.mlp.weights {
                w.iter_mut().for_each(|v| *v *= 4.0);
            }
            critic.enforce_lipschitz();
            let ratio = critic.lipschitz_probe(1000, 9);
            assert!(ratio <= 1.01 * target, "probe {ratio} above {target}");
        }
    }

    #[test]
    fn gradient_penalty_param_gradients_match_fd() {
        let critic = CriticNet::new(2, 1, 5, LipschitzMode::finite_diff_penalty(10.0).unwrap(), false, 13);
        let (s, a, st) = ([0.1, 0.2], [0.0], [0.15, 0.22]);
        let (_, grads) = critic.gradient_penalty(&s, &a, &st, 10.0);
        let analytic = grads.flat();
        let mut probe = critic.clone();
        let mut loss = |p: &[f64]| {
            probe.mlp.set_flat_params(p);
            probe.gradient_penalty(&s, &a, &st, 10.0).0
        };
        let numeric = fd_param_grads(&mut loss, &critic.mlp.flat_params(), 1e-6);
        // Dead rectifier paths carry exact zeros; compare above the nested-probe noise.
        assert_grads_close_floor(&analytic, &numeric, 1e-3, 1e-3);
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = std::env::temp_dir().join("mmsim_ckpt_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("net.ckpt");
        let net = Mlp::new(&[3, 5, 1], 123);
        save_params(&path, &net.flat_params()).unwrap();
        let loaded = load_params(&path).unwrap();
        assert_eq!(net.flat_params(), loaded);
        std::fs::write(&path, b"XXXX").unwrap();
        assert!(load_params(&path).is_err());
    }
}
