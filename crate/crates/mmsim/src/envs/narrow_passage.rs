//! Narrow-passage navigation: a 2-D box split by a wall with a small gap,
//! and a downward wind field around the gap. Model errors concentrate in a
//! region uniform exploration rarely covers.

use rand::Rng;

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("action ({0}, {1}) outside [-0.1, 0.1]^2")]
    ActionOutOfBox(f64, f64),
    #[error("state ({0}, {1}) outside [0, 1]^2")]
    StateOutOfBox(f64, f64),
}

/// How the wall resolves blocked motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallRule {
    /// Truncate the x component at the wall, keep the y component.
    Truncate,
    /// Blocked motion leaves the state unchanged.
    Reject,
}

/// Extent of the wind field along x (the y band is the passage itself).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WindRegion {
    /// Inside the passage plus the approach band in front of it.
    ApproachAndInside,
    /// Only inside the passage.
    InsideOnly,
}

pub const ACTION_BOUND: f64 = 0.1;
pub const WALL_X: f64 = 0.5;
pub const PASSAGE_Y: (f64, f64) = (0.45, 0.55);
pub const WIND_DY: f64 = -0.05;
pub const NOISE_STD: f64 = 0.1;
pub const START: (f64, f64) = (0.1, 0.5);
pub const GOAL_X: f64 = 0.9;
pub const HORIZON: usize = 200;
const WALL_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug)]
pub struct NarrowPassage {
    pub wall_rule: WallRule,
    pub wind_region: WindRegion,
    pub noise_std: f64,
}

impl Default for NarrowPassage {
    fn default() -> Self {
        Self { wall_rule: WallRule::Truncate, wind_region: WindRegion::ApproachAndInside, noise_std: NOISE_STD }
    }
}

impl NarrowPassage {
    fn wind_x_band(&self) -> (f64, f64) {
        match self.wind_region {
            WindRegion::ApproachAndInside => (0.4, 0.55),
            WindRegion::InsideOnly => (0.45, 0.55),
        }
    }

    pub fn in_wind_region(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.wind_x_band();
        x >= lo && x <= hi && y >= PASSAGE_Y.0 && y <= PASSAGE_Y.1
    }

    /// One transition given an explicit noise draw. Nominal motion plus noise,
    /// wind offset when the agent stands in the wind region, wall truncation
    /// for crossings outside the passage, then clamping to the box.
    pub fn step(&self, state: [f64; 2], action: [f64; 2], noise: [f64; 2]) -> Result<[f64; 2], EnvError> {
        let [x, y] = state;
        let [ax, ay] = action;
        if ax.abs() > ACTION_BOUND + 1e-12 || ay.abs() > ACTION_BOUND + 1e-12 {
            return Err(EnvError::ActionOutOfBox(ax, ay));
        }
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(EnvError::StateOutOfBox(x, y));
        }
        let dx = ax + noise[0];
        let mut dy = ay + noise[1];
        if self.in_wind_region(x, y) {
            dy += WIND_DY;
        }
        let mut nx = x + dx;
        let ny = y + dy;
        // A straight step crosses the wall at most once; the crossing point
        // decides whether the passage lets it through.
        let crosses = (x - WALL_X) * (nx - WALL_X) < 0.0;
        if crosses {
            let t = (WALL_X - x) / dx;
            let y_cross = y + t * dy;
            if !(PASSAGE_Y.0..=PASSAGE_Y.1).contains(&y_cross) {
                match self.wall_rule {
                    WallRule::Truncate => {
                        nx = if x < WALL_X { WALL_X - WALL_EPS } else { WALL_X + WALL_EPS };
                    }
                    WallRule::Reject => {
                        return Ok(state);
                    }
                }
            }
        }
        Ok([nx.clamp(0.0, 1.0), ny.clamp(0.0, 1.0)])
    }

    /// Transition with internally drawn Gaussian noise.
    pub fn step_random<R: Rng>(&self, state: [f64; 2], action: [f64; 2], rng: &mut R) -> Result<[f64; 2], EnvError> {
        let noise = [self.noise_std * gaussian(rng), self.noise_std * gaussian(rng)];
        self.step(state, action, noise)
    }

    /// Sparse task reward: 1 on entering the goal region.
    pub fn task_reward(&self, next_state: [f64; 2]) -> f64 {
        if next_state[0] > GOAL_X {
            1.0
        } else {
            0.0
        }
    }

    pub fn is_terminal(&self, state: [f64; 2]) -> bool {
        state[0] > GOAL_X
    }
}

pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller.
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normal_region_motion() {
        let env = NarrowPassage::default();
        let s = env.step([0.2, 0.5], [0.05, 0.0], [0.0, 0.0]).unwrap();
        assert!((s[0] - 0.25).abs() < 1e-12 && (s[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wind_applies_inside_passage() {
        let env = NarrowPassage::default();
        let s = env.step([0.48, 0.5], [0.05, 0.0], [0.0, 0.0]).unwrap();
        assert!((s[0] - 0.53).abs() < 1e-12 && (s[1] - 0.45).abs() < 1e-12);
    }

    #[test]
    fn wall_truncates_blocked_crossing() {
        let env = NarrowPassage::default();
        let s = env.step([0.45, 0.2], [0.1, 0.0], [0.0, 0.0]).unwrap();
        assert!(s[0] < WALL_X && s[0] > WALL_X - 1e-6, "x {}", s[0]);
        assert!((s[1] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn reject_rule_leaves_state_unchanged() {
        let env = NarrowPassage { wall_rule: WallRule::Reject, ..Default::default() };
        let s = env.step([0.45, 0.2], [0.1, 0.0], [0.0, 0.0]).unwrap();
        assert_eq!(s, [0.45, 0.2]);
    }

    #[test]
    fn out_of_box_action_rejected() {
        let env = NarrowPassage::default();
        assert!(env.step([0.2, 0.2], [0.2, 0.0], [0.0, 0.0]).is_err());
    }

    #[test]
    fn wall_never_crossed_outside_passage() {
        let env = NarrowPassage::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let mut s = [START.0, START.1];
        for step in 0..100_000 {
            let a = [rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)];
            let prev = s;
            s = env.step_random(s, a, &mut rng).unwrap();
            let crossed = (prev[0] - WALL_X) * (s[0] - WALL_X) < 0.0;
            if crossed {
                // Interpolated y at the wall must be in the passage band.
                let t = (WALL_X - prev[0]) / (s[0] - prev[0]);
                let y_cross = prev[1] + t * (s[1] - prev[1]);
                assert!(
                    (PASSAGE_Y.0 - 1e-9..=PASSAGE_Y.1 + 1e-9).contains(&y_cross),
                    "illegal crossing at step {step}: y {y_cross}"
                );
            }
            if rng.gen::<f64>() < 0.01 {
                s = [rng.gen(), rng.gen()]; // teleport to probe the whole box
            }
        }
    }

    #[test]
    fn wind_shifts_mean_y_displacement_by_its_magnitude() {
        let env = NarrowPassage::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut inside = 0.0;
        let mut outside = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let noise = [env.noise_std * gaussian(&mut rng), env.noise_std * gaussian(&mut rng)];
            let a = [0.0, rng.gen_range(-0.02..0.02)];
            // Paired samples: same action and noise, inside vs outside the wind region.
            let si = env.step([0.45, 0.5], a, noise).unwrap();
            let so = env.step([0.2, 0.5], a, noise).unwrap();
            inside += si[1] - 0.5;
            outside += so[1] - 0.5;
        }
        let diff = inside / n as f64 - outside / n as f64;
        assert!((diff - WIND_DY).abs() < 0.005, "wind displacement {diff}");
    }

    #[test]
    fn goal_reward_is_sparse() {
        let env = NarrowPassage::default();
        assert_eq!(env.task_reward([0.95, 0.5]), 1.0);
        assert_eq!(env.task_reward([0.89, 0.5]), 0.0);
        assert!(env.is_terminal([0.91, 0.1]));
    }
}
