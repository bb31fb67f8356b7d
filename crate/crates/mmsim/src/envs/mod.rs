//! Benchmark environments: random tabular instances, the narrow-passage
//! navigation domain, the minimal-noise misspecification instance, and a
//! biased-coverage continuous environment.

mod biased;
mod minimal_noise;
mod narrow_passage;
mod tabular_gen;

pub use biased::{BiasedCoverageEnv, Transition, ACTION_BOUND as BIASED_ACTION_BOUND};
pub use minimal_noise::{make_minimal_noise_instance, MinimalNoiseInstance};
pub use narrow_passage::{
    NarrowPassage, WallRule, WindRegion, ACTION_BOUND, GOAL_X, HORIZON, NOISE_STD, PASSAGE_Y,
    START, WALL_X, WIND_DY,
};
pub use tabular_gen::{make_random_tabular, make_random_tabular_with};
