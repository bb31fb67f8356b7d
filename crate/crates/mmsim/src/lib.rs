//! Minimax simulator learning on desk-scale problems.
//!
//! The library provides exact tabular MDP machinery, one-step divergences and
//! their value-gap bridges, a small feed-forward network stack, adversarial
//! training games (critic-based and online), error-seeking adversaries built
//! from error-reward MDPs, and active data-selection loops with convergence
//! accounting. Everything is deterministic given explicit seeds.

pub mod active;
pub mod envs;
pub mod error_mdp;
pub mod games;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod metrics;
pub mod nn;
pub mod ot;

#[cfg(test)]
pub(crate) mod testutil;
