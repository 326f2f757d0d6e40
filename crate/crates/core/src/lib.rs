//! Hierarchical goal-conditioned reinforcement learning with a curriculum of
//! achievable subgoals.
//!
//! A higher policy proposes subgoals every `c` steps and a lower primitive
//! pursues them. Expert state demonstrations are periodically re-segmented with
//! the *current* lower primitive ([`relabel::pip_parse`]) and the resulting
//! subgoal transitions regularize the higher policy through an LSGAN-style
//! discriminator ([`regularize`]). Both levels learn with soft actor-critic.
//!
//! Module map:
//!
//! - [`mdp`]: goal-conditioned environment contract and sparse rewards.
//! - [`envs`]: deterministic 2-D maze, block-push and rope environments.
//! - [`demos`]: expert generators (RRT, scripted push, rope poker) and dataset IO.
//! - [`approx`]: fully connected networks with explicit backprop, and Adam.
//! - [`rl`]: goal-conditioned SAC and the replay buffer.
//! - [`hierarchy`]: two-level episode runner and reward shaping.
//! - [`relabel`]: primitive-informed parsing and fixed-window parsing.
//! - [`regularize`]: discriminators, IRL and BC regularizers.
//! - [`harness`]: training loop, evaluation, sweeps, plotting, checkpoints.

pub mod approx;
pub mod demos;
pub mod envs;
pub mod error;
pub mod harness;
pub mod hierarchy;
pub mod mdp;
pub mod regularize;
pub mod relabel;
pub mod rl;

pub use error::{Error, Result};
