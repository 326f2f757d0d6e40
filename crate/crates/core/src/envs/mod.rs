//! Deterministic 2-D environments: four-room maze, block push, rope.

pub mod blockpush;
pub mod maze;
pub mod rope;

use serde::{Deserialize, Serialize};

pub use blockpush::{BlockPushConfig, BlockPushEnv, BlockPushState};
pub use maze::{generate_maze, Grid, MazeConfig, MazeEnv, MazeObservation, MazeSpec, MazeWorld};
pub use rope::{rope_poke, PokeAction, RopeConfig, RopeEnv, RopeState};

use crate::error::Result;
use crate::mdp::Env;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EnvConfig {
    Maze(MazeConfig),
    BlockPush(BlockPushConfig),
    Rope(RopeConfig),
}

impl EnvConfig {
    pub fn name(&self) -> &'static str {
        match self {
            EnvConfig::Maze(_) => "maze",
            EnvConfig::BlockPush(_) => "blockpush",
            EnvConfig::Rope(_) => "rope",
        }
    }

    /// Default environment for a name, with its usual horizon.
    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "maze" => Some(EnvConfig::Maze(MazeConfig::default())),
            "blockpush" | "block-push" => Some(EnvConfig::BlockPush(BlockPushConfig::default())),
            "rope" => Some(EnvConfig::Rope(RopeConfig::default())),
            _ => None,
        }
    }

    pub fn workspace_diameter(&self) -> f64 {
        match self {
            EnvConfig::Maze(c) => c.workspace_diameter(),
            EnvConfig::BlockPush(c) => c.workspace_diameter(),
            EnvConfig::Rope(c) => c.workspace_diameter(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            EnvConfig::Maze(c) => c.horizon,
            EnvConfig::BlockPush(c) => c.horizon,
            EnvConfig::Rope(c) => c.horizon,
        }
    }

    pub fn set_horizon(&mut self, horizon: usize) {
        match self {
            EnvConfig::Maze(c) => c.horizon = horizon,
            EnvConfig::BlockPush(c) => c.horizon = horizon,
            EnvConfig::Rope(c) => c.horizon = horizon,
        }
    }

    pub fn set_threshold(&mut self, threshold: f64) {
        match self {
            EnvConfig::Maze(c) => c.threshold = Some(threshold),
            EnvConfig::BlockPush(c) => c.threshold = Some(threshold),
            EnvConfig::Rope(c) => c.threshold = Some(threshold),
        }
    }

    pub fn build(&self) -> Result<Box<dyn Env>> {
        Ok(match self {
            EnvConfig::Maze(c) => Box::new(MazeEnv::new(c.clone())?),
            EnvConfig::BlockPush(c) => Box::new(BlockPushEnv::new(c.clone())?),
            EnvConfig::Rope(c) => Box::new(RopeEnv::new(c.clone())),
        })
    }
}
