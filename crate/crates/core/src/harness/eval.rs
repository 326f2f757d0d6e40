use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::mdp::Env;

/// Held-out episode seeds. Training seeds never have the top bit set, so a
/// suite built by [`EvalSuite::held_out`] cannot overlap them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalSuite {
    pub seeds: Vec<u64>,
}

const HELD_OUT_BIT: u64 = 1 << 63;

impl EvalSuite {
    pub fn held_out(n: usize) -> Self {
        Self {
            seeds: (0..n as u64).map(|i| HELD_OUT_BIT | i).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Seed of the `episode`-th training episode of run `seed`.
pub fn training_seed(seed: u64, episode: u64) -> u64 {
    splitmix(splitmix(seed ^ 0x7261_696e) ^ episode) & !HELD_OUT_BIT
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Something that can play one evaluation episode from the env's current
/// state and goal. Returns whether the episode goal was reached.
pub trait EvalPolicy {
    fn rollout(&mut self, env: &mut dyn Env) -> Result<bool>;
}

/// Success rate over the first `n_rollouts` instances of `suite`.
pub fn evaluate(policy: &mut dyn EvalPolicy, env: &mut dyn Env, suite: &EvalSuite, n_rollouts: usize) -> Result<f64> {
    if n_rollouts == 0 {
        return Err(Error::Config("need at least one evaluation rollout".into()));
    }
    if n_rollouts > suite.seeds.len() {
        return Err(Error::Config(format!(
            "suite has {} instances, {n_rollouts} rollouts requested",
            suite.seeds.len()
        )));
    }
    let mut wins = 0;
    for &seed in &suite.seeds[..n_rollouts] {
        env.reset(seed);
        wins += usize::from(policy.rollout(env)?);
    }
    Ok(wins as f64 / n_rollouts as f64)
}

/// [`evaluate`] on a fresh environment built from `cfg`.
pub fn evaluate_config(policy: &mut dyn EvalPolicy, cfg: &EnvConfig, suite: &EvalSuite, n_rollouts: usize) -> Result<f64> {
    let mut env = cfg.build()?;
    evaluate(policy, env.as_mut(), suite, n_rollouts)
}
