//! Two-level control: the higher policy proposes a subgoal every `c` steps
//! and the lower primitive pursues it. Rewards are routed per level: the lower
//! level sees only the intrinsic reward against its subgoal, the higher level
//! only the extrinsic reward against the episode goal.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sparse_reward, ActionVec, Env, GoalVec, StateVec};
use crate::rl::{ReplayRecord, RewardSource};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    /// Primitive steps per subgoal.
    pub c: usize,
    pub delta_low: f64,
    pub delta_high: f64,
    pub horizon: usize,
}

impl HierarchyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.c == 0 || self.c > self.horizon {
            return Err(Error::Config(format!(
                "need 1 <= c <= T, got c={} T={}",
                self.c, self.horizon
            )));
        }
        if !(self.delta_low > 0.0 && self.delta_high > 0.0) {
            return Err(Error::Config("success thresholds must be positive".into()));
        }
        Ok(())
    }
}

/// Proposes a raw subgoal in `(-1, 1)^goal_dim` for `(state, goal)`.
pub trait SubgoalPolicy {
    fn propose(&mut self, state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>>;

    /// Raw output together with its goal-space image. Policies that already
    /// know the exact goal-space point may override this to skip the
    /// round trip through the goal box.
    fn subgoal(&mut self, state: &StateVec, goal: &GoalVec, env: &dyn Env) -> Result<(Vec<f64>, GoalVec)> {
        let raw = self.propose(state, goal)?;
        let g = subgoal_to_goal_space(&raw, env)?;
        Ok((raw, g))
    }
}

/// Degenerate higher level that hands the episode goal straight to the
/// primitive. With `c = T` this turns the hierarchy into a single-level agent.
pub struct GoalPassthrough;

impl SubgoalPolicy for GoalPassthrough {
    fn propose(&mut self, _state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>> {
        Ok(goal.0.clone())
    }

    fn subgoal(&mut self, _state: &StateVec, goal: &GoalVec, env: &dyn Env) -> Result<(Vec<f64>, GoalVec)> {
        Ok((env.goal_bounds().to_raw(goal)?, goal.clone()))
    }
}

/// Chooses a primitive action toward a goal-space target.
pub trait Primitive {
    fn act(&mut self, state: &StateVec, target: &GoalVec) -> Result<ActionVec>;
}

impl<F> SubgoalPolicy for F
where
    F: FnMut(&StateVec, &GoalVec) -> Result<Vec<f64>>,
{
    fn propose(&mut self, state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>> {
        self(state, goal)
    }
}

/// Wrapper so closures can act as primitives without clashing with the
/// blanket [`SubgoalPolicy`] impl.
pub struct FnPrimitive<F>(pub F);

impl<F> Primitive for FnPrimitive<F>
where
    F: FnMut(&StateVec, &GoalVec) -> Result<ActionVec>,
{
    fn act(&mut self, state: &StateVec, target: &GoalVec) -> Result<ActionVec> {
        (self.0)(state, target)
    }
}

/// Maps a raw higher-level output onto the environment's goal box.
pub fn subgoal_to_goal_space(raw: &[f64], env: &dyn Env) -> Result<GoalVec> {
    env.goal_bounds().to_goal(raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HigherTransition {
    pub state: StateVec,
    pub goal: GoalVec,
    pub subgoal_raw: Vec<f64>,
    pub subgoal: GoalVec,
    /// Extrinsic reward at the end of the block.
    pub reward: f64,
    pub next_state: StateVec,
    pub done: bool,
    /// The lower primitive was within `delta_low` of the subgoal at some step of the block.
    pub reached: bool,
    pub steps: usize,
}

impl HigherTransition {
    /// Replay record for the higher agent, whose action is the raw subgoal.
    pub fn to_record(&self, reward: f64) -> ReplayRecord {
        ReplayRecord {
            state: self.state.clone(),
            goal: self.goal.clone(),
            action: ActionVec(self.subgoal_raw.clone()),
            reward,
            next_state: self.next_state.clone(),
            done: self.done,
            source: RewardSource::Extrinsic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierEpisodeLog {
    pub higher: Vec<HigherTransition>,
    pub lower: Vec<ReplayRecord>,
    pub success: bool,
    pub steps: usize,
}

impl HierEpisodeLog {
    pub fn subgoals(&self) -> impl Iterator<Item = &GoalVec> {
        self.higher.iter().map(|h| &h.subgoal)
    }
}

/// Runs one episode from the environment's current state and goal.
///
/// Every block lasts `min(c, T - steps)` primitive steps unless the episode
/// goal is reached first, so the number of higher decisions is
/// `ceil(steps / c)`.
pub fn run_episode(
    env: &mut dyn Env,
    higher: &mut dyn SubgoalPolicy,
    lower: &mut dyn Primitive,
    cfg: &HierarchyConfig,
) -> Result<HierEpisodeLog> {
    cfg.validate()?;
    let goal = env.goal().clone();
    let mut state = env.state().clone();
    let mut log = HierEpisodeLog {
        higher: Vec::new(),
        lower: Vec::new(),
        success: false,
        steps: 0,
    };
    while log.steps < cfg.horizon && !log.success {
        let (raw, subgoal) = higher.subgoal(&state, &goal, env)?;
        let block_start = state.clone();
        let block = cfg.c.min(cfg.horizon - log.steps);
        let mut reached = false;
        let mut taken = 0;
        for _ in 0..block {
            let action = lower.act(&state, &subgoal)?;
            let step = env.step(&action);
            let achieved = env.achieved_goal(&step.next_state);
            let r_in = sparse_reward(&achieved, &subgoal, cfg.delta_low)?;
            let r_ex = sparse_reward(&achieved, &goal, cfg.delta_high)?;
            reached |= r_in == 0.0;
            log.lower.push(ReplayRecord {
                state: state.clone(),
                goal: subgoal.clone(),
                action,
                reward: r_in,
                next_state: step.next_state.clone(),
                done: r_in == 0.0,
                source: RewardSource::Intrinsic,
            });
            state = step.next_state;
            log.steps += 1;
            taken += 1;
            if r_ex == 0.0 {
                log.success = true;
                break;
            }
        }
        let r_ex = sparse_reward(&env.achieved_goal(&state), &goal, cfg.delta_high)?;
        log.higher.push(HigherTransition {
            state: block_start,
            goal: goal.clone(),
            subgoal_raw: raw,
            subgoal,
            reward: r_ex,
            next_state: state.clone(),
            done: r_ex == 0.0,
            reached,
            steps: taken,
        });
    }
    Ok(log)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapingVariant {
    Hier,
    /// Extra −1 for every block whose subgoal was never reached.
    HierNeg,
}

pub fn higher_reward_shaping(log: &HierEpisodeLog, variant: ShapingVariant) -> Vec<f64> {
    log.higher
        .iter()
        .map(|h| match variant {
            ShapingVariant::Hier => h.reward,
            ShapingVariant::HierNeg if !h.reached => h.reward - 1.0,
            ShapingVariant::HierNeg => h.reward,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatEpisodeLog {
    pub records: Vec<ReplayRecord>,
    pub success: bool,
    pub steps: usize,
}

/// Single-level rollout: the policy is conditioned directly on the episode goal.
pub fn run_flat_episode(
    env: &mut dyn Env,
    policy: &mut dyn Primitive,
    horizon: usize,
    delta: f64,
) -> Result<FlatEpisodeLog> {
    let goal = env.goal().clone();
    let mut state = env.state().clone();
    let mut log = FlatEpisodeLog {
        records: Vec::new(),
        success: false,
        steps: 0,
    };
    while log.steps < horizon {
        let action = policy.act(&state, &goal)?;
        let step = env.step(&action);
        let r = sparse_reward(&env.achieved_goal(&step.next_state), &goal, delta)?;
        log.records.push(ReplayRecord {
            state: state.clone(),
            goal: goal.clone(),
            action,
            reward: r,
            next_state: step.next_state.clone(),
            done: r == 0.0,
            source: RewardSource::Extrinsic,
        });
        state = step.next_state;
        log.steps += 1;
        if r == 0.0 {
            log.success = true;
            break;
        }
    }
    Ok(log)
}

/// Appends episode logs as JSON lines.
pub fn append_logs_jsonl(path: &Path, logs: &[HierEpisodeLog]) -> Result<()> {
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for log in logs {
        serde_json::to_writer(&mut w, log).map_err(|e| Error::Serialization(e.to_string()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
