//! Planar block transport: a kinematic gripper carries a block to a goal.
//!
//! State layout: `[gripper(2), block(2), block - gripper(2), gripper_vel(2), block_vel(2)]`.
//! Action layout: `[dx, dy, grip]`; a positive grip attaches the block when it
//! is within the contact radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    check_finite, goal_distance, ActionVec, Env, EnvContract, EnvStep, GoalBox, GoalVec, StateVec,
    StepInfo,
};

pub const STATE_DIM: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockPushConfig {
    pub step_scale: f64,
    pub horizon: usize,
    pub threshold: Option<f64>,
}

impl Default for BlockPushConfig {
    fn default() -> Self {
        Self {
            step_scale: 0.05,
            horizon: 50,
            threshold: None,
        }
    }
}

impl BlockPushConfig {
    pub fn workspace_diameter(&self) -> f64 {
        std::f64::consts::SQRT_2
    }

    pub fn goal_threshold(&self) -> f64 {
        self.threshold.unwrap_or(0.1 * self.workspace_diameter())
    }

    pub fn contact_radius(&self) -> f64 {
        1.5 * self.step_scale
    }
}

/// Structured view of a block-push state vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockPushState {
    pub gripper: [f64; 2],
    pub block: [f64; 2],
    pub gripper_vel: [f64; 2],
    pub block_vel: [f64; 2],
}

impl BlockPushState {
    pub fn block_rel(&self) -> [f64; 2] {
        [self.block[0] - self.gripper[0], self.block[1] - self.gripper[1]]
    }

    pub fn to_vec(&self) -> StateVec {
        let rel = self.block_rel();
        StateVec(vec![
            self.gripper[0],
            self.gripper[1],
            self.block[0],
            self.block[1],
            rel[0],
            rel[1],
            self.gripper_vel[0],
            self.gripper_vel[1],
            self.block_vel[0],
            self.block_vel[1],
        ])
    }

    pub fn from_vec(s: &StateVec) -> Self {
        let v = &s.0;
        Self {
            gripper: [v[0], v[1]],
            block: [v[2], v[3]],
            gripper_vel: [v[6], v[7]],
            block_vel: [v[8], v[9]],
        }
    }
}

fn clamp_unit(p: [f64; 2]) -> [f64; 2] {
    [p[0].clamp(0.0, 1.0), p[1].clamp(0.0, 1.0)]
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// One kinematic step. Returns the next state and whether the block was attached.
pub fn blockpush_step(cfg: &BlockPushConfig, s: &BlockPushState, action: &ActionVec) -> (BlockPushState, bool) {
    let a = &action.0;
    let attached = a[2] > 0.0 && dist(s.gripper, s.block) <= cfg.contact_radius();
    let gripper = clamp_unit([
        s.gripper[0] + cfg.step_scale * a[0],
        s.gripper[1] + cfg.step_scale * a[1],
    ]);
    let moved = [gripper[0] - s.gripper[0], gripper[1] - s.gripper[1]];
    let block = if attached {
        clamp_unit([s.block[0] + moved[0], s.block[1] + moved[1]])
    } else {
        s.block
    };
    let next = BlockPushState {
        gripper,
        block,
        gripper_vel: moved,
        block_vel: [block[0] - s.block[0], block[1] - s.block[1]],
    };
    (next, attached)
}

#[derive(Debug, Clone)]
pub struct BlockPushEnv {
    cfg: BlockPushConfig,
    state: StateVec,
    goal: GoalVec,
    t: usize,
}

impl BlockPushEnv {
    pub fn new(cfg: BlockPushConfig) -> Result<Self> {
        if !(cfg.step_scale > 0.0 && cfg.step_scale < 0.5) {
            return Err(Error::Config(format!("block-push step_scale {} out of (0, 0.5)", cfg.step_scale)));
        }
        let s = BlockPushState {
            gripper: [0.5, 0.5],
            block: [0.5, 0.5],
            gripper_vel: [0.0; 2],
            block_vel: [0.0; 2],
        };
        Ok(Self {
            cfg,
            state: s.to_vec(),
            goal: GoalVec(vec![0.5, 0.5]),
            t: 0,
        })
    }

    pub fn config(&self) -> &BlockPushConfig {
        &self.cfg
    }
}

impl Env for BlockPushEnv {
    fn name(&self) -> &'static str {
        "blockpush"
    }

    fn contract(&self) -> EnvContract {
        EnvContract {
            state_dim: STATE_DIM,
            goal_dim: 2,
            action_dim: 3,
            horizon: self.cfg.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sample = || [0.05 + 0.9 * rng.random::<f64>(), 0.05 + 0.9 * rng.random::<f64>()];
        let gripper = sample();
        let block = sample();
        let mut goal = sample();
        for _ in 0..100 {
            if dist(goal, block) > self.goal_threshold() {
                break;
            }
            goal = sample();
        }
        let s = BlockPushState {
            gripper,
            block,
            gripper_vel: [0.0; 2],
            block_vel: [0.0; 2],
        };
        self.state = s.to_vec();
        self.goal = GoalVec(goal.to_vec());
        self.t = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec> {
        if state.dim() != STATE_DIM {
            return Err(Error::dims("block-push state", STATE_DIM, state.dim()));
        }
        check_finite(&state.0, "block-push state")?;
        for (i, &v) in state.0[..4].iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidState(format!(
                    "position component {i} = {v} outside the [0, 1] workspace"
                )));
            }
        }
        let s = BlockPushState::from_vec(state);
        let rel = s.block_rel();
        if (rel[0] - state.0[4]).abs() > 1e-9 || (rel[1] - state.0[5]).abs() > 1e-9 {
            return Err(Error::InvalidState(
                "block_rel differs from block - gripper".into(),
            ));
        }
        self.state = state.clone();
        self.t = 0;
        Ok(self.state.clone())
    }

    fn state(&self) -> &StateVec {
        &self.state
    }

    fn goal(&self) -> &GoalVec {
        &self.goal
    }

    fn set_goal(&mut self, goal: GoalVec) -> Result<()> {
        if goal.dim() != 2 {
            return Err(Error::dims("block-push goal", 2, goal.dim()));
        }
        self.goal = goal;
        Ok(())
    }

    fn goal_threshold(&self) -> f64 {
        self.cfg.goal_threshold()
    }

    fn step(&mut self, action: &ActionVec) -> EnvStep {
        let (action, clamped) = action.clamped();
        let s = BlockPushState::from_vec(&self.state);
        let (next, _) = blockpush_step(&self.cfg, &s, &action);
        let intended = [self.cfg.step_scale * action.0[0], self.cfg.step_scale * action.0[1]];
        let collision = next.gripper_vel != intended;
        self.state = next.to_vec();
        self.t += 1;
        let distance = goal_distance(&GoalVec(next.block.to_vec()), &self.goal).unwrap_or(f64::INFINITY);
        EnvStep {
            next_state: self.state.clone(),
            done: self.t >= self.cfg.horizon || distance <= self.goal_threshold(),
            info: StepInfo {
                clamped,
                collision,
                distance_to_goal: distance,
            },
        }
    }

    fn achieved_goal(&self, state: &StateVec) -> GoalVec {
        GoalVec(state.0[2..4].to_vec())
    }

    fn goal_bounds(&self) -> GoalBox {
        GoalBox::new(vec![0.0, 0.0], vec![1.0, 1.0])
    }

    fn step_bound(&self) -> f64 {
        // gripper and block move at most m; block_rel at most 2m; each velocity
        // changes by at most 2m.
        let m = self.cfg.step_scale * std::f64::consts::SQRT_2;
        (1.0f64 + 1.0 + 4.0 + 4.0 + 4.0).sqrt() * m
    }

    fn infer_action(&self, state: &StateVec, next: &StateVec) -> Option<ActionVec> {
        let s = BlockPushState::from_vec(state);
        let n = BlockPushState::from_vec(next);
        let step = self.cfg.step_scale;
        let dx = (n.gripper[0] - s.gripper[0]) / step;
        let dy = (n.gripper[1] - s.gripper[1]) / step;
        if !(dx.is_finite() && dy.is_finite()) || dx.abs() > 1.0 + 1e-9 || dy.abs() > 1.0 + 1e-9 {
            return None;
        }
        let grip = if n.block != s.block { 1.0 } else { -1.0 };
        Some(ActionVec(vec![dx, dy, grip]).clamped().0)
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}
