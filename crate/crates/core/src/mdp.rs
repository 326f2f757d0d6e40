//! Goal-conditioned MDP contract shared by every environment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! real_vec {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub Vec<f64>);

        impl $name {
            pub fn new(values: Vec<f64>) -> Self {
                Self(values)
            }

            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn dim(&self) -> usize {
                self.0.len()
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn is_finite(&self) -> bool {
                self.0.iter().all(|v| v.is_finite())
            }
        }

        impl From<Vec<f64>> for $name {
            fn from(values: Vec<f64>) -> Self {
                Self(values)
            }
        }

        impl std::ops::Index<usize> for $name {
            type Output = f64;
            fn index(&self, i: usize) -> &f64 {
                &self.0[i]
            }
        }
    };
}

real_vec!(
    /// Full environment state in world units.
    StateVec
);
real_vec!(
    /// Point in goal space (final goals and subgoals alike).
    GoalVec
);
real_vec!(
    /// Normalized action; every component lives in `[-1, 1]`.
    ActionVec
);

impl ActionVec {
    /// Clamps into `[-1, 1]`; non-finite components become 0. The flag reports
    /// whether anything changed.
    pub fn clamped(&self) -> (ActionVec, bool) {
        let mut changed = false;
        let values = self
            .0
            .iter()
            .map(|&a| {
                let c = if a.is_finite() { a.clamp(-1.0, 1.0) } else { 0.0 };
                if c != a {
                    changed = true;
                }
                c
            })
            .collect();
        (ActionVec(values), changed)
    }
}

/// Euclidean distance between two goal-space points.
pub fn goal_distance(a: &GoalVec, b: &GoalVec) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::dims("goal distance", a.dim(), b.dim()));
    }
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt())
}

/// Sparse goal reward: 0 within `delta` (boundary included), -1 otherwise.
/// Serves as both the intrinsic (lower) and extrinsic (higher) reward.
pub fn sparse_reward(achieved: &GoalVec, goal: &GoalVec, delta: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("reward threshold must be positive, got {delta}")));
    }
    let d = goal_distance(achieved, goal)?;
    Ok(if d <= delta { 0.0 } else { -1.0 })
}

/// Diagnostics attached to every transition. Not part of the learning signal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    /// The action had out-of-range or non-finite components.
    pub clamped: bool,
    /// Motion was blocked along at least one axis.
    pub collision: bool,
    pub distance_to_goal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next_state: StateVec,
    pub done: bool,
    pub info: StepInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvContract {
    pub state_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub horizon: usize,
}

/// Axis-aligned box in goal space; subgoal outputs in `(-1, 1)` are mapped onto it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GoalBox {
    const INSET: f64 = 1e-9;

    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len());
        Self { lo, hi }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn diameter(&self) -> f64 {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| (h - l) * (h - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Affine map from `[-1, 1]^d` onto the box, kept inside by a relative inset.
    pub fn to_goal(&self, raw: &[f64]) -> Result<GoalVec> {
        if raw.len() != self.dim() {
            return Err(Error::dims("subgoal", self.dim(), raw.len()));
        }
        let values = raw
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&r, (&l, &h))| {
                let half = 0.5 * (h - l);
                let eps = Self::INSET * (h - l);
                (l + half * (r + 1.0)).clamp(l + eps, h - eps)
            })
            .collect();
        Ok(GoalVec(values))
    }

    /// Inverse of [`GoalBox::to_goal`].
    pub fn to_raw(&self, goal: &GoalVec) -> Result<Vec<f64>> {
        if goal.dim() != self.dim() {
            return Err(Error::dims("subgoal", self.dim(), goal.dim()));
        }
        Ok(goal
            .0
            .iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(&g, (&l, &h))| (g - l) / (0.5 * (h - l)) - 1.0)
            .collect())
    }

    pub fn contains(&self, goal: &GoalVec) -> bool {
        goal.dim() == self.dim()
            && goal
                .0
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(&g, (&l, &h))| g >= l && g <= h)
    }
}

/// A deterministic goal-conditioned environment that can be reset to arbitrary
/// valid states (required for parsing demonstrations with the lower primitive).
///
/// Instances are independent; never share one between concurrent callers.
pub trait Env: Send {
    fn name(&self) -> &'static str;

    fn contract(&self) -> EnvContract;

    /// Draws an initial state and an episode goal from the seeded distribution.
    fn reset(&mut self, seed: u64) -> StateVec;

    /// Forces the internal state; rejects invalid states with the violated bound.
    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec>;

    fn state(&self) -> &StateVec;

    fn goal(&self) -> &GoalVec;

    fn set_goal(&mut self, goal: GoalVec) -> Result<()>;

    /// Success threshold used for `done` and the extrinsic reward.
    fn goal_threshold(&self) -> f64;

    fn step(&mut self, action: &ActionVec) -> EnvStep;

    /// Pure projection from a state onto goal space.
    fn achieved_goal(&self, state: &StateVec) -> GoalVec;

    fn goal_bounds(&self) -> GoalBox;

    /// Upper bound on `‖s_{t+1} - s_t‖₂` for a single step.
    fn step_bound(&self) -> f64;

    /// Recovers a normalized action explaining `state -> next`, when the
    /// kinematics make that well defined.
    fn infer_action(&self, state: &StateVec, next: &StateVec) -> Option<ActionVec>;

    fn clone_box(&self) -> Box<dyn Env>;
}

impl Clone for Box<dyn Env> {
    fn clone(&self) -> Self {
        self.clone_box()
    }
}

pub(crate) fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidState(format!("{what}[{i}] is not finite")));
    }
    Ok(())
}
