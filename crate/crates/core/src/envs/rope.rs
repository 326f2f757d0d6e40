//! Planar rope as a chain of joints, manipulated by fixed-length pokes.
//!
//! A poke displaces the joint nearest its origin by `POKE_LENGTH` along the
//! poke direction; the rest of the chain is then projected outward from the
//! pinned joint so every link returns to the nominal length. Left and right
//! halves are projected independently, which keeps the update mirror-symmetric.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    check_finite, goal_distance, ActionVec, Env, EnvContract, EnvStep, GoalBox, GoalVec, StateVec,
    StepInfo,
};

pub const JOINTS: usize = 15;
pub const POKE_LENGTH: f64 = 0.08;
/// Half-extent of the square workspace centred on the origin.
pub const HALF_EXTENT: f64 = 0.5;
pub const LINK_LENGTH: f64 = 2.0 * HALF_EXTENT / 20.0;
pub const INFLUENCE_RADIUS: f64 = 2.0 * LINK_LENGTH;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RopeConfig {
    pub horizon: usize,
    pub threshold: Option<f64>,
}

impl Default for RopeConfig {
    fn default() -> Self {
        Self {
            horizon: 25,
            threshold: None,
        }
    }
}

impl RopeConfig {
    pub fn workspace_diameter(&self) -> f64 {
        2.0 * HALF_EXTENT * std::f64::consts::SQRT_2
    }

    pub fn goal_threshold(&self) -> f64 {
        self.threshold.unwrap_or(0.1 * self.workspace_diameter())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PokeAction {
    pub x: f64,
    pub y: f64,
    /// Direction angle in radians.
    pub eta: f64,
}

impl PokeAction {
    pub fn from_action(a: &ActionVec) -> Self {
        Self {
            x: HALF_EXTENT * a.0[0],
            y: HALF_EXTENT * a.0[1],
            eta: std::f64::consts::PI * a.0[2],
        }
    }

    pub fn to_action(&self) -> ActionVec {
        ActionVec(vec![
            self.x / HALF_EXTENT,
            self.y / HALF_EXTENT,
            self.eta / std::f64::consts::PI,
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RopeState {
    pub joints: Vec<[f64; 2]>,
}

impl RopeState {
    pub fn from_vec(s: &StateVec) -> Self {
        Self {
            joints: s.0.chunks_exact(2).map(|c| [c[0], c[1]]).collect(),
        }
    }

    pub fn to_vec(&self) -> StateVec {
        StateVec(self.joints.iter().flat_map(|p| [p[0], p[1]]).collect())
    }

    pub fn spacings(&self) -> Vec<f64> {
        self.joints
            .windows(2)
            .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
            .collect()
    }

    /// Index of the joint nearest to `(x, y)` within the influence radius;
    /// ties go to the lowest index.
    pub fn nearest_joint(&self, x: f64, y: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in self.joints.iter().enumerate() {
            let d = ((p[0] - x).powi(2) + (p[1] - y).powi(2)).sqrt();
            if d <= INFLUENCE_RADIUS && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        best.map(|(i, _)| i)
    }
}

fn clamp_ws(v: f64) -> f64 {
    v.clamp(-HALF_EXTENT, HALF_EXTENT)
}

/// Applies one poke. Returns the new state and whether the origin had to be
/// clamped into the workspace.
pub fn rope_poke(state: &RopeState, poke: &PokeAction) -> (RopeState, bool) {
    let (x, y) = (clamp_ws(poke.x), clamp_ws(poke.y));
    let clamped = x != poke.x || y != poke.y || !poke.eta.is_finite();
    let eta = if poke.eta.is_finite() { poke.eta } else { 0.0 };
    let Some(k) = state.nearest_joint(x, y) else {
        return (state.clone(), clamped);
    };
    let mut joints = state.joints.clone();
    joints[k] = [
        clamp_ws(joints[k][0] + POKE_LENGTH * eta.cos()),
        clamp_ws(joints[k][1] + POKE_LENGTH * eta.sin()),
    ];
    relax(&mut joints, k);
    (RopeState { joints }, clamped)
}

/// Outward projection from the pinned joint: each joint is placed on the
/// circle of radius `LINK_LENGTH` around its inner neighbour, at the point
/// inside the workspace nearest to where it currently is.
fn relax(joints: &mut [[f64; 2]], pinned: usize) {
    for i in (0..pinned).rev() {
        joints[i] = project_link(joints[i + 1], joints[i]);
    }
    for i in pinned + 1..joints.len() {
        joints[i] = project_link(joints[i - 1], joints[i]);
    }
}

fn inside(p: [f64; 2]) -> bool {
    p[0].abs() <= HALF_EXTENT + 1e-12 && p[1].abs() <= HALF_EXTENT + 1e-12
}

fn angle_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::TAU);
    d.min(std::f64::consts::TAU - d)
}

fn project_link(anchor: [f64; 2], target: [f64; 2]) -> [f64; 2] {
    let at = |theta: f64| {
        [
            anchor[0] + LINK_LENGTH * theta.cos(),
            anchor[1] + LINK_LENGTH * theta.sin(),
        ]
    };
    let (dx, dy) = (target[0] - anchor[0], target[1] - anchor[1]);
    let desired = if dx == 0.0 && dy == 0.0 { 0.0 } else { dy.atan2(dx) };
    let p = at(desired);
    if inside(p) {
        return p;
    }
    // The desired point crosses a wall: candidates are where the circle meets
    // the walls.
    let mut candidates = Vec::with_capacity(8);
    for wall in [HALF_EXTENT, -HALF_EXTENT] {
        let r = (wall - anchor[0]) / LINK_LENGTH;
        if r.abs() <= 1.0 {
            let a = r.acos();
            candidates.extend([a, -a]);
        }
        let r = (wall - anchor[1]) / LINK_LENGTH;
        if r.abs() <= 1.0 {
            let a = r.asin();
            candidates.extend([a, std::f64::consts::PI - a]);
        }
    }
    let best = candidates
        .into_iter()
        .filter(|&t| inside(at(t)))
        .min_by(|a, b| angle_gap(*a, desired).total_cmp(&angle_gap(*b, desired)))
        .unwrap_or(desired);
    let q = at(best);
    [clamp_ws(q[0]), clamp_ws(q[1])]
}

/// Checks the soft-chain spacing bounds `[0.5 L, 1.5 L]`.
pub fn spacing_ok(state: &RopeState) -> bool {
    state
        .spacings()
        .iter()
        .all(|&d| (0.5 * LINK_LENGTH..=1.5 * LINK_LENGTH).contains(&d))
}

#[derive(Debug, Clone)]
pub struct RopeEnv {
    cfg: RopeConfig,
    state: StateVec,
    goal: GoalVec,
    t: usize,
}

impl RopeEnv {
    pub fn new(cfg: RopeConfig) -> Self {
        let straight = RopeState {
            joints: (0..JOINTS)
                .map(|i| [(i as f64 - 7.0) * LINK_LENGTH, 0.0])
                .collect(),
        };
        let s = straight.to_vec();
        Self {
            cfg,
            goal: GoalVec(s.0.clone()),
            state: s,
            t: 0,
        }
    }

    fn sample_chain(rng: &mut impl Rng) -> RopeState {
        loop {
            let mut heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let mut joints = vec![[0.0, 0.0]];
            for _ in 1..JOINTS {
                heading += rng.random_range(-0.4..0.4);
                let last = joints[joints.len() - 1];
                joints.push([
                    last[0] + LINK_LENGTH * heading.cos(),
                    last[1] + LINK_LENGTH * heading.sin(),
                ]);
            }
            let n = JOINTS as f64;
            let cx = joints.iter().map(|p| p[0]).sum::<f64>() / n;
            let cy = joints.iter().map(|p| p[1]).sum::<f64>() / n;
            let ox = rng.random_range(-0.15..0.15) - cx;
            let oy = rng.random_range(-0.15..0.15) - cy;
            for p in &mut joints {
                p[0] += ox;
                p[1] += oy;
            }
            let limit = HALF_EXTENT - 0.05;
            if joints.iter().all(|p| p[0].abs() <= limit && p[1].abs() <= limit) {
                return RopeState { joints };
            }
        }
    }
}

impl Env for RopeEnv {
    fn name(&self) -> &'static str {
        "rope"
    }

    fn contract(&self) -> EnvContract {
        EnvContract {
            state_dim: 2 * JOINTS,
            goal_dim: 2 * JOINTS,
            action_dim: 3,
            horizon: self.cfg.horizon,
        }
    }

    /// The goal configuration is the start configuration after a few random
    /// pokes, so every goal is physically reachable.
    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Self::sample_chain(&mut rng);
        let mut goal = start.clone();
        let pokes = rng.random_range(3..=6);
        let mut applied = 0;
        while applied < pokes
            || goal_distance(&goal.to_vec().0.into(), &start.to_vec().0.into()).unwrap()
                <= self.goal_threshold()
        {
            let m = rng.random_range(0..JOINTS);
            let eta = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let p = goal.joints[m];
            goal = rope_poke(&goal, &PokeAction { x: p[0], y: p[1], eta }).0;
            applied += 1;
            if applied > 50 {
                break;
            }
        }
        self.state = start.to_vec();
        self.goal = GoalVec(goal.to_vec().0);
        self.t = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec> {
        if state.dim() != 2 * JOINTS {
            return Err(Error::dims("rope state", 2 * JOINTS, state.dim()));
        }
        check_finite(&state.0, "rope state")?;
        if let Some(i) = state.0.iter().position(|v| v.abs() > HALF_EXTENT) {
            return Err(Error::InvalidState(format!(
                "rope coordinate {i} = {} outside the workspace",
                state.0[i]
            )));
        }
        let rope = RopeState::from_vec(state);
        if !spacing_ok(&rope) {
            return Err(Error::InvalidState(
                "link spacing outside [0.5 L, 1.5 L]".into(),
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
        if goal.dim() != 2 * JOINTS {
            return Err(Error::dims("rope goal", 2 * JOINTS, goal.dim()));
        }
        self.goal = goal;
        Ok(())
    }

    fn goal_threshold(&self) -> f64 {
        self.cfg.goal_threshold()
    }

    fn step(&mut self, action: &ActionVec) -> EnvStep {
        let (action, action_clamped) = action.clamped();
        let poke = PokeAction::from_action(&action);
        let (next, origin_clamped) = rope_poke(&RopeState::from_vec(&self.state), &poke);
        self.state = next.to_vec();
        self.t += 1;
        let distance = goal_distance(&GoalVec(self.state.0.clone()), &self.goal).unwrap_or(f64::INFINITY);
        EnvStep {
            next_state: self.state.clone(),
            done: self.t >= self.cfg.horizon || distance <= self.goal_threshold(),
            info: StepInfo {
                clamped: action_clamped || origin_clamped,
                collision: false,
                distance_to_goal: distance,
            },
        }
    }

    fn achieved_goal(&self, state: &StateVec) -> GoalVec {
        GoalVec(state.0.clone())
    }

    fn goal_bounds(&self) -> GoalBox {
        GoalBox::new(vec![-HALF_EXTENT; 2 * JOINTS], vec![HALF_EXTENT; 2 * JOINTS])
    }

    fn step_bound(&self) -> f64 {
        // Every joint moves at most twice the poke length in one poke.
        2.0 * POKE_LENGTH * (JOINTS as f64).sqrt()
    }

    /// Takes the most displaced joint as the poked one.
    fn infer_action(&self, state: &StateVec, next: &StateVec) -> Option<ActionVec> {
        let a = RopeState::from_vec(state);
        let b = RopeState::from_vec(next);
        let (k, d) = a
            .joints
            .iter()
            .zip(&b.joints)
            .map(|(p, q)| ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt())
            .enumerate()
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if d < 1e-12 {
            return None;
        }
        let p = a.joints[k];
        let q = b.joints[k];
        let poke = PokeAction {
            x: p[0],
            y: p[1],
            eta: (q[1] - p[1]).atan2(q[0] - p[0]),
        };
        Some(poke.to_action().clamped().0)
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight() -> RopeState {
        RopeState {
            joints: (0..JOINTS)
                .map(|i| [(i as f64 - 7.0) * LINK_LENGTH, 0.0])
                .collect(),
        }
    }

    #[test]
    fn far_poke_changes_nothing() {
        let s = straight();
        let (n, _) = rope_poke(&s, &PokeAction { x: 0.0, y: 0.45, eta: 0.3 });
        assert_eq!(n, s);
    }

    #[test]
    fn perpendicular_middle_poke_relaxes_symmetrically() {
        let s = straight();
        let (n, clamped) = rope_poke(
            &s,
            &PokeAction {
                x: 0.0,
                y: 0.0,
                eta: std::f64::consts::FRAC_PI_2,
            },
        );
        assert!(!clamped);
        assert!((n.joints[7][0]).abs() < 1e-15);
        assert!((n.joints[7][1] - POKE_LENGTH).abs() < 1e-15);
        for k in 1..=7 {
            let (l, r) = (n.joints[7 - k], n.joints[7 + k]);
            assert!((l[0] + r[0]).abs() < 1e-12, "x mirror at offset {k}");
            assert!((l[1] - r[1]).abs() < 1e-12, "y mirror at offset {k}");
        }
        // neighbours are dragged along
        assert!(n.joints[6][1] > 0.0);
        assert!(spacing_ok(&n));
    }

    #[test]
    fn origin_outside_workspace_is_flagged() {
        let (_, clamped) = rope_poke(&straight(), &PokeAction { x: 0.9, y: 0.0, eta: 0.0 });
        assert!(clamped);
    }

    #[test]
    fn reset_produces_valid_distinct_goal() {
        let mut env = RopeEnv::new(RopeConfig::default());
        for seed in 0..50 {
            let s = env.reset(seed);
            assert!(spacing_ok(&RopeState::from_vec(&s)));
            assert!(spacing_ok(&RopeState::from_vec(&StateVec(env.goal().0.clone()))));
            let d = goal_distance(&env.achieved_goal(&s), env.goal()).unwrap();
            assert!(d > env.goal_threshold());
            let mut other = env.clone();
            assert_eq!(other.reset_to(&s).unwrap(), s);
        }
    }

    #[test]
    fn infer_action_recovers_poke_direction() {
        let s = straight();
        let poke = PokeAction { x: s.joints[3][0], y: s.joints[3][1], eta: 2.0 };
        let (n, _) = rope_poke(&s, &poke);
        let env = RopeEnv::new(RopeConfig::default());
        let a = env.infer_action(&s.to_vec(), &n.to_vec()).unwrap();
        let inferred = PokeAction::from_action(&a);
        assert!((inferred.eta - 2.0).abs() < 1e-9);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]
            #[test]
            fn spacing_and_step_bound_hold(seed in 0u64..10_000,
                    pokes in proptest::collection::vec((0usize..JOINTS, -0.03f64..0.03, -0.03f64..0.03, -3.2f64..3.2), 1..20)) {
                let mut env = RopeEnv::new(RopeConfig::default());
                let mut s = RopeState::from_vec(&env.reset(seed));
                for (m, ox, oy, eta) in pokes {
                    let p = s.joints[m];
                    let (n, _) = rope_poke(&s, &PokeAction { x: p[0] + ox, y: p[1] + oy, eta });
                    prop_assert!(spacing_ok(&n), "spacings {:?}", n.spacings());
                    let d = goal_distance(&n.to_vec().0.into(), &s.to_vec().0.into()).unwrap();
                    prop_assert!(d <= env.step_bound());
                    s = n;
                }
            }

            #[test]
            fn mirrored_poke_mirrors_state(seed in 0u64..10_000, m in 0usize..JOINTS,
                                          ox in -0.05f64..0.05, oy in -0.05f64..0.05, eta in -3.1f64..3.1) {
                let mut env = RopeEnv::new(RopeConfig::default());
                let s = RopeState::from_vec(&env.reset(seed));
                let mirror = |r: &RopeState| RopeState { joints: r.joints.iter().map(|p| [p[0], -p[1]]).collect() };
                let p = s.joints[m];
                let poke = PokeAction { x: p[0] + ox, y: p[1] + oy, eta };
                let mpoke = PokeAction { x: poke.x, y: -poke.y, eta: -eta };
                let (a, _) = rope_poke(&s, &poke);
                let (b, _) = rope_poke(&mirror(&s), &mpoke);
                // exact away from the walls; wall contact goes through asin/acos
                for (p, q) in mirror(&a).joints.iter().zip(&b.joints) {
                    prop_assert!((p[0] - q[0]).abs() <= 1e-12 && (p[1] - q[1]).abs() <= 1e-12);
                }
            }
        }
    }
}
