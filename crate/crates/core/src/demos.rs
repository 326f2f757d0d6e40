//! Expert demonstrations (states only) and their JSON-lines persistence.
//!
//! Three generators: an RRT planner for the maze, a scripted
//! approach/attach/carry controller for block-push and a greedy poker for
//! the rope.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{BlockPushEnv, BlockPushState, EnvConfig, MazeEnv, PokeAction, RopeEnv, RopeState};
use crate::error::{Error, Result};
use crate::mdp::{goal_distance, ActionVec, Env, GoalVec, StateVec};

pub const DATASET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(rename = "env")]
    pub env_id: String,
    pub goal: GoalVec,
    pub states: Vec<StateVec>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Checks length, dimensions and per-step reachability under `env`.
    pub fn validate(&self, env: &dyn Env) -> Result<()> {
        if self.states.len() < 2 {
            return Err(Error::InvalidState("trajectory needs at least two states".into()));
        }
        let c = env.contract();
        if self.goal.dim() != c.goal_dim {
            return Err(Error::dims("trajectory goal", c.goal_dim, self.goal.dim()));
        }
        let bound = env.step_bound() * (1.0 + 1e-9) + 1e-12;
        for (t, w) in self.states.windows(2).enumerate() {
            if w[1].dim() != c.state_dim {
                return Err(Error::dims("trajectory state", c.state_dim, w[1].dim()));
            }
            let d = step_distance(&w[0], &w[1]);
            if d > bound {
                return Err(Error::InvalidState(format!(
                    "step {t} moves {d} > bound {}",
                    env.step_bound()
                )));
            }
        }
        Ok(())
    }

    /// Whether the last state is within `delta` of the goal.
    pub fn reaches_goal(&self, env: &dyn Env, delta: f64) -> bool {
        self.states.last().is_some_and(|s| {
            goal_distance(&env.achieved_goal(s), &self.goal).is_ok_and(|d| d <= delta)
        })
    }
}

fn step_distance(a: &StateVec, b: &StateVec) -> f64 {
    a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoMetadata {
    pub env: String,
    pub generator: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoDataset {
    pub meta: DemoMetadata,
    pub trajectories: Vec<Trajectory>,
}

impl DemoDataset {
    pub fn state_dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.states[0].dim())
    }

    pub fn goal_dim(&self) -> usize {
        self.trajectories.first().map_or(0, |t| t.goal.dim())
    }

    /// Keeps the first `n` trajectories.
    pub fn truncated(&self, n: usize) -> Self {
        Self {
            meta: self.meta.clone(),
            trajectories: self.trajectories.iter().take(n).cloned().collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    version: u32,
    state_dim: usize,
    goal_dim: usize,
    count: usize,
    #[serde(flatten)]
    meta: DemoMetadata,
}

pub fn save_dataset(ds: &DemoDataset, path: &Path) -> Result<()> {
    let (sd, gd) = (ds.state_dim(), ds.goal_dim());
    for t in &ds.trajectories {
        if t.goal.dim() != gd || t.states.iter().any(|s| s.dim() != sd) {
            return Err(Error::dims("dataset trajectory", sd, t.states[0].dim()));
        }
        if t.env_id != ds.meta.env {
            return Err(Error::InvalidState(format!(
                "trajectory env {} differs from dataset env {}",
                t.env_id, ds.meta.env
            )));
        }
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = Header {
        version: DATASET_VERSION,
        state_dim: sd,
        goal_dim: gd,
        count: ds.trajectories.len(),
        meta: ds.meta.clone(),
    };
    let ser = |e: serde_json::Error| Error::Serialization(e.to_string());
    serde_json::to_writer(&mut w, &header).map_err(ser)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for t in &ds.trajectories {
        serde_json::to_writer(&mut w, t).map_err(ser)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: &Path) -> Result<DemoDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    if header.version != DATASET_VERSION {
        return Err(Error::Version {
            found: header.version,
            expected: DATASET_VERSION,
        });
    }
    let mut trajectories = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| parse_err(lineno, e.to_string()))?;
        if t.goal.dim() != header.goal_dim {
            return Err(Error::dims("dataset goal", header.goal_dim, t.goal.dim()));
        }
        if let Some(s) = t.states.iter().find(|s| s.dim() != header.state_dim) {
            return Err(Error::dims("dataset state", header.state_dim, s.dim()));
        }
        if t.states.len() < 2 {
            return Err(parse_err(lineno, "trajectory shorter than two states".into()));
        }
        trajectories.push(t);
    }
    if trajectories.len() != header.count {
        return Err(parse_err(
            trajectories.len() + 2,
            format!("expected {} trajectories, found {}", header.count, trajectories.len()),
        ));
    }
    Ok(DemoDataset {
        meta: header.meta,
        trajectories,
    })
}

// ---------------------------------------------------------------------------
// Maze: RRT

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrtParams {
    pub extension: f64,
    pub goal_bias: f64,
    pub node_cap: usize,
    /// Clearance kept from wall cells along every edge.
    pub margin: f64,
}

impl RrtParams {
    /// Extension step `step_bound * c / 3`.
    pub fn for_env(env: &MazeEnv, c: usize) -> Self {
        Self {
            extension: env.step_bound() * c as f64 / 3.0,
            goal_bias: 0.1,
            node_cap: 5000,
            margin: 0.25 * env.config().cell_size,
        }
    }
}

fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

fn segment_clear(env: &MazeEnv, a: [f64; 2], b: [f64; 2], margin: f64) -> bool {
    let world = env.world();
    let n = (dist2(a, b) / 0.02).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let t = k as f64 / n as f64;
        world.clear(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), margin)
    })
}

/// Plans a collision-free path and densifies it so that every step is
/// realizable by one action of the maze kinematics.
pub fn rrt_plan(env: &MazeEnv, start: [f64; 2], goal: [f64; 2], seed: u64, params: &RrtParams) -> Result<Trajectory> {
    let world = env.world();
    for (p, what) in [(start, "start"), (goal, "goal")] {
        if !world.clear(p[0], p[1], 0.0) {
            return Err(Error::Planning(format!("{what} {p:?} is not in free space")));
        }
    }
    let path = if start == goal {
        vec![start, start]
    } else if segment_clear(env, start, goal, params.margin) {
        vec![start, goal]
    } else {
        let raw = rrt_tree(env, start, goal, seed, params)?;
        shortcut(env, &raw, params.margin)
    };
    let mut states = vec![env.compose(path[0])];
    let step = env.step_length();
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let span = (b[0] - a[0]).abs().max((b[1] - a[1]).abs());
        let n = (span / step).ceil().max(1.0) as usize;
        for k in 1..=n {
            let t = k as f64 / n as f64;
            let p = if k == n {
                b
            } else {
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            };
            states.push(env.compose(p));
        }
    }
    Ok(Trajectory {
        env_id: env.name().to_string(),
        goal: GoalVec(goal.to_vec()),
        states,
    })
}

fn rrt_tree(env: &MazeEnv, start: [f64; 2], goal: [f64; 2], seed: u64, params: &RrtParams) -> Result<Vec<[f64; 2]>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bounds = env.world().bounds();
    let mut nodes = vec![start];
    let mut parent = vec![usize::MAX];
    while nodes.len() < params.node_cap {
        let q = if rng.random::<f64>() < params.goal_bias {
            goal
        } else {
            [
                rng.random_range(bounds.lo[0]..bounds.hi[0]),
                rng.random_range(bounds.lo[1]..bounds.hi[1]),
            ]
        };
        let (near, d) = nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (i, dist2(*n, q)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("tree is never empty");
        if d == 0.0 {
            continue;
        }
        let from = nodes[near];
        let new = if d <= params.extension {
            q
        } else {
            let k = params.extension / d;
            [from[0] + k * (q[0] - from[0]), from[1] + k * (q[1] - from[1])]
        };
        if !segment_clear(env, from, new, params.margin) {
            continue;
        }
        nodes.push(new);
        parent.push(near);
        let last = nodes.len() - 1;
        if dist2(new, goal) <= params.extension && segment_clear(env, new, goal, params.margin) {
            let mut path = vec![goal];
            let mut i = last;
            while i != usize::MAX {
                path.push(nodes[i]);
                i = parent[i];
            }
            path.reverse();
            if path[path.len() - 2] == goal {
                path.pop();
            }
            return Ok(path);
        }
    }
    Err(Error::Planning(format!(
        "no path found within {} nodes",
        params.node_cap
    )))
}

/// Greedy shortcutting: from each waypoint jump to the farthest visible one.
fn shortcut(env: &MazeEnv, path: &[[f64; 2]], margin: f64) -> Vec<[f64; 2]> {
    let mut out = vec![path[0]];
    let mut i = 0;
    while i + 1 < path.len() {
        let mut j = path.len() - 1;
        while j > i + 1 && !segment_clear(env, path[i], path[j], margin) {
            j -= 1;
        }
        out.push(path[j]);
        i = j;
    }
    out
}

/// Resets the maze with `seed` and plans from the sampled start to the sampled goal.
pub fn maze_expert(env: &mut MazeEnv, seed: u64, params: &RrtParams) -> Result<Trajectory> {
    let s0 = env.reset(seed);
    let start = MazeEnv::position(&s0);
    let goal = [env.goal().0[0], env.goal().0[1]];
    rrt_plan(env, start, goal, seed, params)
}

// ---------------------------------------------------------------------------
// Block push: scripted controller

/// Unit-speed action toward `to`, scaled so no axis exceeds 1.
fn toward(from: [f64; 2], to: [f64; 2], step: f64) -> [f64; 2] {
    let d = [(to[0] - from[0]) / step, (to[1] - from[1]) / step];
    let m = d[0].abs().max(d[1].abs());
    if m > 1.0 {
        [d[0] / m, d[1] / m]
    } else {
        d
    }
}

/// Approach the block with the gripper open, attach, then carry it to the goal.
pub fn scripted_push_expert(env: &mut BlockPushEnv, seed: u64) -> Result<Trajectory> {
    env.reset(seed);
    scripted_push_rollout(env)
}

/// The push controller run from the env's current state and goal.
pub fn scripted_push_rollout(env: &mut BlockPushEnv) -> Result<Trajectory> {
    let s0 = env.state().clone();
    let cfg = env.config().clone();
    let goal = [env.goal().0[0], env.goal().0[1]];
    let delta = env.goal_threshold();
    let mut states = vec![s0];
    let done = |s: &StateVec| {
        let b = BlockPushState::from_vec(s).block;
        dist2(b, goal) <= delta
    };
    while !done(states.last().unwrap()) {
        if states.len() > cfg.horizon {
            return Err(Error::Generation(format!(
                "push expert ran out of horizon from {:?}",
                states[0].0
            )));
        }
        let s = BlockPushState::from_vec(states.last().unwrap());
        let action = if dist2(s.gripper, s.block) > cfg.contact_radius() {
            let a = toward(s.gripper, s.block, cfg.step_scale);
            ActionVec(vec![a[0], a[1], -1.0])
        } else {
            let a = toward(s.block, goal, cfg.step_scale);
            ActionVec(vec![a[0], a[1], 1.0])
        };
        states.push(env.step(&action).next_state);
    }
    if states.len() == 1 {
        states.push(states[0].clone());
    }
    Ok(Trajectory {
        env_id: env.name().to_string(),
        goal: GoalVec(goal.to_vec()),
        states,
    })
}

// ---------------------------------------------------------------------------
// Rope: farthest-joint poker

/// Index of the joint farthest from its goal position, and that distance.
pub fn farthest_joint(state: &RopeState, goal: &RopeState) -> (usize, f64) {
    state
        .joints
        .iter()
        .zip(&goal.joints)
        .map(|(s, g)| dist2(*s, *g))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, d)| if d > best.1 { (i, d) } else { best })
}

/// Pokes toward `goal_config` until within the env threshold or `max_pokes`.
///
/// Each poke lands near the joint farthest from its goal position (jittered by
/// a seeded offset well inside the link length) and points at that joint's
/// goal position.
pub fn rope_poke_expert(env: &mut RopeEnv, goal_config: &GoalVec, seed: u64, max_pokes: usize) -> Result<Trajectory> {
    env.set_goal(goal_config.clone())?;
    let goal = RopeState::from_vec(&StateVec(goal_config.0.clone()));
    let delta = env.goal_threshold();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states = vec![env.state().clone()];
    let jitter = 0.1 * crate::envs::rope::LINK_LENGTH;
    for _ in 0..max_pokes {
        let s = states.last().unwrap();
        if goal_distance(&env.achieved_goal(s), goal_config)? <= delta {
            break;
        }
        let rope = RopeState::from_vec(s);
        let (m, _) = farthest_joint(&rope, &goal);
        let p = rope.joints[m];
        let g = goal.joints[m];
        let poke = PokeAction {
            x: p[0] + rng.random_range(-jitter..jitter),
            y: p[1] + rng.random_range(-jitter..jitter),
            eta: (g[1] - p[1]).atan2(g[0] - p[0]),
        };
        states.push(env.step(&poke.to_action()).next_state);
    }
    if states.len() == 1 {
        states.push(states[0].clone());
    }
    Ok(Trajectory {
        env_id: env.name().to_string(),
        goal: goal_config.clone(),
        states,
    })
}

// ---------------------------------------------------------------------------
// Batch generation

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerateOptions {
    pub count: usize,
    pub seed: u64,
    /// Lower-level horizon `c`, used to size the RRT extension.
    pub c: usize,
    /// Keep unsuccessful trajectories (robustness ablations).
    pub keep_failures: bool,
    /// Give up after this many attempts per requested trajectory.
    pub attempts_per_demo: usize,
}

impl GenerateOptions {
    pub fn new(count: usize, seed: u64, c: usize) -> Self {
        Self {
            count,
            seed,
            c,
            keep_failures: false,
            attempts_per_demo: 20,
        }
    }
}

fn instance_seed(seed: u64, i: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i)
}

/// Generates `count` demonstrations with the env's expert. Deterministic in `seed`.
pub fn generate_demos(env_cfg: &EnvConfig, opts: &GenerateOptions) -> Result<DemoDataset> {
    let (generator, mut make): (&str, Box<dyn FnMut(u64) -> Result<Trajectory>>) = match env_cfg {
        EnvConfig::Maze(cfg) => {
            let mut env = MazeEnv::new(cfg.clone())?;
            let params = RrtParams::for_env(&env, opts.c);
            ("rrt", Box::new(move |s| maze_expert(&mut env, s, &params)))
        }
        EnvConfig::BlockPush(cfg) => {
            let mut env = BlockPushEnv::new(cfg.clone())?;
            ("scripted-push", Box::new(move |s| scripted_push_expert(&mut env, s)))
        }
        EnvConfig::Rope(cfg) => {
            let mut env = RopeEnv::new(cfg.clone());
            let max_pokes = cfg.horizon;
            (
                "farthest-poke",
                Box::new(move |s| {
                    env.reset(s);
                    let goal = env.goal().clone();
                    rope_poke_expert(&mut env, &goal, s, max_pokes)
                }),
            )
        }
    };
    let check_env = env_cfg.build()?;
    let delta = check_env.goal_threshold();
    let mut trajectories = Vec::with_capacity(opts.count);
    let budget = (opts.count * opts.attempts_per_demo.max(1)) as u64;
    let mut i = 0;
    while trajectories.len() < opts.count {
        if i >= budget {
            return Err(Error::Generation(format!(
                "only {} of {} demonstrations after {budget} attempts",
                trajectories.len(),
                opts.count
            )));
        }
        let s = instance_seed(opts.seed, i);
        i += 1;
        match make(s) {
            Ok(t) => {
                let ok = t.reaches_goal(check_env.as_ref(), delta)
                    && t.len() <= env_cfg.horizon() + 1;
                if ok || opts.keep_failures {
                    t.validate(check_env.as_ref())?;
                    trajectories.push(t);
                }
            }
            Err(Error::Planning(m)) | Err(Error::Generation(m)) => {
                log::debug!("demo attempt {s} failed: {m}");
            }
            Err(e) => return Err(e),
        }
    }
    Ok(DemoDataset {
        meta: DemoMetadata {
            env: env_cfg.name().to_string(),
            generator: generator.to_string(),
            seed: opts.seed,
        },
        trajectories,
    })
}
