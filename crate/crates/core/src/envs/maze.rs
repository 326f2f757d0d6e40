//! Random four-room maze on a `W x H` grid with a point agent.
//!
//! The outer ring of cells is wall. One vertical wall at column `wall_col` and
//! one horizontal wall at row `wall_row` split the interior into four rooms;
//! each of the four wall segments has a single gate cell.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    check_finite, goal_distance, ActionVec, Env, EnvContract, EnvStep, GoalBox, GoalVec, StateVec,
    StepInfo,
};

/// Wall and gate layout. Serializes to `{W, H, wall_col, wall_row, gates}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeSpec {
    #[serde(rename = "W")]
    pub width: usize,
    #[serde(rename = "H")]
    pub height: usize,
    pub wall_col: usize,
    pub wall_row: usize,
    /// `[left column on wall_row, right column on wall_row,
    ///   lower row on wall_col, upper row on wall_col]`.
    pub gates: [usize; 4],
}

/// Samples a maze layout.
///
/// Wall indices are uniform over `2..=W-3` (resp. `H`), the open interval
/// `(1, W-2)` taken as integer-exclusive. Gate indices are uniform over the
/// inclusive ranges `1..=W_P-1`, `W_P+1..=W-2`, `1..=H_P-1`, `H_P+1..=H-2`,
/// which are nonempty for every admissible wall index.
pub fn generate_maze(seed: u64, width: usize, height: usize) -> Result<MazeSpec> {
    if width < 5 || height < 5 {
        return Err(Error::Config(format!(
            "maze must be at least 5x5 to fit four rooms, got {width}x{height}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let wall_col = rng.random_range(2..=width - 3);
    let wall_row = rng.random_range(2..=height - 3);
    let gates = [
        rng.random_range(1..=wall_col - 1),
        rng.random_range(wall_col + 1..=width - 2),
        rng.random_range(1..=wall_row - 1),
        rng.random_range(wall_row + 1..=height - 2),
    ];
    Ok(MazeSpec {
        width,
        height,
        wall_col,
        wall_row,
        gates,
    })
}

impl MazeSpec {
    pub fn grid(&self) -> Grid {
        let mut grid = Grid::open(self.width, self.height);
        for col in 1..self.width - 1 {
            grid.set(col, self.wall_row, true);
        }
        for row in 1..self.height - 1 {
            grid.set(self.wall_col, row, true);
        }
        grid.set(self.gates[0], self.wall_row, false);
        grid.set(self.gates[1], self.wall_row, false);
        grid.set(self.wall_col, self.gates[2], false);
        grid.set(self.wall_col, self.gates[3], false);
        grid
    }
}

/// Occupancy grid, row-major with row index = y cell.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub cells: Vec<u8>,
}

impl Grid {
    /// A room with only the boundary ring walled.
    pub fn open(width: usize, height: usize) -> Self {
        let mut cells = vec![0u8; width * height];
        for row in 0..height {
            for col in 0..width {
                if row == 0 || col == 0 || row + 1 == height || col + 1 == width {
                    cells[row * width + col] = 1;
                }
            }
        }
        Self {
            width,
            height,
            cells,
        }
    }

    pub fn set(&mut self, col: usize, row: usize, wall: bool) {
        self.cells[row * self.width + col] = u8::from(wall);
    }

    pub fn is_wall(&self, col: usize, row: usize) -> bool {
        self.cells[row * self.width + col] != 0
    }

    /// Number of 4-connected components of free cells.
    pub fn free_components(&self) -> usize {
        let mut seen = vec![false; self.cells.len()];
        let mut components = 0;
        for start in 0..self.cells.len() {
            if self.cells[start] != 0 || seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(idx) = queue.pop_front() {
                let (col, row) = (idx % self.width, idx / self.width);
                let mut visit = |c: usize, r: usize| {
                    let j = r * self.width + c;
                    if self.cells[j] == 0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                };
                if col > 0 {
                    visit(col - 1, row);
                }
                if col + 1 < self.width {
                    visit(col + 1, row);
                }
                if row > 0 {
                    visit(col, row - 1);
                }
                if row + 1 < self.height {
                    visit(col, row + 1);
                }
            }
        }
        components
    }

    pub fn free_cells(&self) -> Vec<(usize, usize)> {
        (0..self.cells.len())
            .filter(|&i| self.cells[i] == 0)
            .map(|i| (i % self.width, i / self.width))
            .collect()
    }
}

/// Geometry of a grid in world units; shared by the env and the RRT expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeWorld {
    pub grid: Grid,
    pub cell_size: f64,
}

impl MazeWorld {
    pub fn occupied(&self, x: f64, y: f64) -> bool {
        if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 {
            return true;
        }
        let col = (x / self.cell_size).floor() as usize;
        let row = (y / self.cell_size).floor() as usize;
        col >= self.grid.width || row >= self.grid.height || self.grid.is_wall(col, row)
    }

    /// True when the axis-aligned square of half-width `margin` around the
    /// point touches no wall cell.
    pub fn clear(&self, x: f64, y: f64, margin: f64) -> bool {
        let cs = self.cell_size;
        let (x0, x1) = (((x - margin) / cs).floor(), ((x + margin) / cs).floor());
        let (y0, y1) = (((y - margin) / cs).floor(), ((y + margin) / cs).floor());
        if x0 < 0.0 || y0 < 0.0 {
            return false;
        }
        for row in y0 as usize..=y1 as usize {
            for col in x0 as usize..=x1 as usize {
                if col >= self.grid.width || row >= self.grid.height || self.grid.is_wall(col, row) {
                    return false;
                }
            }
        }
        true
    }

    /// Interior box (inside the boundary ring).
    pub fn bounds(&self) -> GoalBox {
        let cs = self.cell_size;
        GoalBox::new(
            vec![cs, cs],
            vec![
                (self.grid.width - 1) as f64 * cs,
                (self.grid.height - 1) as f64 * cs,
            ],
        )
    }

    /// Uniform point in a uniformly chosen free cell, at least `margin` from
    /// the cell border.
    pub fn sample_free_point(&self, rng: &mut impl Rng, margin: f64) -> [f64; 2] {
        let free = self.grid.free_cells();
        let (col, row) = free[rng.random_range(0..free.len())];
        let cs = self.cell_size;
        let span = (cs - 2.0 * margin).max(0.0);
        [
            col as f64 * cs + margin + span * rng.random::<f64>(),
            row as f64 * cs + margin + span * rng.random::<f64>(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MazeObservation {
    /// `[x, y, occupancy...]`.
    Full,
    /// `[x, y]`; the layout is a fixed property of the env instance.
    Position,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MazeConfig {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Per-step displacement limit as a fraction of a cell.
    pub step_scale: f64,
    pub horizon: usize,
    /// Fixed layout seed; `None` draws a new maze at every reset.
    pub maze_seed: Option<u64>,
    /// Obstacle-free room instead of four rooms.
    pub open: bool,
    pub observation: MazeObservation,
    pub threshold: Option<f64>,
}

impl Default for MazeConfig {
    fn default() -> Self {
        Self {
            width: 8,
            height: 8,
            cell_size: 1.0,
            step_scale: 0.25,
            horizon: 225,
            maze_seed: Some(0),
            open: false,
            observation: MazeObservation::Full,
            threshold: None,
        }
    }
}

impl MazeConfig {
    pub fn workspace_diameter(&self) -> f64 {
        let w = (self.width - 2) as f64 * self.cell_size;
        let h = (self.height - 2) as f64 * self.cell_size;
        (w * w + h * h).sqrt()
    }

    pub fn goal_threshold(&self) -> f64 {
        self.threshold.unwrap_or(0.1 * self.workspace_diameter())
    }

    fn grid_for(&self, seed: u64) -> Result<Grid> {
        if self.open {
            Ok(Grid::open(self.width, self.height))
        } else {
            Ok(generate_maze(seed, self.width, self.height)?.grid())
        }
    }
}

/// Clearance kept from walls when sampling start and goal points.
pub const SAMPLE_MARGIN: f64 = 0.3;

#[derive(Debug, Clone)]
pub struct MazeEnv {
    cfg: MazeConfig,
    world: MazeWorld,
    state: StateVec,
    goal: GoalVec,
    t: usize,
}

impl MazeEnv {
    pub fn new(cfg: MazeConfig) -> Result<Self> {
        if cfg.width < 4 || cfg.height < 4 {
            return Err(Error::Config("maze grid must be at least 4x4".into()));
        }
        if cfg.observation == MazeObservation::Position && cfg.maze_seed.is_none() && !cfg.open {
            return Err(Error::Config(
                "position-only observations need a fixed maze layout".into(),
            ));
        }
        let grid = cfg.grid_for(cfg.maze_seed.unwrap_or(0))?;
        let world = MazeWorld {
            grid,
            cell_size: cfg.cell_size,
        };
        let mut env = Self {
            state: StateVec(vec![]),
            goal: GoalVec(vec![0.0, 0.0]),
            t: 0,
            cfg,
            world,
        };
        env.state = env.compose([0.0, 0.0]);
        Ok(env)
    }

    pub fn world(&self) -> &MazeWorld {
        &self.world
    }

    pub fn config(&self) -> &MazeConfig {
        &self.cfg
    }

    /// World-unit displacement limit per axis.
    pub fn step_length(&self) -> f64 {
        self.cfg.step_scale * self.cfg.cell_size
    }

    pub fn position(state: &StateVec) -> [f64; 2] {
        [state.0[0], state.0[1]]
    }

    /// Builds a state vector for the current layout.
    pub fn compose(&self, pos: [f64; 2]) -> StateVec {
        let mut v = vec![pos[0], pos[1]];
        if self.cfg.observation == MazeObservation::Full {
            v.extend(self.world.grid.cells.iter().map(|&c| f64::from(c)));
        }
        StateVec(v)
    }

    fn state_dim(&self) -> usize {
        match self.cfg.observation {
            MazeObservation::Full => 2 + self.cfg.width * self.cfg.height,
            MazeObservation::Position => 2,
        }
    }

    /// Per-axis sliding motion: each axis moves unless the target point lies in
    /// a wall cell. Returns the new position and whether any axis was blocked.
    pub fn kinematic_step(&self, pos: [f64; 2], action: &ActionVec) -> ([f64; 2], bool) {
        let step = self.step_length();
        let mut p = pos;
        let mut blocked = false;
        let nx = p[0] + step * action.0[0];
        if self.world.occupied(nx, p[1]) {
            blocked |= action.0[0] != 0.0;
        } else {
            p[0] = nx;
        }
        let ny = p[1] + step * action.0[1];
        if self.world.occupied(p[0], ny) {
            blocked |= action.0[1] != 0.0;
        } else {
            p[1] = ny;
        }
        (p, blocked)
    }
}

impl Env for MazeEnv {
    fn name(&self) -> &'static str {
        "maze"
    }

    fn contract(&self) -> EnvContract {
        EnvContract {
            state_dim: self.state_dim(),
            goal_dim: 2,
            action_dim: 2,
            horizon: self.cfg.horizon,
        }
    }

    fn reset(&mut self, seed: u64) -> StateVec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rooms = if self.cfg.open {
            self.world.grid = Grid::open(self.cfg.width, self.cfg.height);
            None
        } else {
            let layout_seed = match self.cfg.maze_seed {
                Some(s) => s,
                None => rng.random::<u64>(),
            };
            let spec = generate_maze(layout_seed, self.cfg.width, self.cfg.height)
                .expect("maze dimensions validated at construction");
            self.world.grid = spec.grid();
            Some((spec.wall_col, spec.wall_row))
        };
        let margin = SAMPLE_MARGIN * self.cfg.cell_size;
        let start = self.world.sample_free_point(&mut rng, margin);
        let threshold = self.goal_threshold();
        let cs = self.cfg.cell_size;
        let room = |p: [f64; 2], (wc, wr): (usize, usize)| ((p[0] / cs) < wc as f64, (p[1] / cs) < wr as f64);
        // Four-room goals go to a different room than the start, otherwise a
        // random walk solves a sizeable share of episodes.
        let mut goal = self.world.sample_free_point(&mut rng, margin);
        for _ in 0..100 {
            let d = ((goal[0] - start[0]).powi(2) + (goal[1] - start[1]).powi(2)).sqrt();
            let apart = rooms.is_none_or(|r| room(goal, r) != room(start, r));
            if d > threshold && apart {
                break;
            }
            goal = self.world.sample_free_point(&mut rng, margin);
        }
        self.goal = GoalVec(goal.to_vec());
        self.state = self.compose(start);
        self.t = 0;
        self.state.clone()
    }

    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec> {
        if state.dim() != self.state_dim() {
            return Err(Error::dims("maze state", self.state_dim(), state.dim()));
        }
        check_finite(&state.0, "maze state")?;
        let mut world = self.world.clone();
        if self.cfg.observation == MazeObservation::Full {
            let cells: Vec<u8> = state.0[2..]
                .iter()
                .map(|&v| match v {
                    v if v == 0.0 => Ok(0),
                    v if v == 1.0 => Ok(1),
                    v => Err(Error::InvalidState(format!("occupancy entry {v} is not 0/1"))),
                })
                .collect::<Result<_>>()?;
            world.grid.cells = cells;
        }
        let [x, y] = Self::position(state);
        if world.occupied(x, y) {
            return Err(Error::InvalidState(format!(
                "agent position ({x}, {y}) lies inside a wall cell"
            )));
        }
        self.world = world;
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
            return Err(Error::dims("maze goal", 2, goal.dim()));
        }
        self.goal = goal;
        Ok(())
    }

    fn goal_threshold(&self) -> f64 {
        self.cfg.goal_threshold()
    }

    fn step(&mut self, action: &ActionVec) -> EnvStep {
        let (action, clamped) = action.clamped();
        let (pos, collision) = self.kinematic_step(Self::position(&self.state), &action);
        self.state.0[0] = pos[0];
        self.state.0[1] = pos[1];
        self.t += 1;
        let distance = goal_distance(&GoalVec(pos.to_vec()), &self.goal).unwrap_or(f64::INFINITY);
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
        GoalVec(state.0[..2].to_vec())
    }

    fn goal_bounds(&self) -> GoalBox {
        self.world.bounds()
    }

    fn step_bound(&self) -> f64 {
        self.step_length() * std::f64::consts::SQRT_2
    }

    fn infer_action(&self, state: &StateVec, next: &StateVec) -> Option<ActionVec> {
        let step = self.step_length();
        let a: Vec<f64> = (0..2).map(|i| (next.0[i] - state.0[i]) / step).collect();
        if a.iter().any(|v| !v.is_finite() || v.abs() > 1.0 + 1e-9) {
            return None;
        }
        Some(ActionVec(a).clamped().0)
    }

    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}
