//! Shared fixtures: a 1-D line environment and speed-limited scripted primitives.
#![allow(dead_code)]

use crisp::demos::Trajectory;
use crisp::hierarchy::Primitive;
use crisp::mdp::{
    ActionVec, Env, EnvContract, EnvStep, GoalBox, GoalVec, StateVec, StepInfo,
};
use crisp::approx::{Matrix, MlpSpec};
use crisp::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Point on a line; one action moves it by at most `max_step`.
#[derive(Debug, Clone)]
pub struct LineEnv {
    pub max_step: f64,
    pub x: StateVec,
    pub goal: GoalVec,
    pub delta: f64,
}

impl LineEnv {
    pub fn new(max_step: f64) -> Self {
        Self {
            max_step,
            x: StateVec(vec![0.0]),
            goal: GoalVec(vec![10.0]),
            delta: 1e-6,
        }
    }
}

impl Env for LineEnv {
    fn name(&self) -> &'static str {
        "line"
    }
    fn contract(&self) -> EnvContract {
        EnvContract {
            state_dim: 1,
            goal_dim: 1,
            action_dim: 1,
            horizon: 100,
        }
    }
    fn reset(&mut self, _seed: u64) -> StateVec {
        self.x = StateVec(vec![0.0]);
        self.x.clone()
    }
    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec> {
        if state.dim() != 1 {
            return Err(crisp::Error::InvalidState("line state is 1-D".into()));
        }
        self.x = state.clone();
        Ok(self.x.clone())
    }
    fn state(&self) -> &StateVec {
        &self.x
    }
    fn goal(&self) -> &GoalVec {
        &self.goal
    }
    fn set_goal(&mut self, goal: GoalVec) -> Result<()> {
        self.goal = goal;
        Ok(())
    }
    fn goal_threshold(&self) -> f64 {
        self.delta
    }
    fn step(&mut self, action: &ActionVec) -> EnvStep {
        let a = action.0[0].clamp(-1.0, 1.0);
        self.x = StateVec(vec![self.x.0[0] + self.max_step * a]);
        EnvStep {
            next_state: self.x.clone(),
            done: false,
            info: StepInfo::default(),
        }
    }
    fn achieved_goal(&self, state: &StateVec) -> GoalVec {
        GoalVec(state.0.clone())
    }
    fn goal_bounds(&self) -> GoalBox {
        GoalBox::new(vec![-100.0], vec![100.0])
    }
    fn step_bound(&self) -> f64 {
        self.max_step
    }
    fn infer_action(&self, s: &StateVec, n: &StateVec) -> Option<ActionVec> {
        Some(ActionVec(vec![(n.0[0] - s.0[0]) / self.max_step]))
    }
    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(self.clone())
    }
}

/// Moves toward the target by at most `reach / c` per step, so it covers
/// exactly `reach` in a block of `c` steps (`max_step` must allow that speed).
pub struct ReachPrimitive {
    pub per_step: f64,
    pub max_step: f64,
}

impl ReachPrimitive {
    pub fn new(reach: f64, c: usize, max_step: f64) -> Self {
        Self {
            per_step: reach / c as f64,
            max_step,
        }
    }
}

impl Primitive for ReachPrimitive {
    fn act(&mut self, state: &StateVec, target: &GoalVec) -> Result<ActionVec> {
        let d = (target.0[0] - state.0[0]).clamp(-self.per_step, self.per_step);
        Ok(ActionVec(vec![d / self.max_step]))
    }
}

pub fn line_demo(xs: &[f64]) -> Trajectory {
    Trajectory {
        env_id: "line".into(),
        goal: GoalVec(vec![*xs.last().unwrap()]),
        states: xs.iter().map(|&x| StateVec(vec![x])).collect(),
    }
}

/// Every `(start, target)` pair simulated from scratch, then the parse rule
/// applied to the resulting reachability table.
pub fn brute_force_parse(
    xs: &[f64],
    per_step: f64,
    max_step: f64,
    c: usize,
    delta: f64,
) -> Vec<(usize, usize, bool)> {
    let n = xs.len();
    let mut reach = vec![vec![false; n]; n];
    for j in 0..n {
        for i in 0..n {
            let mut x = xs[j];
            let mut ok = (x - xs[i]).abs() <= delta;
            for _ in 0..c {
                if ok {
                    break;
                }
                let a = ((xs[i] - x).clamp(-per_step, per_step) / max_step).clamp(-1.0, 1.0);
                x += max_step * a;
                ok = (x - xs[i]).abs() <= delta;
            }
            reach[j][i] = ok;
        }
    }
    let mut out = Vec::new();
    let mut s_in = 0;
    let mut last_ok = false;
    for i in 1..n {
        if reach[s_in][i] {
            last_ok = true;
            continue;
        }
        last_ok = false;
        if i - 1 == s_in {
            out.push((s_in, i, false));
            s_in = i;
        } else {
            out.push((s_in, i - 1, true));
            s_in = i - 1;
        }
    }
    if !out.is_empty() && s_in != n - 1 {
        out.push((s_in, n - 1, last_ok));
    }
    out
}

/// Trains a one-hot (tabular) LSGAN discriminator on exact mixtures given as
/// integer row counts per support point and returns `D` at each point.
pub fn tabular_discriminator(expert_counts: &[usize], policy_counts: &[usize], steps: usize, seed: u64) -> Vec<f64> {
    use crisp::regularize::{Discriminator, Level};

    let k = expert_counts.len();
    let onehot = |i: usize| {
        let mut r = vec![0.0; k];
        r[i] = 1.0;
        r
    };
    let rows = |counts: &[usize]| {
        let rs: Vec<Vec<f64>> = counts.iter().enumerate().flat_map(|(i, &c)| std::iter::repeat_n(onehot(i), c)).collect();
        Matrix::from_rows(&rs)
    };
    let (e, p) = (rows(expert_counts), rows(policy_counts));
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut disc = Discriminator::new(Level::Higher, k, vec![], 0.05, &mut rng).unwrap();
    for _ in 0..steps {
        disc.update(&e, &p).unwrap();
    }
    let all: Vec<Vec<f64>> = (0..k).map(onehot).collect();
    disc.score(&Matrix::from_rows(&all)).unwrap()
}

/// Scalar objective `sum(output ⊙ weights)` used by the finite-difference checks.
/// `sum(output ⊙ weights)` and the ReLU on/off pattern of the pass.
pub fn objective(spec: &MlpSpec, p: &crisp::approx::ParamVector, x: &Matrix, w: &Matrix) -> (f64, Vec<bool>) {
    let (out, cache) = spec.forward(p, x).unwrap();
    let pattern = cache.hidden().iter().flat_map(|h| h.data.iter().map(|&a| a > 0.0)).collect();
    (out.data.iter().zip(&w.data).map(|(a, b)| a * b).sum(), pattern)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-6)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    /// Largest relative error among coordinates differing by more than 1e-9.
    pub worst_rel: f64,
    pub worst_abs: f64,
    pub checked: usize,
    /// Coordinates whose ±ε probe flipped a ReLU.
    pub skipped: usize,
}

/// Parameter indices to probe: everything, or every bias plus `per_layer`
/// seeded-random weights from each layer.
fn fd_coordinates(spec: &MlpSpec, per_layer: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut dims = vec![spec.input_dim];
    dims.extend(&spec.hidden);
    dims.push(spec.head_width());
    let total: usize = dims.windows(2).map(|d| d[0] * d[1] + d[1]).sum();
    let Some(k) = per_layer else {
        return (0..total).collect();
    };
    let mut out = Vec::new();
    let mut off = 0;
    for d in dims.windows(2) {
        let nw = d[0] * d[1];
        let mut picked = rand::seq::index::sample(rng, nw, k.min(nw)).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| off + i));
        out.extend(off + nw..off + nw + d[1]);
        off += nw + d[1];
    }
    assert_eq!(off, total);
    out
}

/// Compares backprop with central differences on a freshly initialised net:
/// every input coordinate and the parameters chosen by `per_layer` (see
/// `fd_coordinates`). Coordinates whose ±ε probe flips a ReLU are skipped:
/// the objective has a kink inside the difference window there, so the
/// central difference is not a derivative.
pub fn fd_check(spec: &MlpSpec, seed: u64, per_layer: Option<usize>) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = spec.init(&mut rng);
    let x = Matrix::from_vec(
        3,
        spec.input_dim,
        (0..3 * spec.input_dim).map(|i| ((i as f64) * 0.37 + seed as f64).sin()).collect(),
    );
    let w = Matrix::from_vec(
        3,
        spec.head_width(),
        (0..3 * spec.head_width()).map(|i| ((i as f64) * 0.91).cos()).collect(),
    );
    let (_, base) = objective(spec, &p, &x, &w);
    let (_, cache) = spec.forward(&p, &x).unwrap();
    let (g, gx) = spec.backward(&p, &cache, &w).unwrap();
    let eps = 1e-5;
    let mut r = FdReport::default();
    let mut probe = |plus: (f64, Vec<bool>), minus: (f64, Vec<bool>), analytic: f64| {
        if plus.1 != base || minus.1 != base {
            r.skipped += 1;
            return;
        }
        r.checked += 1;
        let fd = (plus.0 - minus.0) / (2.0 * eps);
        r.worst_abs = r.worst_abs.max((fd - analytic).abs());
        if (fd - analytic).abs() > 1e-9 {
            r.worst_rel = r.worst_rel.max(rel_err(fd, analytic));
        }
    };
    let coords = fd_coordinates(spec, per_layer, &mut rng);
    assert_eq!(coords.iter().max().map_or(0, |m| m + 1), p.len());
    let mut q = p.clone();
    for i in coords {
        let v = p.values()[i];
        q.values_mut()[i] = v + eps;
        let plus = objective(spec, &q, &x, &w);
        q.values_mut()[i] = v - eps;
        let minus = objective(spec, &q, &x, &w);
        q.values_mut()[i] = v;
        probe(plus, minus, g.values()[i]);
    }
    let mut xq = x.clone();
    for i in 0..x.data.len() {
        let v = x.data[i];
        xq.data[i] = v + eps;
        let plus = objective(spec, &p, &xq, &w);
        xq.data[i] = v - eps;
        let minus = objective(spec, &p, &xq, &w);
        xq.data[i] = v;
        probe(plus, minus, gx.data[i]);
    }
    r
}
