//! LSGAN discriminators and the imitation terms added to each level's actor
//! loss.
//!
//! The discriminator minimizes `½E[(D(e) − 1)²] + ½E[D(p)²]`; the policy side
//! minimizes `½E[(D(π) − 1)²]`. The behavior-cloning alternative is a plain
//! mean squared error against expert targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approx::{AdamConfig, AdamState, Head, Matrix, MlpSpec, ParamVector, StepOutcome};
use crate::demos::DemoDataset;
use crate::error::{Error, Result};
use crate::mdp::Env;
use crate::relabel::SubgoalDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Level {
    Higher,
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegularizerKind {
    None,
    Irl,
    Bc,
}

impl RegularizerKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Irl => "irl",
            RegularizerKind::Bc => "bc",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegularizerKind::None),
            "irl" => Ok(RegularizerKind::Irl),
            "bc" => Ok(RegularizerKind::Bc),
            other => Err(Error::Config(format!("unknown regularizer kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub psi: f64,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
    /// Higher discriminator sees `(s^e, g^e)` next to the subgoal.
    pub conditioned: bool,
    /// Lower expert pairs come from every parsed segment, not only verified ones.
    pub lower_all_pairs: bool,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self {
            kind: RegularizerKind::Irl,
            psi: 1e-3,
            disc_hidden: vec![64, 64],
            disc_lr: 3e-4,
            conditioned: true,
            lower_all_pairs: false,
        }
    }
}

impl RegularizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.psi >= 0.0 && self.psi.is_finite()) {
            return Err(Error::Config(format!("psi must be finite and non-negative, got {}", self.psi)));
        }
        if !(self.disc_lr > 0.0) {
            return Err(Error::Config("discriminator learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn active(&self) -> bool {
        self.kind != RegularizerKind::None && self.psi != 0.0
    }
}

/// Default regularization weight for an environment name.
pub fn default_psi(env: &str) -> f64 {
    match env {
        "maze" => 1e-3,
        _ => 5e-3,
    }
}

/// How discriminator inputs are assembled from policy observations and
/// outputs.
///
/// Observations are always `[state, goal]` rows. The higher level scores
/// `[subgoal, state, goal]` (or just the subgoal when unconditioned); the
/// lower level scores `[state, action]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscInput {
    pub level: Level,
    pub conditioned: bool,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub action_dim: usize,
}

impl DiscInput {
    pub fn width(&self) -> usize {
        match self.level {
            Level::Higher if self.conditioned => self.action_dim + self.obs_dim,
            Level::Higher => self.action_dim,
            Level::Lower => self.state_dim + self.action_dim,
        }
    }

    pub fn build(&self, obs: &Matrix, actions: &Matrix) -> Result<Matrix> {
        if obs.cols != self.obs_dim {
            return Err(Error::dims("discriminator observation", self.obs_dim, obs.cols));
        }
        if actions.cols != self.action_dim || actions.rows != obs.rows {
            return Err(Error::dims("discriminator action", self.action_dim, actions.cols));
        }
        Ok(match self.level {
            Level::Higher if self.conditioned => Matrix::hcat(&[actions, obs]),
            Level::Higher => actions.clone(),
            Level::Lower => Matrix::hcat(&[&obs.columns(0, self.state_dim), actions]),
        })
    }

    /// Picks the action columns out of a gradient with respect to the input.
    pub fn action_grad(&self, input_grad: &Matrix) -> Matrix {
        match self.level {
            Level::Higher => input_grad.columns(0, self.action_dim),
            Level::Lower => input_grad.columns(self.state_dim, self.state_dim + self.action_dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscStats {
    pub loss: f64,
    pub applied: bool,
    pub pass_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub level: Level,
    pub spec: MlpSpec,
    pub params: ParamVector,
    pub opt: AdamState,
    pub skipped: u64,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(level: Level, input_dim: usize, hidden: Vec<usize>, lr: f64, rng: &mut R) -> Result<Self> {
        let spec = MlpSpec::new(input_dim, 1, hidden, Head::Sigmoid);
        spec.validate()?;
        let params = spec.init(rng);
        let opt = AdamState::new(AdamConfig::with_lr(lr), &params);
        Ok(Self {
            level,
            spec,
            params,
            opt,
            skipped: 0,
        })
    }

    pub fn score(&self, inputs: &Matrix) -> Result<Vec<f64>> {
        Ok(self.spec.forward(&self.params, inputs)?.0.data)
    }

    /// One Adam step on the LSGAN discriminator loss. Expert rows are pushed
    /// toward 1 and policy rows toward 0; the two batches are weighted equally
    /// whatever their sizes.
    pub fn update(&mut self, expert: &Matrix, policy: &Matrix) -> Result<DiscStats> {
        if expert.rows == 0 || policy.rows == 0 {
            return Err(Error::EmptyDataset("discriminator batch".into()));
        }
        let (de, ce) = self.spec.forward(&self.params, expert)?;
        let (dp, cp) = self.spec.forward(&self.params, policy)?;
        let (ne, np) = (expert.rows as f64, policy.rows as f64);
        let mut loss = 0.0;
        let mut ge = Matrix::zeros(expert.rows, 1);
        for (g, d) in ge.data.iter_mut().zip(&de.data) {
            loss += 0.5 * (d - 1.0).powi(2) / ne;
            *g = (d - 1.0) / ne;
        }
        let mut gp = Matrix::zeros(policy.rows, 1);
        for (g, d) in gp.data.iter_mut().zip(&dp.data) {
            loss += 0.5 * d * d / np;
            *g = d / np;
        }
        let pass_ids = vec![ce.pass_id(), cp.pass_id()];
        let mut stats = DiscStats {
            loss,
            applied: false,
            pass_ids,
        };
        if !loss.is_finite() {
            self.skipped += 1;
            return Ok(stats);
        }
        let (mut grad, _) = self.spec.backward(&self.params, &ce, &ge)?;
        let (gpol, _) = self.spec.backward(&self.params, &cp, &gp)?;
        grad.axpy(1.0, &gpol)?;
        stats.applied = self.opt.step(&mut self.params, &grad)? == StepOutcome::Applied;
        if !stats.applied {
            self.skipped += 1;
        }
        Ok(stats)
    }
}

/// Generator side of the LSGAN game: `½E[(D(x) − 1)²]` and its gradient with
/// respect to the inputs `x`. The discriminator is not modified.
pub fn irl_policy_loss(disc: &Discriminator, inputs: &Matrix) -> Result<(f64, Matrix, u64)> {
    if inputs.rows == 0 {
        return Err(Error::EmptyDataset("policy batch".into()));
    }
    let (d, cache) = disc.spec.forward(&disc.params, inputs)?;
    let n = inputs.rows as f64;
    let mut loss = 0.0;
    let mut g = Matrix::zeros(inputs.rows, 1);
    for (gi, di) in g.data.iter_mut().zip(&d.data) {
        loss += 0.5 * (di - 1.0).powi(2) / n;
        *gi = (di - 1.0) / n;
    }
    let (_, input_grad) = disc.spec.backward(&disc.params, &cache, &g)?;
    Ok((loss, input_grad, cache.pass_id()))
}

/// Mean squared error over every element, with its gradient with respect to
/// `outputs`.
pub fn bc_policy_loss(outputs: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if outputs.rows != targets.rows || outputs.cols != targets.cols {
        return Err(Error::dims("behavior cloning targets", outputs.data.len(), targets.data.len()));
    }
    if outputs.data.is_empty() {
        return Err(Error::EmptyDataset("behavior cloning batch".into()));
    }
    let n = outputs.data.len() as f64;
    let mut grad = Matrix::zeros(outputs.rows, outputs.cols);
    let mut loss = 0.0;
    for ((g, o), t) in grad.data.iter_mut().zip(&outputs.data).zip(&targets.data) {
        let e = o - t;
        loss += e * e / n;
        *g = 2.0 * e / n;
    }
    Ok((loss, grad))
}

/// Errors if a discriminator step and a policy step share any forward pass.
pub fn ensure_disjoint_passes(disc: &[u64], policy: &[u64]) -> Result<()> {
    if let Some(id) = disc.iter().find(|id| policy.contains(id)) {
        return Err(Error::InvalidState(format!(
            "forward pass {id} fed both the discriminator and the policy update"
        )));
    }
    Ok(())
}

/// Expert `(observation, target)` rows for one level. Targets are raw subgoal
/// vectors for the higher level and normalized actions for the lower.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExpertPool {
    pub obs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl ExpertPool {
    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    /// Uniform sample with replacement; returns `(obs, targets)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<(Matrix, Matrix)> {
        if self.is_empty() {
            return Err(Error::EmptyDataset("expert pool".into()));
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        let obs: Vec<&[f64]> = idx.iter().map(|&i| self.obs[i].as_slice()).collect();
        let tgt: Vec<&[f64]> = idx.iter().map(|&i| self.targets[i].as_slice()).collect();
        Ok((Matrix::from_rows(&obs), Matrix::from_rows(&tgt)))
    }
}

/// Higher-level expert rows from `D_g`: observation `[s^e, g^e]`, target the
/// subgoal mapped into the policy's raw `[-1, 1]` box.
pub fn higher_pool(dg: &SubgoalDataset, env: &dyn Env) -> Result<ExpertPool> {
    let bounds = env.goal_bounds();
    let mut pool = ExpertPool::default();
    for t in &dg.transitions {
        let mut obs = t.initial_state.0.clone();
        obs.extend_from_slice(&t.final_goal.0);
        pool.obs.push(obs);
        pool.targets.push(bounds.to_raw(&t.subgoal)?);
    }
    Ok(pool)
}

/// Lower-level expert rows: consecutive demo states inside parsed segments,
/// with the action recovered from the environment kinematics and the segment
/// subgoal as the conditioning goal. Pairs whose action cannot be recovered
/// are dropped.
pub fn lower_pool(dg: &SubgoalDataset, demos: &DemoDataset, env: &dyn Env, all_pairs: bool) -> Result<ExpertPool> {
    let mut pool = ExpertPool::default();
    for t in dg.transitions.iter().filter(|t| all_pairs || t.verified) {
        let demo = demos
            .trajectories
            .get(t.demo)
            .ok_or_else(|| Error::InvalidState(format!("subgoal transition names missing demo {}", t.demo)))?;
        if t.subgoal_index >= demo.states.len() {
            return Err(Error::InvalidState(format!("segment end {} past demo {}", t.subgoal_index, t.demo)));
        }
        for i in t.start_index..t.subgoal_index {
            if let Some(a) = env.infer_action(&demo.states[i], &demo.states[i + 1]) {
                let mut obs = demo.states[i].0.clone();
                obs.extend_from_slice(&t.subgoal.0);
                pool.obs.push(obs);
                pool.targets.push(a.0);
            }
        }
    }
    Ok(pool)
}
