//! Goal-conditioned soft actor-critic with twin critics and a uniform replay
//! buffer. Both hierarchy levels use this machinery unchanged.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::approx::{
    deterministic_action, gaussian_policy_sample, polyak_update, AdamConfig, AdamState, Head,
    Matrix, MlpSpec, ParamVector, StepOutcome,
};
use crate::error::{Error, Result};
use crate::mdp::{ActionVec, GoalVec, StateVec};

/// Which reward signal a record carries. Lower-level buffers only accept
/// intrinsic records and higher-level buffers only extrinsic ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardSource {
    Intrinsic,
    Extrinsic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub state: StateVec,
    pub goal: GoalVec,
    pub action: ActionVec,
    pub reward: f64,
    pub next_state: StateVec,
    pub done: bool,
    pub source: RewardSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayBuffer {
    records: Vec<ReplayRecord>,
    capacity: usize,
    cursor: usize,
    source: RewardSource,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, source: RewardSource) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self {
            records: Vec::new(),
            capacity,
            cursor: 0,
            source,
        })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn source(&self) -> RewardSource {
        self.source
    }

    pub fn get(&self, i: usize) -> Option<&ReplayRecord> {
        self.records.get(i)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ReplayRecord> {
        self.records.iter()
    }

    /// Appends, overwriting the oldest record once full.
    pub fn push(&mut self, record: ReplayRecord) -> Result<()> {
        if record.source != self.source {
            return Err(Error::InvalidState(format!(
                "{:?} record pushed into a {:?} buffer",
                record.source, self.source
            )));
        }
        if !record.reward.is_finite() {
            return Err(Error::InvalidState("non-finite reward".into()));
        }
        if self.records.len() < self.capacity {
            self.records.push(record);
        } else {
            self.records[self.cursor] = record;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    pub fn clear(&mut self) {
        self.records.clear();
        self.cursor = 0;
    }

    /// Uniform draws with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        if self.records.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| rng.random_range(0..self.records.len())).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Batch> {
        if self.records.is_empty() {
            return Err(Error::EmptyDataset("replay buffer".into()));
        }
        let idx = self.sample_indices(rng, n);
        Batch::from_records(idx.iter().map(|&i| &self.records[i]))
    }
}

/// Column-stacked view of a set of records. Observations are `[state, goal]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
}

impl Batch {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a ReplayRecord>) -> Result<Self> {
        let mut obs = Vec::new();
        let mut next_obs = Vec::new();
        let mut actions = Vec::new();
        let mut rewards = Vec::new();
        let mut dones = Vec::new();
        let mut dims: Option<(usize, usize, usize)> = None;
        for r in records {
            let d = (r.state.dim(), r.goal.dim(), r.action.dim());
            match dims {
                None => dims = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::dims("replay record", expected.0 + expected.1, d.0 + d.1))
                }
                _ => {}
            }
            if r.next_state.dim() != d.0 {
                return Err(Error::dims("replay next state", d.0, r.next_state.dim()));
            }
            obs.extend_from_slice(r.state.as_slice());
            obs.extend_from_slice(r.goal.as_slice());
            next_obs.extend_from_slice(r.next_state.as_slice());
            next_obs.extend_from_slice(r.goal.as_slice());
            actions.extend_from_slice(r.action.as_slice());
            rewards.push(r.reward);
            dones.push(r.done);
        }
        let (ds, dg, da) = dims.ok_or_else(|| Error::EmptyDataset("batch".into()))?;
        let n = rewards.len();
        Ok(Self {
            obs: Matrix::from_vec(n, ds + dg, obs),
            actions: Matrix::from_vec(n, da, actions),
            rewards,
            next_obs: Matrix::from_vec(n, ds + dg, next_obs),
            dones,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacConfig {
    pub hidden: Vec<usize>,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub capacity: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            alpha: 0.1,
            gamma: 0.98,
            tau: 0.005,
            batch_size: 256,
            capacity: 100_000,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if self.batch_size == 0 || self.capacity == 0 {
            return bad("batch size and capacity must be positive");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub loss: f64,
    pub applied: bool,
    /// Forward passes whose caches fed this update's gradients.
    pub pass_ids: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorStats {
    pub loss: f64,
    pub rl_loss: f64,
    pub reg_loss: f64,
    pub applied: bool,
    /// Rows whose minimum came from the first critic.
    pub min_from_first: usize,
    pub pass_ids: Vec<u64>,
}

/// Extra differentiable term added to the actor loss with weight `weight`.
///
/// The actor is evaluated on `obs` with the given `noise` (all zeros gives the
/// deterministic `tanh(mean)` output) and `objective` maps `(obs, actions)` to
/// a loss and its gradient with respect to the actions.
pub struct ActorRegularizer<'a> {
    pub obs: Matrix,
    pub noise: Matrix,
    pub weight: f64,
    pub objective: &'a mut dyn FnMut(&Matrix, &Matrix) -> Result<(f64, Matrix)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SacAgent {
    pub cfg: SacConfig,
    pub state_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub actor_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub actor: ParamVector,
    pub critics: [ParamVector; 2],
    pub targets: [ParamVector; 2],
    pub actor_opt: AdamState,
    pub critic_opts: [AdamState; 2],
    pub skipped_updates: u64,
    pub consecutive_skips: u64,
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect())
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        goal_dim: usize,
        action_dim: usize,
        cfg: SacConfig,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        let obs_dim = state_dim + goal_dim;
        let actor_spec = MlpSpec::new(obs_dim, action_dim, cfg.hidden.clone(), Head::TanhGaussian);
        let critic_spec = MlpSpec::new(obs_dim + action_dim, 1, cfg.hidden.clone(), Head::Linear);
        actor_spec.validate()?;
        critic_spec.validate()?;
        let actor = actor_spec.init(rng);
        let critics = [critic_spec.init(rng), critic_spec.init(rng)];
        let targets = critics.clone();
        let actor_opt = AdamState::new(AdamConfig::with_lr(cfg.actor_lr), &actor);
        let critic_opts = [
            AdamState::new(AdamConfig::with_lr(cfg.critic_lr), &critics[0]),
            AdamState::new(AdamConfig::with_lr(cfg.critic_lr), &critics[1]),
        ];
        Ok(Self {
            cfg,
            state_dim,
            goal_dim,
            action_dim,
            actor_spec,
            critic_spec,
            actor,
            critics,
            targets,
            actor_opt,
            critic_opts,
            skipped_updates: 0,
            consecutive_skips: 0,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.state_dim + self.goal_dim
    }

    pub fn observation(&self, state: &StateVec, goal: &GoalVec) -> Result<Matrix> {
        if state.dim() != self.state_dim {
            return Err(Error::dims("agent state", self.state_dim, state.dim()));
        }
        if goal.dim() != self.goal_dim {
            return Err(Error::dims("agent goal", self.goal_dim, goal.dim()));
        }
        let mut row = state.0.clone();
        row.extend_from_slice(goal.as_slice());
        Ok(Matrix::row_vector(&row))
    }

    /// Raw policy head output `[mean, log_std]` for each observation row.
    pub fn policy_head(&self, obs: &Matrix) -> Result<Matrix> {
        Ok(self.actor_spec.forward(&self.actor, obs)?.0)
    }

    pub fn select_action<R: Rng + ?Sized>(
        &self,
        state: &StateVec,
        goal: &GoalVec,
        mode: ActionMode,
        rng: &mut R,
    ) -> Result<ActionVec> {
        let noise = match mode {
            ActionMode::Deterministic => return self.deterministic_action(state, goal),
            ActionMode::Stochastic => standard_normal(rng, 1, self.action_dim),
        };
        self.action_with_noise(state, goal, &noise.data)
    }

    pub fn deterministic_action(&self, state: &StateVec, goal: &GoalVec) -> Result<ActionVec> {
        let raw = self.policy_head(&self.observation(state, goal)?)?;
        Ok(ActionVec(deterministic_action(&raw).data))
    }

    pub fn action_with_noise(&self, state: &StateVec, goal: &GoalVec, noise: &[f64]) -> Result<ActionVec> {
        let raw = self.policy_head(&self.observation(state, goal)?)?;
        let noise = Matrix::row_vector(noise);
        let s = gaussian_policy_sample(&raw, &noise)?;
        Ok(ActionVec(s.action.data))
    }

    /// `(Q1, Q2)` for each `(obs, action)` row.
    pub fn q_values(&self, obs: &Matrix, actions: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
        let input = Matrix::hcat(&[obs, actions]);
        let (q1, _) = self.critic_spec.forward(&self.critics[0], &input)?;
        let (q2, _) = self.critic_spec.forward(&self.critics[1], &input)?;
        Ok((q1.data, q2.data))
    }

    /// Soft Bellman targets `r + γ(1−done)(min Q̄(s',a') − α log π(a'|s'))`.
    pub fn critic_targets(&self, batch: &Batch, next_noise: &Matrix) -> Result<Vec<f64>> {
        let n = batch.len();
        if n == 0 {
            return Err(Error::EmptyDataset("critic batch".into()));
        }
        let raw = self.policy_head(&batch.next_obs)?;
        let next = gaussian_policy_sample(&raw, next_noise)?;
        let input = Matrix::hcat(&[&batch.next_obs, &next.action]);
        let (t1, _) = self.critic_spec.forward(&self.targets[0], &input)?;
        let (t2, _) = self.critic_spec.forward(&self.targets[1], &input)?;
        let (gamma, alpha) = (self.cfg.gamma, self.cfg.alpha);
        Ok((0..n)
            .map(|i| {
                if batch.dones[i] {
                    batch.rewards[i]
                } else {
                    let soft = t1.data[i].min(t2.data[i]) - alpha * next.log_prob[i];
                    batch.rewards[i] + gamma * soft
                }
            })
            .collect())
    }

    pub fn critic_update<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<UpdateStats> {
        let noise = standard_normal(rng, batch.len(), self.action_dim);
        self.critic_update_with_noise(batch, &noise)
    }

    /// One gradient step on both critics followed by the polyak target update.
    pub fn critic_update_with_noise(&mut self, batch: &Batch, next_noise: &Matrix) -> Result<UpdateStats> {
        let y = self.critic_targets(batch, next_noise)?;
        let n = batch.len() as f64;
        let input = Matrix::hcat(&[&batch.obs, &batch.actions]);
        let mut loss = 0.0;
        let mut grads = Vec::with_capacity(2);
        let mut pass_ids = Vec::with_capacity(2);
        for k in 0..2 {
            let (q, cache) = self.critic_spec.forward(&self.critics[k], &input)?;
            let mut og = Matrix::zeros(q.rows, 1);
            for i in 0..q.rows {
                let e = q.data[i] - y[i];
                loss += e * e / n;
                og.data[i] = 2.0 * e / n;
            }
            let (g, _) = self.critic_spec.backward(&self.critics[k], &cache, &og)?;
            pass_ids.push(cache.pass_id());
            grads.push(g);
        }
        if !loss.is_finite() {
            self.note_skip();
            return Ok(UpdateStats {
                loss,
                applied: false,
                pass_ids,
            });
        }
        let mut applied = true;
        for (k, g) in grads.iter().enumerate() {
            applied &= self.critic_opts[k].step(&mut self.critics[k], g)? == StepOutcome::Applied;
        }
        for k in 0..2 {
            polyak_update(&mut self.targets[k], &self.critics[k], self.cfg.tau)?;
        }
        if applied {
            self.consecutive_skips = 0;
        } else {
            self.note_skip();
        }
        Ok(UpdateStats {
            loss,
            applied,
            pass_ids,
        })
    }

    pub fn actor_update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        rng: &mut R,
        reg: Option<&mut ActorRegularizer<'_>>,
    ) -> Result<ActorStats> {
        let noise = standard_normal(rng, batch.len(), self.action_dim);
        self.actor_update_with_noise(batch, &noise, reg)
    }

    /// Minimizes `E[α log π(ã|s) − min(Q1, Q2)(s, ã)] + weight · reg` with
    /// reparameterized `ã`.
    pub fn actor_update_with_noise(
        &mut self,
        batch: &Batch,
        noise: &Matrix,
        reg: Option<&mut ActorRegularizer<'_>>,
    ) -> Result<ActorStats> {
        let b = batch.len();
        if b == 0 {
            return Err(Error::EmptyDataset("actor batch".into()));
        }
        let n = b as f64;
        let alpha = self.cfg.alpha;
        let (raw, actor_cache) = self.actor_spec.forward(&self.actor, &batch.obs)?;
        let sample = gaussian_policy_sample(&raw, noise)?;
        let input = Matrix::hcat(&[&batch.obs, &sample.action]);
        let (q1, c1) = self.critic_spec.forward(&self.critics[0], &input)?;
        let (q2, c2) = self.critic_spec.forward(&self.critics[1], &input)?;
        let mut pass_ids = vec![actor_cache.pass_id(), c1.pass_id(), c2.pass_id()];

        let mut rl_loss = 0.0;
        let mut og1 = Matrix::zeros(b, 1);
        let mut og2 = Matrix::zeros(b, 1);
        let mut min_from_first = 0;
        for i in 0..b {
            let (a, c) = (q1.data[i], q2.data[i]);
            if a <= c {
                min_from_first += 1;
                og1.data[i] = -1.0 / n;
            } else {
                og2.data[i] = -1.0 / n;
            }
            rl_loss += (alpha * sample.log_prob[i] - a.min(c)) / n;
        }
        let (_, gi1) = self.critic_spec.backward(&self.critics[0], &c1, &og1)?;
        let (_, gi2) = self.critic_spec.backward(&self.critics[1], &c2, &og2)?;
        let od = self.obs_dim();
        let mut d_action = gi1.columns(od, od + self.action_dim);
        d_action.add_assign(&gi2.columns(od, od + self.action_dim));
        let d_logp = vec![alpha / n; b];
        let d_raw = sample.backward(&d_action, &d_logp)?;
        let (mut grad, _) = self.actor_spec.backward(&self.actor, &actor_cache, &d_raw)?;

        let mut reg_loss = 0.0;
        let mut loss = rl_loss;
        if let Some(reg) = reg {
            if reg.weight != 0.0 {
                let (rraw, rcache) = self.actor_spec.forward(&self.actor, &reg.obs)?;
                let rs = gaussian_policy_sample(&rraw, &reg.noise)?;
                let (l, da) = (reg.objective)(&reg.obs, &rs.action)?;
                if da.rows != rs.action.rows || da.cols != rs.action.cols {
                    return Err(Error::dims("regularizer gradient", rs.action.data.len(), da.data.len()));
                }
                let zeros = vec![0.0; rs.action.rows];
                let rd = rs.backward(&da, &zeros)?;
                let (rg, _) = self.actor_spec.backward(&self.actor, &rcache, &rd)?;
                grad.axpy(reg.weight, &rg)?;
                reg_loss = l;
                loss += reg.weight * l;
                pass_ids.push(rcache.pass_id());
            }
        }
        let mut stats = ActorStats {
            loss,
            rl_loss,
            reg_loss,
            applied: false,
            min_from_first,
            pass_ids,
        };
        if !loss.is_finite() {
            self.note_skip();
            return Ok(stats);
        }
        stats.applied = self.actor_opt.step(&mut self.actor, &grad)? == StepOutcome::Applied;
        if stats.applied {
            self.consecutive_skips = 0;
        } else {
            self.note_skip();
        }
        Ok(stats)
    }

    fn note_skip(&mut self) {
        self.skipped_updates += 1;
        self.consecutive_skips += 1;
    }
}
