//! The joint training loop.
//!
//! Each iteration plays one full episode with the current stochastic policies
//! and then performs the updates that episode paid for: `updates_per_step`
//! lower updates per env step and one higher update per subgoal decision,
//! once the warmup is over. `D_g` is rebuilt whenever the metered step count
//! crosses a multiple of the population period.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::eval::{evaluate, training_seed, EvalPolicy, EvalSuite};
use super::metrics::{write_metrics, Mean, MetricsRow};
use crate::approx::{gaussian_policy_sample, Matrix};
use crate::demos::{load_dataset, DemoDataset};
use crate::error::{Error, Result};
use crate::hierarchy::{
    higher_reward_shaping, run_episode, run_flat_episode, GoalPassthrough, HierarchyConfig, Primitive,
    SubgoalPolicy,
};
use crate::mdp::{ActionVec, Env, EnvContract, EnvStep, GoalBox, GoalVec, StateVec};
use crate::regularize::{
    bc_policy_loss, ensure_disjoint_passes, higher_pool, irl_policy_loss, lower_pool, DiscInput, Discriminator,
    ExpertPool, Level, RegularizerKind,
};
use crate::relabel::{repopulate, save_subgoals, ParserKind, SubgoalDataset};
use crate::rl::{standard_normal, ActionMode, ActorRegularizer, Batch, ReplayBuffer, RewardSource, SacAgent};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Env wrapper that counts `step` calls.
pub struct CountingEnv {
    pub inner: Box<dyn Env>,
    pub steps: u64,
}

impl CountingEnv {
    pub fn new(inner: Box<dyn Env>) -> Self {
        Self { inner, steps: 0 }
    }
}

impl Env for CountingEnv {
    fn name(&self) -> &'static str {
        self.inner.name()
    }
    fn contract(&self) -> EnvContract {
        self.inner.contract()
    }
    fn reset(&mut self, seed: u64) -> StateVec {
        self.inner.reset(seed)
    }
    fn reset_to(&mut self, state: &StateVec) -> Result<StateVec> {
        self.inner.reset_to(state)
    }
    fn state(&self) -> &StateVec {
        self.inner.state()
    }
    fn goal(&self) -> &GoalVec {
        self.inner.goal()
    }
    fn set_goal(&mut self, goal: GoalVec) -> Result<()> {
        self.inner.set_goal(goal)
    }
    fn goal_threshold(&self) -> f64 {
        self.inner.goal_threshold()
    }
    fn step(&mut self, action: &ActionVec) -> EnvStep {
        self.steps += 1;
        self.inner.step(action)
    }
    fn achieved_goal(&self, state: &StateVec) -> GoalVec {
        self.inner.achieved_goal(state)
    }
    fn goal_bounds(&self) -> GoalBox {
        self.inner.goal_bounds()
    }
    fn step_bound(&self) -> f64 {
        self.inner.step_bound()
    }
    fn infer_action(&self, state: &StateVec, next: &StateVec) -> Option<ActionVec> {
        self.inner.infer_action(state, next)
    }
    fn clone_box(&self) -> Box<dyn Env> {
        Box::new(CountingEnv {
            inner: self.inner.clone_box(),
            steps: self.steps,
        })
    }
}

/// The trained agents, detached from the training state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policies {
    pub lower: SacAgent,
    /// `None` for flat runs and for collapsed (`c = T`) hierarchies.
    pub higher: Option<SacAgent>,
    pub hierarchy: HierarchyConfig,
    pub flat: bool,
}

/// Acts with the policy mean; used for evaluation and relabeling.
pub struct Deterministic<'a>(pub &'a SacAgent);

impl Primitive for Deterministic<'_> {
    fn act(&mut self, state: &StateVec, target: &GoalVec) -> Result<ActionVec> {
        self.0.deterministic_action(state, target)
    }
}

impl SubgoalPolicy for Deterministic<'_> {
    fn propose(&mut self, state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>> {
        Ok(self.0.deterministic_action(state, goal)?.0)
    }
}

impl EvalPolicy for Policies {
    fn rollout(&mut self, env: &mut dyn Env) -> Result<bool> {
        let h = self.hierarchy;
        let mut lower = Deterministic(&self.lower);
        if self.flat {
            return Ok(run_flat_episode(env, &mut lower, h.horizon, h.delta_high)?.success);
        }
        let log = match &self.higher {
            Some(agent) => run_episode(env, &mut Deterministic(agent), &mut lower, &h)?,
            None => run_episode(env, &mut GoalPassthrough, &mut lower, &h)?,
        };
        Ok(log.success)
    }
}

/// Exploration policy: uniform random during warmup, stochastic SAC after.
struct Explore<'a> {
    agent: &'a SacAgent,
    rng: &'a mut ChaCha8Rng,
    random: bool,
}

impl Explore<'_> {
    fn sample(&mut self, state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>> {
        if self.random {
            Ok((0..self.agent.action_dim).map(|_| self.rng.random_range(-1.0..1.0)).collect())
        } else {
            Ok(self.agent.select_action(state, goal, ActionMode::Stochastic, self.rng)?.0)
        }
    }
}

impl Primitive for Explore<'_> {
    fn act(&mut self, state: &StateVec, target: &GoalVec) -> Result<ActionVec> {
        self.sample(state, target).map(ActionVec)
    }
}

impl SubgoalPolicy for Explore<'_> {
    fn propose(&mut self, state: &StateVec, goal: &GoalVec) -> Result<Vec<f64>> {
        self.sample(state, goal)
    }
}

/// Independent random streams so that enabling one component never shifts
/// the draws of another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Streams {
    pub explore_lower: ChaCha8Rng,
    pub explore_higher: ChaCha8Rng,
    pub lower: ChaCha8Rng,
    pub higher: ChaCha8Rng,
    pub reg_lower: ChaCha8Rng,
    pub reg_higher: ChaCha8Rng,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Accum {
    lower_critic: Mean,
    lower_actor: Mean,
    lower_reg: Mean,
    lower_disc: Mean,
    higher_critic: Mean,
    higher_actor: Mean,
    higher_reg: Mean,
    higher_disc: Mean,
    pure_rl: u64,
    skipped: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub env_steps: u64,
    pub relabel_steps: u64,
    pub episodes: u64,
    pub next_repopulation: u64,
    pub next_eval: u64,
    pub repopulations: u64,
}

/// Everything needed to resume a run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub cfg: RunConfig,
    pub policies: Policies,
    pub lower_disc: Option<Discriminator>,
    pub higher_disc: Option<Discriminator>,
    pub lower_buffer: ReplayBuffer,
    pub higher_buffer: Option<ReplayBuffer>,
    pub dg: SubgoalDataset,
    pub dg_epochs: Vec<u64>,
    pub lower_pool: ExpertPool,
    pub higher_pool: ExpertPool,
    pub streams: Streams,
    pub counters: Counters,
    pub metrics: Vec<MetricsRow>,
    accum: Accum,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = bincode::serialize(self).map_err(|e| Error::Serialization(e.to_string()))?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ser = |e: bincode::Error| Error::Serialization(e.to_string());
        // `version` is the first field, so it can be checked before the rest
        // of the layout is trusted.
        let version: u32 = bincode::deserialize(&bytes).map_err(ser)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        bincode::deserialize(&bytes).map_err(ser)
    }
}

/// Which update produced a loss, for loss-trace comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    LowerCritic,
    LowerActor,
    HigherCritic,
    HigherActor,
}

pub struct Trainer {
    state: Checkpoint,
    env: CountingEnv,
    relabel_env: CountingEnv,
    eval_env: Box<dyn Env>,
    suite: EvalSuite,
    demos: Option<DemoDataset>,
    out: Option<PathBuf>,
    /// When set, every policy and critic loss is appended here in order.
    pub loss_trace: Option<Vec<(LossKind, f64)>>,
}

impl Trainer {
    /// Starts a run. Demonstrations are taken from `demos` or, failing that,
    /// loaded from the configured path.
    pub fn new(cfg: RunConfig, demos: Option<DemoDataset>) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.env.build()?;
        let contract = env.contract();
        let s = cfg.seed;
        let (sd, gd, ad) = (contract.state_dim, contract.goal_dim, contract.action_dim);
        let lower = SacAgent::new(sd, gd, ad, cfg.lower.clone(), &mut stream(s, 1))?;
        let has_higher = !cfg.is_flat() && !cfg.is_collapsed();
        let higher = if has_higher {
            Some(SacAgent::new(sd, gd, gd, cfg.higher.clone(), &mut stream(s, 2))?)
        } else {
            None
        };
        let reg = &cfg.regularizer;
        let (lower_disc, higher_disc) = if reg.active() && reg.kind == RegularizerKind::Irl {
            let lo = lower_input(&cfg, &contract);
            let ld = Discriminator::new(Level::Lower, lo.width(), reg.disc_hidden.clone(), reg.disc_lr, &mut stream(s, 3))?;
            let hd = match has_higher {
                true => {
                    let hi = higher_input(&cfg, &contract);
                    Some(Discriminator::new(Level::Higher, hi.width(), reg.disc_hidden.clone(), reg.disc_lr, &mut stream(s, 4))?)
                }
                false => None,
            };
            (Some(ld), hd)
        } else {
            (None, None)
        };
        let lower_source = if cfg.is_flat() { RewardSource::Extrinsic } else { RewardSource::Intrinsic };
        let demos = match (demos, cfg.needs_demos()) {
            (Some(d), _) => Some(d),
            (None, false) => None,
            (None, true) => match &cfg.demos {
                Some(p) => Some(load_dataset(p)?),
                None => return Err(Error::Config("this configuration parses demonstrations; set `demos`".into())),
            },
        };
        let demos = demos.map(|d| match cfg.demo_count {
            Some(n) => d.truncated(n),
            None => d,
        });
        if let Some(d) = &demos {
            if d.state_dim() != sd || d.goal_dim() != gd {
                return Err(Error::dims("demonstration state", sd, d.state_dim()));
            }
        }
        let state = Checkpoint {
            version: CHECKPOINT_VERSION,
            policies: Policies {
                lower,
                higher,
                hierarchy: cfg.hierarchy,
                flat: cfg.is_flat(),
            },
            lower_disc,
            higher_disc,
            lower_buffer: ReplayBuffer::new(cfg.lower.capacity, lower_source)?,
            higher_buffer: match has_higher {
                true => Some(ReplayBuffer::new(cfg.higher.capacity, RewardSource::Extrinsic)?),
                false => None,
            },
            dg: SubgoalDataset::default(),
            dg_epochs: Vec::new(),
            lower_pool: ExpertPool::default(),
            higher_pool: ExpertPool::default(),
            streams: Streams {
                explore_lower: stream(s, 5),
                explore_higher: stream(s, 6),
                lower: stream(s, 7),
                higher: stream(s, 8),
                reg_lower: stream(s, 9),
                reg_higher: stream(s, 10),
            },
            counters: Counters {
                env_steps: 0,
                relabel_steps: 0,
                episodes: 0,
                next_repopulation: 0,
                next_eval: cfg.eval_every,
                repopulations: 0,
            },
            metrics: Vec::new(),
            accum: Accum::default(),
            cfg,
        };
        Self::assemble(state, demos)
    }

    /// Resumes from a checkpoint. `demos` as for [`Trainer::new`].
    pub fn resume(ckpt: Checkpoint, demos: Option<DemoDataset>) -> Result<Self> {
        let demos = match (demos, ckpt.cfg.needs_demos(), &ckpt.cfg.demos) {
            (Some(d), _, _) => Some(d),
            (None, true, Some(p)) => Some(load_dataset(p)?),
            (None, true, None) => return Err(Error::Config("resuming a parsing run needs its demonstrations".into())),
            (None, false, _) => None,
        };
        let demos = demos.map(|d| match ckpt.cfg.demo_count {
            Some(n) => d.truncated(n),
            None => d,
        });
        Self::assemble(ckpt, demos)
    }

    fn assemble(state: Checkpoint, demos: Option<DemoDataset>) -> Result<Self> {
        let mut env = CountingEnv::new(state.cfg.env.build()?);
        env.steps = state.counters.env_steps;
        let mut relabel_env = CountingEnv::new(state.cfg.env.build()?);
        relabel_env.steps = state.counters.relabel_steps;
        Ok(Self {
            suite: EvalSuite::held_out(state.cfg.eval_rollouts),
            eval_env: state.cfg.env.build()?,
            env,
            relabel_env,
            demos,
            out: None,
            loss_trace: None,
            state,
        })
    }

    /// Directory for metrics, the latest checkpoint and `D_g` snapshots.
    pub fn with_output(mut self, dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir.join("dg")).map_err(|e| Error::io(dir, e))?;
        std::fs::write(dir.join("config.txt"), self.state.cfg.to_text()).map_err(|e| Error::io(dir, e))?;
        self.out = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn config(&self) -> &RunConfig {
        &self.state.cfg
    }

    pub fn counters(&self) -> &Counters {
        &self.state.counters
    }

    pub fn metrics(&self) -> &[MetricsRow] {
        &self.state.metrics
    }

    pub fn policies(&self) -> &Policies {
        &self.state.policies
    }

    pub fn dg(&self) -> &SubgoalDataset {
        &self.state.dg
    }

    /// Provenance epochs of every repopulation so far.
    pub fn dg_epochs(&self) -> &[u64] {
        &self.state.dg_epochs
    }

    /// `(training, relabeling)` env interactions as seen by the env wrappers.
    pub fn interactions(&self) -> (u64, u64) {
        (self.env.steps, self.relabel_env.steps)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.state.clone()
    }

    /// Runs to the configured budget and writes a final metrics row.
    pub fn train(&mut self) -> Result<()> {
        self.run_until(self.state.cfg.total_steps)?;
        let last = self.state.metrics.last().map(|r| r.step);
        if last != Some(self.state.counters.env_steps) {
            self.log_row()?;
        }
        self.persist()
    }

    /// Plays whole episodes until at least `step` env steps (capped by the
    /// budget) have been taken. Stops only at episode boundaries.
    pub fn run_until(&mut self, step: u64) -> Result<()> {
        let stop = step.min(self.state.cfg.total_steps);
        while self.state.counters.env_steps < stop {
            self.maybe_repopulate()?;
            self.episode()?;
            let c = &mut self.state.counters;
            if c.env_steps >= c.next_eval {
                c.next_eval = (c.env_steps / self.state.cfg.eval_every + 1) * self.state.cfg.eval_every;
                self.log_row()?;
                self.persist()?;
            }
        }
        debug_assert_eq!(self.env.steps, self.state.counters.env_steps);
        debug_assert_eq!(self.relabel_env.steps, self.state.counters.relabel_steps);
        Ok(())
    }

    fn persist(&self) -> Result<()> {
        if let Some(dir) = &self.out {
            write_metrics(&dir.join("metrics.csv"), &self.state.metrics)?;
            self.state.save(&dir.join("checkpoint.bin"))?;
        }
        Ok(())
    }

    fn maybe_repopulate(&mut self) -> Result<()> {
        if self.state.cfg.parser == ParserKind::None {
            return Ok(());
        }
        let (p, total) = (self.state.cfg.population_period, self.state.cfg.total_steps);
        while self.state.counters.next_repopulation <= self.state.counters.env_steps
            && self.state.counters.next_repopulation < total
        {
            let epoch = self.state.counters.next_repopulation;
            self.repopulate(epoch)?;
            self.state.counters.next_repopulation += p;
        }
        Ok(())
    }

    fn repopulate(&mut self, epoch: u64) -> Result<()> {
        let cfg = &self.state.cfg;
        let demos = self.demos.as_ref().ok_or_else(|| Error::Config("no demonstrations loaded".into()))?;
        let mut lower = Deterministic(&self.state.policies.lower);
        let report = repopulate(
            &mut self.state.dg,
            demos,
            &mut lower,
            &mut self.relabel_env,
            cfg.parser,
            cfg.hierarchy.c,
            cfg.hierarchy.delta_low,
            epoch,
            &format!("step-{}", self.state.counters.env_steps),
        );
        let report = match report {
            Ok(r) => r,
            Err(Error::EmptyDataset(m)) => {
                log::warn!("repopulation at {epoch} produced nothing: {m}");
                Default::default()
            }
            Err(e) => return Err(e),
        };
        self.state.counters.relabel_steps += report.env_steps;
        self.state.counters.repopulations += 1;
        self.state.dg_epochs.push(epoch);
        let all_pairs = cfg.regularizer.lower_all_pairs || matches!(cfg.parser, ParserKind::FixedWindow(_));
        let env = self.relabel_env.inner.as_ref();
        self.state.lower_pool = lower_pool(&self.state.dg, demos, env, all_pairs)?;
        self.state.higher_pool = higher_pool(&self.state.dg, env)?;
        if let Some(dir) = &self.out {
            save_subgoals(&self.state.dg, &dir.join("dg").join(format!("epoch-{epoch:09}.jsonl")))?;
        }
        Ok(())
    }

    fn episode(&mut self) -> Result<()> {
        let st = &mut self.state;
        let seed = training_seed(st.cfg.seed, st.counters.episodes);
        self.env.reset(seed);
        let random = st.counters.env_steps < st.cfg.warmup;
        let h = st.cfg.hierarchy;
        let mut lower = Explore {
            agent: &st.policies.lower,
            rng: &mut st.streams.explore_lower,
            random,
        };
        let (lower_records, higher_records) = if st.policies.flat {
            let log = run_flat_episode(&mut self.env, &mut lower, h.horizon, h.delta_high)?;
            (log.records, Vec::new())
        } else if let Some(agent) = &st.policies.higher {
            let mut higher = Explore {
                agent,
                rng: &mut st.streams.explore_higher,
                random,
            };
            let log = run_episode(&mut self.env, &mut higher, &mut lower, &h)?;
            let rewards = higher_reward_shaping(&log, st.cfg.shaping);
            let hr: Vec<_> = log.higher.iter().zip(rewards).map(|(t, r)| t.to_record(r)).collect();
            (log.lower, hr)
        } else {
            let log = run_episode(&mut self.env, &mut GoalPassthrough, &mut lower, &h)?;
            (log.lower, Vec::new())
        };
        let start = st.counters.env_steps;
        let n_steps = lower_records.len() as u64;
        for r in lower_records {
            st.lower_buffer.push(r)?;
        }
        let n_decisions = higher_records.len();
        if let Some(buf) = &mut st.higher_buffer {
            for r in higher_records {
                buf.push(r)?;
            }
        }
        st.counters.env_steps += n_steps;
        st.counters.episodes += 1;

        let (warmup, per_step) = (st.cfg.warmup, st.cfg.updates_per_step);
        for k in 1..=n_steps {
            if start + k > warmup {
                for _ in 0..per_step {
                    self.lower_update()?;
                }
            }
        }
        if start + n_steps > warmup {
            for _ in 0..n_decisions {
                self.higher_update()?;
            }
        }
        Ok(())
    }

    fn trace(&mut self, kind: LossKind, loss: f64) {
        if let Some(t) = &mut self.loss_trace {
            t.push((kind, loss));
        }
    }

    fn lower_update(&mut self) -> Result<()> {
        let st = &mut self.state;
        let contract = self.env.contract();
        let bs = st.cfg.lower.batch_size;
        let batch = st.lower_buffer.sample(&mut st.streams.lower, bs)?;
        let agent = &mut st.policies.lower;
        let c = agent.critic_update(&batch, &mut st.streams.lower)?;
        st.accum.lower_critic.add(c.loss);
        let input = lower_input(&st.cfg, &contract);
        let a = regularized_actor_update(
            agent,
            &batch,
            &mut st.streams.lower,
            &mut st.streams.reg_lower,
            &st.cfg,
            st.lower_disc.as_mut(),
            &st.lower_pool,
            input,
            &mut st.accum.lower_disc,
        )?;
        st.accum.lower_actor.add(a.rl_loss);
        if let Some(r) = a.reg_loss {
            st.accum.lower_reg.add(r);
        }
        st.accum.skipped += u64::from(!c.applied) + u64::from(!a.applied);
        let skips = agent.consecutive_skips;
        let (cl, al) = (c.loss, a.loss);
        self.trace(LossKind::LowerCritic, cl);
        self.trace(LossKind::LowerActor, al);
        self.check_skips(skips, "lower")
    }

    fn higher_update(&mut self) -> Result<()> {
        let st = &mut self.state;
        let contract = self.env.contract();
        let (Some(agent), Some(buf)) = (st.policies.higher.as_mut(), st.higher_buffer.as_ref()) else {
            return Ok(());
        };
        let batch = buf.sample(&mut st.streams.higher, st.cfg.higher.batch_size)?;
        let c = agent.critic_update(&batch, &mut st.streams.higher)?;
        st.accum.higher_critic.add(c.loss);
        if st.cfg.regularizer.active() && st.higher_pool.is_empty() {
            st.accum.pure_rl += 1;
        }
        let input = higher_input(&st.cfg, &contract);
        let a = regularized_actor_update(
            agent,
            &batch,
            &mut st.streams.higher,
            &mut st.streams.reg_higher,
            &st.cfg,
            st.higher_disc.as_mut(),
            &st.higher_pool,
            input,
            &mut st.accum.higher_disc,
        )?;
        st.accum.higher_actor.add(a.rl_loss);
        if let Some(r) = a.reg_loss {
            st.accum.higher_reg.add(r);
        }
        st.accum.skipped += u64::from(!c.applied) + u64::from(!a.applied);
        let skips = agent.consecutive_skips;
        let (cl, al) = (c.loss, a.loss);
        self.trace(LossKind::HigherCritic, cl);
        self.trace(LossKind::HigherActor, al);
        self.check_skips(skips, "higher")
    }

    fn check_skips(&self, consecutive: u64, level: &str) -> Result<()> {
        if consecutive > self.state.cfg.max_consecutive_skips {
            return Err(Error::Aborted(format!(
                "{consecutive} consecutive non-finite {level} updates at step {}",
                self.state.counters.env_steps
            )));
        }
        Ok(())
    }

    fn log_row(&mut self) -> Result<()> {
        let mut policy = self.state.policies.clone();
        let success = evaluate(&mut policy, self.eval_env.as_mut(), &self.suite, self.state.cfg.eval_rollouts)?;
        let st = &mut self.state;
        let a = &mut st.accum;
        let demos = st.dg.demos_parsed;
        let row = MetricsRow {
            step: st.counters.env_steps,
            relabel_steps: st.counters.relabel_steps,
            episodes: st.counters.episodes,
            loss_lower_critic: a.lower_critic.take(),
            loss_lower_actor: a.lower_actor.take(),
            loss_lower_reg: a.lower_reg.take(),
            loss_lower_disc: a.lower_disc.take(),
            loss_higher_critic: a.higher_critic.take(),
            loss_higher_actor: a.higher_actor.take(),
            loss_higher_reg: a.higher_reg.take(),
            loss_higher_disc: a.higher_disc.take(),
            success,
            dg_size: st.dg.len(),
            subgoals_per_demo: st.dg.subgoals_per_demo(demos),
            pure_rl_updates: std::mem::take(&mut a.pure_rl),
            skipped_updates: std::mem::take(&mut a.skipped),
        };
        log::info!(
            "step {} success {:.2} dg {} relabel {}",
            row.step,
            row.success,
            row.dg_size,
            row.relabel_steps
        );
        st.metrics.push(row);
        Ok(())
    }
}

fn lower_input(cfg: &RunConfig, c: &EnvContract) -> DiscInput {
    DiscInput {
        level: Level::Lower,
        conditioned: cfg.regularizer.conditioned,
        state_dim: c.state_dim,
        obs_dim: c.state_dim + c.goal_dim,
        action_dim: c.action_dim,
    }
}

fn higher_input(cfg: &RunConfig, c: &EnvContract) -> DiscInput {
    DiscInput {
        level: Level::Higher,
        conditioned: cfg.regularizer.conditioned,
        state_dim: c.state_dim,
        obs_dim: c.state_dim + c.goal_dim,
        action_dim: c.goal_dim,
    }
}

struct RegActorStats {
    loss: f64,
    rl_loss: f64,
    reg_loss: Option<f64>,
    applied: bool,
}

/// Policy-side actions for a batch of observations.
fn policy_actions(agent: &SacAgent, obs: &Matrix, noise: &Matrix) -> Result<Matrix> {
    Ok(gaussian_policy_sample(&agent.policy_head(obs)?, noise)?.action)
}

/// Actor step with the configured imitation term. With an IRL regularizer
/// the discriminator takes its own step first, on forward passes disjoint
/// from the actor's.
#[allow(clippy::too_many_arguments)]
fn regularized_actor_update(
    agent: &mut SacAgent,
    batch: &Batch,
    rng: &mut ChaCha8Rng,
    reg_rng: &mut ChaCha8Rng,
    cfg: &RunConfig,
    disc: Option<&mut Discriminator>,
    pool: &ExpertPool,
    input: DiscInput,
    disc_loss: &mut Mean,
) -> Result<RegActorStats> {
    let reg = &cfg.regularizer;
    if !reg.active() || pool.is_empty() {
        let a = agent.actor_update(batch, rng, None)?;
        return Ok(RegActorStats {
            loss: a.loss,
            rl_loss: a.rl_loss,
            reg_loss: None,
            applied: a.applied,
        });
    }
    let n = batch.len();
    let (obs, targets) = pool.sample(reg_rng, n)?;
    let ad = agent.action_dim;
    let (stats, disc_ids) = match (reg.kind, disc) {
        (RegularizerKind::Irl, Some(disc)) => {
            let noise = standard_normal(reg_rng, n, ad);
            let fake = policy_actions(agent, &obs, &noise)?;
            let ds = disc.update(&input.build(&obs, &targets)?, &input.build(&obs, &fake)?)?;
            if ds.applied {
                disc_loss.add(ds.loss);
            }
            let d: &Discriminator = disc;
            let mut objective = |o: &Matrix, a: &Matrix| {
                let (l, g, _) = irl_policy_loss(d, &input.build(o, a)?)?;
                Ok((l, input.action_grad(&g)))
            };
            let mut r = ActorRegularizer {
                obs: obs.clone(),
                noise: standard_normal(reg_rng, n, ad),
                weight: reg.psi,
                objective: &mut objective,
            };
            (agent.actor_update(batch, rng, Some(&mut r))?, ds.pass_ids)
        }
        (RegularizerKind::Bc, _) => {
            let mut objective = |_: &Matrix, a: &Matrix| bc_policy_loss(a, &targets);
            let mut r = ActorRegularizer {
                obs: obs.clone(),
                noise: Matrix::zeros(n, ad),
                weight: reg.psi,
                objective: &mut objective,
            };
            (agent.actor_update(batch, rng, Some(&mut r))?, Vec::new())
        }
        _ => return Err(Error::InvalidState("IRL regularizer without a discriminator".into())),
    };
    ensure_disjoint_passes(&disc_ids, &stats.pass_ids)?;
    Ok(RegActorStats {
        loss: stats.loss,
        rl_loss: stats.rl_loss,
        reg_loss: Some(stats.reg_loss),
        applied: stats.applied,
    })
}

/// Trains from scratch, writing artifacts to `out` when given.
pub fn train(cfg: RunConfig, demos: Option<DemoDataset>, out: Option<&Path>) -> Result<(Checkpoint, Vec<MetricsRow>)> {
    let mut t = Trainer::new(cfg, demos)?;
    if let Some(dir) = out {
        t = t.with_output(dir)?;
    }
    t.train()?;
    Ok((t.checkpoint(), t.metrics().to_vec()))
}
