//! Subgoal supervision from expert state trajectories.
//!
//! [`pip_parse`] walks a demonstration with the *current* lower primitive and
//! emits, for every stretch it cannot cover within `c` steps, the farthest
//! demo state it could still reach. [`fixed_window_parse`] is the
//! primitive-agnostic baseline that cuts every `k` states.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::demos::{DemoDataset, Trajectory};
use crate::error::{Error, Result};
use crate::hierarchy::Primitive;
use crate::mdp::{goal_distance, Env, GoalVec, StateVec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgoalTransition {
    pub initial_state: StateVec,
    pub subgoal: GoalVec,
    pub final_goal: GoalVec,
    /// The parsing rollout reached `subgoal` from `initial_state` within `c`
    /// steps. False for forced advances and for fixed-window output.
    pub verified: bool,
    pub demo: usize,
    pub start_index: usize,
    pub subgoal_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParserKind {
    Pip,
    FixedWindow(usize),
    None,
}

impl ParserKind {
    pub fn name(&self) -> String {
        match self {
            ParserKind::Pip => "pip".into(),
            ParserKind::FixedWindow(k) => format!("window-{k}"),
            ParserKind::None => "none".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Metered env step at which the dataset was populated.
    pub epoch: u64,
    pub checkpoint: String,
    pub parser: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SubgoalDataset {
    pub transitions: Vec<SubgoalTransition>,
    pub provenance: Option<Provenance>,
    /// Number of demos that contributed at least one transition.
    pub demos_parsed: usize,
}

impl SubgoalDataset {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Mean number of subgoals per parsed demo (demos skipped by `reset_to`
    /// failures are excluded).
    pub fn subgoals_per_demo(&self, demos: usize) -> f64 {
        if demos == 0 {
            0.0
        } else {
            self.transitions.len() as f64 / demos as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutput {
    pub transitions: Vec<SubgoalTransition>,
    /// Environment interactions spent on parsing rollouts.
    pub env_steps: u64,
}

/// Runs the primitive from `start` toward `target` for at most `c` steps.
/// Returns whether it got within `delta` and the steps taken.
pub fn reach_check(
    env: &mut dyn Env,
    lower: &mut dyn Primitive,
    start: &StateVec,
    target: &GoalVec,
    c: usize,
    delta: f64,
) -> Result<(bool, u64)> {
    let mut state = env.reset_to(start)?;
    let mut steps = 0;
    for _ in 0..c {
        if goal_distance(&env.achieved_goal(&state), target)? <= delta {
            return Ok((true, steps));
        }
        let a = lower.act(&state, target)?;
        state = env.step(&a).next_state;
        steps += 1;
    }
    Ok((goal_distance(&env.achieved_goal(&state), target)? <= delta, steps))
}

/// Primitive-informed parsing of one demonstration.
///
/// For `i = 1..T_e-1` the env is reset to the current initial state and the
/// lower primitive tries to reach demo state `i`. On failure the previous demo
/// state becomes a subgoal and the next initial state. When even the
/// immediately following state is unreachable the walk is forced forward to
/// state `i`, and that transition is tagged unverified.
///
/// A trailing transition to the final demo state closes the walk whenever at
/// least one subgoal was emitted and the walk stopped short of the end.
pub fn pip_parse(
    demo: &Trajectory,
    demo_index: usize,
    lower: &mut dyn Primitive,
    env: &mut dyn Env,
    c: usize,
    delta_low: f64,
) -> Result<ParseOutput> {
    if demo.states.len() < 2 {
        return Err(Error::InvalidState("demonstration shorter than two states".into()));
    }
    let n = demo.states.len();
    let mut out = Vec::new();
    let mut env_steps = 0;
    let mut s_in = 0;
    let mut last_reached_from_current = false;
    let emit = |out: &mut Vec<SubgoalTransition>, from: usize, to: usize, verified: bool, env: &dyn Env| {
        out.push(SubgoalTransition {
            initial_state: demo.states[from].clone(),
            subgoal: env.achieved_goal(&demo.states[to]),
            final_goal: demo.goal.clone(),
            verified,
            demo: demo_index,
            start_index: from,
            subgoal_index: to,
        });
    };
    for i in 1..n {
        let target = env.achieved_goal(&demo.states[i]);
        let (reached, steps) = reach_check(env, lower, &demo.states[s_in], &target, c, delta_low)?;
        env_steps += steps;
        if reached {
            last_reached_from_current = true;
            continue;
        }
        last_reached_from_current = false;
        if i - 1 == s_in {
            emit(&mut out, s_in, i, false, env);
            s_in = i;
        } else {
            emit(&mut out, s_in, i - 1, true, env);
            s_in = i - 1;
        }
    }
    if !out.is_empty() && s_in != n - 1 {
        emit(&mut out, s_in, n - 1, last_reached_from_current, env);
    }
    Ok(ParseOutput {
        transitions: out,
        env_steps,
    })
}

/// Cuts the demonstration into full windows of `k` states.
pub fn fixed_window_parse(demo: &Trajectory, demo_index: usize, k: usize, env: &dyn Env) -> Result<Vec<SubgoalTransition>> {
    if k == 0 {
        return Err(Error::Config("window size must be at least 1".into()));
    }
    let last = demo.states.len().saturating_sub(1);
    if last == 0 {
        return Err(Error::InvalidState("demonstration shorter than two states".into()));
    }
    let mut out = Vec::new();
    let make = |from: usize, to: usize| SubgoalTransition {
        initial_state: demo.states[from].clone(),
        subgoal: env.achieved_goal(&demo.states[to]),
        final_goal: demo.goal.clone(),
        verified: false,
        demo: demo_index,
        start_index: from,
        subgoal_index: to,
    };
    let mut j = 0;
    while (j + 1) * k <= last {
        out.push(make(j * k, (j + 1) * k));
        j += 1;
    }
    if out.is_empty() {
        out.push(make(0, last));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RepopulateReport {
    pub env_steps: u64,
    pub skipped: usize,
}

/// Clears `dg` and refills it by parsing every demo with the current primitive.
///
/// The new contents are built aside and swapped in at the end. Demos whose
/// states the env rejects are skipped with a warning; if every demo is
/// skipped the dataset is left empty and an error is returned.
#[allow(clippy::too_many_arguments)]
pub fn repopulate(
    dg: &mut SubgoalDataset,
    demos: &DemoDataset,
    lower: &mut dyn Primitive,
    env: &mut dyn Env,
    parser: ParserKind,
    c: usize,
    delta_low: f64,
    epoch: u64,
    checkpoint: &str,
) -> Result<RepopulateReport> {
    if let Some(p) = &dg.provenance {
        if epoch < p.epoch || (epoch == p.epoch && !dg.transitions.is_empty()) {
            return Err(Error::InvalidState(format!(
                "repopulation epoch {epoch} does not advance past {}",
                p.epoch
            )));
        }
    }
    let mut fresh = Vec::new();
    let mut report = RepopulateReport {
        env_steps: 0,
        skipped: 0,
    };
    let mut parsed = 0;
    for (d, demo) in demos.trajectories.iter().enumerate() {
        let result = match parser {
            ParserKind::Pip => pip_parse(demo, d, lower, env, c, delta_low).map(|o| {
                report.env_steps += o.env_steps;
                o.transitions
            }),
            ParserKind::FixedWindow(k) => fixed_window_parse(demo, d, k, env),
            ParserKind::None => Ok(Vec::new()),
        };
        match result {
            Ok(ts) => {
                parsed += usize::from(!ts.is_empty());
                fresh.extend(ts);
            }
            Err(e @ (Error::InvalidState(_) | Error::DimensionMismatch { .. })) => {
                log::warn!("skipping demo {d}: {e}");
                report.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    *dg = SubgoalDataset {
        transitions: fresh,
        provenance: Some(Provenance {
            epoch,
            checkpoint: checkpoint.to_string(),
            parser: parser.name(),
        }),
        demos_parsed: parsed,
    };
    if !demos.trajectories.is_empty() && report.skipped == demos.trajectories.len() {
        return Err(Error::EmptyDataset("every demonstration was rejected".into()));
    }
    Ok(report)
}

#[derive(Debug, Serialize, Deserialize)]
struct DgHeader {
    provenance: Option<Provenance>,
    count: usize,
    demos_parsed: usize,
}

pub fn save_subgoals(dg: &SubgoalDataset, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let ser = |e: serde_json::Error| Error::Serialization(e.to_string());
    let header = DgHeader {
        provenance: dg.provenance.clone(),
        count: dg.transitions.len(),
        demos_parsed: dg.demos_parsed,
    };
    serde_json::to_writer(&mut w, &header).map_err(ser)?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    for t in &dg.transitions {
        serde_json::to_writer(&mut w, t).map_err(ser)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_subgoals(path: &Path) -> Result<SubgoalDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_err(1, "missing header".into()))?
        .map_err(|e| Error::io(path, e))?;
    let header: DgHeader = serde_json::from_str(&first).map_err(|e| parse_err(1, e.to_string()))?;
    let mut transitions = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        transitions.push(serde_json::from_str(&line).map_err(|e| parse_err(i + 2, e.to_string()))?);
    }
    if transitions.len() != header.count {
        return Err(parse_err(
            transitions.len() + 2,
            format!("expected {} transitions, found {}", header.count, transitions.len()),
        ));
    }
    Ok(SubgoalDataset {
        transitions,
        provenance: header.provenance,
        demos_parsed: header.demos_parsed,
    })
}
