//! Run configuration and its flat `key = value` text format.
//!
//! Lines are `key = value`; `#` starts a comment; unknown keys are errors.
//! `variant` is applied first and only sets defaults, so any explicit key
//! overrides it regardless of order. See the README for the full key list.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::{BlockPushConfig, EnvConfig, MazeConfig, MazeObservation, RopeConfig};
use crate::error::{Error, Result};
use crate::hierarchy::{HierarchyConfig, ShapingVariant};
use crate::regularize::{default_psi, RegularizerConfig, RegularizerKind};
use crate::relabel::ParserKind;
use crate::rl::SacConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Flat,
    Hier,
    HierNeg,
    CrispIrl,
    CrispBc,
    CrispRpl,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Flat,
        Variant::Hier,
        Variant::HierNeg,
        Variant::CrispIrl,
        Variant::CrispBc,
        Variant::CrispRpl,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Flat => "flat",
            Variant::Hier => "hier",
            Variant::HierNeg => "hier-neg",
            Variant::CrispIrl => "crisp-irl",
            Variant::CrispBc => "crisp-bc",
            Variant::CrispRpl => "crisp-rpl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub env: EnvConfig,
    pub hierarchy: HierarchyConfig,
    pub lower: SacConfig,
    pub higher: SacConfig,
    pub regularizer: RegularizerConfig,
    pub parser: ParserKind,
    pub shaping: ShapingVariant,
    /// Env steps between `D_g` repopulations.
    pub population_period: u64,
    pub total_steps: u64,
    /// Env steps of uniformly random actions before learning starts.
    pub warmup: u64,
    pub updates_per_step: usize,
    pub demos: Option<PathBuf>,
    /// Use only the first `n` demonstrations.
    pub demo_count: Option<usize>,
    pub seed: u64,
    pub eval_every: u64,
    pub eval_rollouts: usize,
    pub max_consecutive_skips: u64,
}

impl RunConfig {
    /// Defaults for an environment and variant; thresholds are 0.1 × the
    /// workspace diameter at both levels.
    pub fn new(env: EnvConfig, variant: Variant) -> Self {
        let delta = 0.1 * env.workspace_diameter();
        let horizon = env.horizon();
        let name = env.name();
        let mut cfg = Self {
            variant,
            hierarchy: HierarchyConfig {
                c: 10.min(horizon),
                delta_low: delta,
                delta_high: delta,
                horizon,
            },
            lower: SacConfig::default(),
            higher: SacConfig::default(),
            regularizer: RegularizerConfig {
                psi: default_psi(name),
                ..RegularizerConfig::default()
            },
            parser: ParserKind::Pip,
            shaping: ShapingVariant::Hier,
            population_period: if name == "blockpush" { 2500 } else { 5000 },
            total_steps: 150_000,
            warmup: 1000,
            updates_per_step: 1,
            demos: None,
            demo_count: None,
            seed: 0,
            eval_every: 2000,
            eval_rollouts: 20,
            max_consecutive_skips: 100,
            env,
        };
        cfg.apply_variant(variant);
        cfg
    }

    fn apply_variant(&mut self, variant: Variant) {
        self.variant = variant;
        self.shaping = ShapingVariant::Hier;
        match variant {
            Variant::Flat | Variant::Hier | Variant::HierNeg => {
                self.parser = ParserKind::None;
                self.regularizer.kind = RegularizerKind::None;
                if variant == Variant::HierNeg {
                    self.shaping = ShapingVariant::HierNeg;
                }
            }
            Variant::CrispIrl => {
                self.parser = ParserKind::Pip;
                self.regularizer.kind = RegularizerKind::Irl;
            }
            Variant::CrispBc => {
                self.parser = ParserKind::Pip;
                self.regularizer.kind = RegularizerKind::Bc;
            }
            Variant::CrispRpl => {
                self.parser = ParserKind::FixedWindow(self.hierarchy.c);
                self.regularizer.kind = RegularizerKind::Irl;
            }
        }
    }

    pub fn is_flat(&self) -> bool {
        self.variant == Variant::Flat
    }

    /// A hierarchy whose single block spans the whole episode has no
    /// meaningful higher level; the primitive is handed the episode goal.
    pub fn is_collapsed(&self) -> bool {
        !self.is_flat() && self.hierarchy.c == self.hierarchy.horizon
    }

    pub fn needs_demos(&self) -> bool {
        self.parser != ParserKind::None
    }

    pub fn validate(&self) -> Result<()> {
        self.hierarchy.validate()?;
        self.lower.validate()?;
        self.higher.validate()?;
        self.regularizer.validate()?;
        if self.hierarchy.horizon != self.env.horizon() {
            return Err(Error::Config("hierarchy horizon differs from the environment's".into()));
        }
        if self.is_flat() && (self.needs_demos() || self.regularizer.active()) {
            return Err(Error::Config("the flat baseline takes no parser or regularizer".into()));
        }
        if self.needs_demos() && self.population_period == 0 {
            return Err(Error::Config("population_period must be positive when parsing".into()));
        }
        if self.eval_every == 0 || self.eval_rollouts == 0 {
            return Err(Error::Config("eval_every and eval_rollouts must be positive".into()));
        }
        if let ParserKind::FixedWindow(0) = self.parser {
            return Err(Error::Config("window size must be positive".into()));
        }
        if let Some(p) = &self.demos {
            if !p.exists() {
                return Err(Error::Config(format!("demo file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })?;
        // Relative demo paths are resolved against the config file.
        if let (Some(d), Some(dir)) = (&cfg.demos, path.parent()) {
            if d.is_relative() {
                cfg.demos = Some(dir.join(d));
            }
        }
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let pairs = parse_pairs(text)?;
        let map: BTreeMap<&str, (usize, &str)> = pairs.iter().map(|(l, k, v)| (k.as_str(), (*l, v.as_str()))).collect();
        let get = |k: &str| map.get(k).map(|(_, v)| *v);
        let env_name = get("env").unwrap_or("maze");
        let mut env = EnvConfig::by_name(env_name).ok_or_else(|| Error::Config(format!("unknown env {env_name:?}")))?;
        // Environment keys first, since the defaults below depend on them.
        for (line, key, value) in &pairs {
            let bad = |m: String| Error::Parse {
                path: PathBuf::new(),
                line: *line,
                message: m,
            };
            match (&mut env, key.as_str()) {
                (EnvConfig::Maze(m), "maze.width") => m.width = num(value).map_err(bad)?,
                (EnvConfig::Maze(m), "maze.height") => m.height = num(value).map_err(bad)?,
                (EnvConfig::Maze(m), "maze.cell_size") => m.cell_size = num(value).map_err(bad)?,
                (EnvConfig::Maze(m), "maze.step_scale") => m.step_scale = num(value).map_err(bad)?,
                (EnvConfig::Maze(m), "maze.open") => m.open = num(value).map_err(bad)?,
                (EnvConfig::Maze(m), "maze.layout_seed") => {
                    m.maze_seed = if value == "random" { None } else { Some(num(value).map_err(bad)?) }
                }
                (EnvConfig::Maze(m), "maze.observation") => {
                    m.observation = match value.as_str() {
                        "full" => MazeObservation::Full,
                        "position" => MazeObservation::Position,
                        v => return Err(bad(format!("unknown maze observation {v:?}"))),
                    }
                }
                (EnvConfig::BlockPush(b), "blockpush.step_scale") => b.step_scale = num(value).map_err(bad)?,
                (_, "horizon") => env.set_horizon(num(value).map_err(bad)?),
                (_, k) if k.starts_with("maze.") || k.starts_with("blockpush.") => {
                    return Err(bad(format!("key {k} does not apply to env {env_name}")))
                }
                _ => {}
            }
        }
        let variant = match get("variant") {
            Some(v) => Variant::parse(v)?,
            None => Variant::CrispIrl,
        };
        let mut cfg = RunConfig::new(env, variant);
        let mut window = None;
        let mut parser = None;
        for (line, key, value) in &pairs {
            let bad = |m: String| Error::Parse {
                path: PathBuf::new(),
                line: *line,
                message: m,
            };
            let v = value.as_str();
            match key.as_str() {
                "env" | "variant" | "horizon" => {}
                k if k.starts_with("maze.") || k.starts_with("blockpush.") => {}
                "c" => cfg.hierarchy.c = num(v).map_err(bad)?,
                "delta_low" => cfg.hierarchy.delta_low = num(v).map_err(bad)?,
                "delta_high" => cfg.hierarchy.delta_high = num(v).map_err(bad)?,
                "threshold" => cfg.env.set_threshold(num(v).map_err(bad)?),
                "regularizer" => cfg.regularizer.kind = RegularizerKind::parse(v)?,
                "psi" => cfg.regularizer.psi = num(v).map_err(bad)?,
                "disc_hidden" => cfg.regularizer.disc_hidden = list(v).map_err(bad)?,
                "disc_lr" => cfg.regularizer.disc_lr = num(v).map_err(bad)?,
                "conditioned" => cfg.regularizer.conditioned = num(v).map_err(bad)?,
                "lower_all_pairs" => cfg.regularizer.lower_all_pairs = num(v).map_err(bad)?,
                "parser" => parser = Some(v.to_string()),
                "window" => window = Some(num::<usize>(v).map_err(bad)?),
                "shaping" => {
                    cfg.shaping = match v {
                        "hier" => ShapingVariant::Hier,
                        "hier-neg" => ShapingVariant::HierNeg,
                        _ => return Err(bad(format!("unknown shaping {v:?}"))),
                    }
                }
                "population_period" => cfg.population_period = num(v).map_err(bad)?,
                "total_steps" => cfg.total_steps = num(v).map_err(bad)?,
                "warmup" => cfg.warmup = num(v).map_err(bad)?,
                "updates_per_step" => cfg.updates_per_step = num(v).map_err(bad)?,
                "demos" => cfg.demos = Some(PathBuf::from(v)),
                "demo_count" => cfg.demo_count = Some(num(v).map_err(bad)?),
                "seed" => cfg.seed = num(v).map_err(bad)?,
                "eval_every" => cfg.eval_every = num(v).map_err(bad)?,
                "eval_rollouts" => cfg.eval_rollouts = num(v).map_err(bad)?,
                "max_consecutive_skips" => cfg.max_consecutive_skips = num(v).map_err(bad)?,
                k => {
                    let (sac, field) = match k.split_once('.') {
                        Some(("lower", f)) => (&mut cfg.lower, f),
                        Some(("higher", f)) => (&mut cfg.higher, f),
                        Some(("sac", f)) => {
                            set_sac(&mut cfg.lower, f, v).map_err(bad)?;
                            (&mut cfg.higher, f)
                        }
                        _ => return Err(bad(format!("unknown key {k:?}"))),
                    };
                    set_sac(sac, field, v).map_err(bad)?;
                }
            }
        }
        cfg.hierarchy.horizon = cfg.env.horizon();
        if get("delta_low").is_none() && get("threshold").is_some() {
            cfg.hierarchy.delta_low = cfg.env.build()?.goal_threshold();
        }
        if get("delta_high").is_none() && get("threshold").is_some() {
            cfg.hierarchy.delta_high = cfg.env.build()?.goal_threshold();
        }
        match parser.as_deref() {
            None => {
                if let (ParserKind::FixedWindow(_), Some(k)) = (cfg.parser, window) {
                    cfg.parser = ParserKind::FixedWindow(k);
                }
            }
            Some("pip") => cfg.parser = ParserKind::Pip,
            Some("none") => cfg.parser = ParserKind::None,
            Some("window") => cfg.parser = ParserKind::FixedWindow(window.unwrap_or(cfg.hierarchy.c)),
            Some(p) => return Err(Error::Config(format!("unknown parser {p:?}"))),
        }
        if get("c").is_some() && get("window").is_none() {
            if let ParserKind::FixedWindow(_) = cfg.parser {
                cfg.parser = ParserKind::FixedWindow(cfg.hierarchy.c);
            }
        }
        Ok(cfg)
    }

    /// Writes the config back in the text format; `parse` of the output
    /// reproduces `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("env", self.env.name().into());
        kv("variant", self.variant.name().into());
        match &self.env {
            EnvConfig::Maze(m) => {
                kv("maze.width", m.width.to_string());
                kv("maze.height", m.height.to_string());
                kv("maze.cell_size", m.cell_size.to_string());
                kv("maze.step_scale", m.step_scale.to_string());
                kv("maze.open", m.open.to_string());
                kv("maze.layout_seed", m.maze_seed.map_or("random".into(), |s| s.to_string()));
                let obs = match m.observation {
                    MazeObservation::Full => "full",
                    MazeObservation::Position => "position",
                };
                kv("maze.observation", obs.into());
            }
            EnvConfig::BlockPush(BlockPushConfig { step_scale, .. }) => kv("blockpush.step_scale", step_scale.to_string()),
            EnvConfig::Rope(RopeConfig { .. }) => {}
        }
        kv("horizon", self.env.horizon().to_string());
        if let Some(t) = env_threshold(&self.env) {
            kv("threshold", t.to_string());
        }
        kv("c", self.hierarchy.c.to_string());
        kv("delta_low", self.hierarchy.delta_low.to_string());
        kv("delta_high", self.hierarchy.delta_high.to_string());
        for (name, sac) in [("lower", &self.lower), ("higher", &self.higher)] {
            kv(&format!("{name}.hidden"), join(&sac.hidden));
            kv(&format!("{name}.alpha"), sac.alpha.to_string());
            kv(&format!("{name}.gamma"), sac.gamma.to_string());
            kv(&format!("{name}.tau"), sac.tau.to_string());
            kv(&format!("{name}.batch_size"), sac.batch_size.to_string());
            kv(&format!("{name}.capacity"), sac.capacity.to_string());
            kv(&format!("{name}.actor_lr"), sac.actor_lr.to_string());
            kv(&format!("{name}.critic_lr"), sac.critic_lr.to_string());
        }
        kv("regularizer", self.regularizer.kind.name().into());
        kv("psi", self.regularizer.psi.to_string());
        kv("disc_hidden", join(&self.regularizer.disc_hidden));
        kv("disc_lr", self.regularizer.disc_lr.to_string());
        kv("conditioned", self.regularizer.conditioned.to_string());
        kv("lower_all_pairs", self.regularizer.lower_all_pairs.to_string());
        match self.parser {
            ParserKind::Pip => kv("parser", "pip".into()),
            ParserKind::None => kv("parser", "none".into()),
            ParserKind::FixedWindow(k) => {
                kv("parser", "window".into());
                kv("window", k.to_string());
            }
        }
        let shaping = match self.shaping {
            ShapingVariant::Hier => "hier",
            ShapingVariant::HierNeg => "hier-neg",
        };
        kv("shaping", shaping.into());
        kv("population_period", self.population_period.to_string());
        kv("total_steps", self.total_steps.to_string());
        kv("warmup", self.warmup.to_string());
        kv("updates_per_step", self.updates_per_step.to_string());
        if let Some(d) = &self.demos {
            kv("demos", d.display().to_string());
        }
        if let Some(n) = self.demo_count {
            kv("demo_count", n.to_string());
        }
        kv("seed", self.seed.to_string());
        kv("eval_every", self.eval_every.to_string());
        kv("eval_rollouts", self.eval_rollouts.to_string());
        kv("max_consecutive_skips", self.max_consecutive_skips.to_string());
        s
    }
}

fn env_threshold(env: &EnvConfig) -> Option<f64> {
    match env {
        EnvConfig::Maze(MazeConfig { threshold, .. })
        | EnvConfig::BlockPush(BlockPushConfig { threshold, .. })
        | EnvConfig::Rope(RopeConfig { threshold, .. }) => *threshold,
    }
}

fn set_sac(sac: &mut SacConfig, field: &str, v: &str) -> std::result::Result<(), String> {
    match field {
        "hidden" => sac.hidden = list(v)?,
        "alpha" => sac.alpha = num(v)?,
        "gamma" => sac.gamma = num(v)?,
        "tau" => sac.tau = num(v)?,
        "batch_size" => sac.batch_size = num(v)?,
        "capacity" => sac.capacity = num(v)?,
        "actor_lr" => sac.actor_lr = num(v)?,
        "critic_lr" => sac.critic_lr = num(v)?,
        f => return Err(format!("unknown agent key {f:?}")),
    }
    Ok(())
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn num<T: std::str::FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse {v:?}"))
}

fn list(v: &str) -> std::result::Result<Vec<usize>, String> {
    if v.trim().is_empty() {
        return Ok(Vec::new());
    }
    v.split(',').map(|x| num(x.trim())).collect()
}

/// `(line, key, value)` triples of a flat key-value file. Duplicate keys are
/// rejected.
pub fn parse_pairs(text: &str) -> Result<Vec<(usize, String, String)>> {
    let mut out: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: &str| Error::Parse {
            path: PathBuf::new(),
            line: i + 1,
            message: m.to_string(),
        };
        let (k, v) = line.split_once('=').ok_or_else(|| err("expected key = value"))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(err("empty key"));
        }
        if out.iter().any(|(_, key, _)| key == k) {
            return Err(err(&format!("duplicate key {k}")));
        }
        out.push((i + 1, k.to_string(), v.to_string()));
    }
    Ok(out)
}
