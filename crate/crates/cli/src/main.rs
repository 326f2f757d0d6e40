use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use crisp::demos::{generate_demos, load_dataset, save_dataset, GenerateOptions};
use crisp::envs::EnvConfig;
use crisp::harness::{
    evaluate_config, plot_archive, sweep, Checkpoint, Deterministic, EvalSuite, Grid, RunConfig, RunStatus, Trainer,
};
use crisp::relabel::{repopulate, save_subgoals, ParserKind, SubgoalDataset};

#[derive(Parser)]
#[command(name = "crisp", version, about = "Hierarchical RL with primitive-informed subgoal curricula")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ParserArg {
    Pip,
    Window,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run from a config file.
    Train {
        #[arg(long, required_unless_present = "resume")]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Run directory for metrics, checkpoints and subgoal snapshots.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Continue from this checkpoint instead of starting fresh.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Generate expert demonstrations.
    GenDemos {
        /// Default-configured env by name.
        #[arg(long, required_unless_present = "config")]
        env: Option<String>,
        /// Take the env and `c` from a run config instead.
        #[arg(long, conflicts_with = "env")]
        config: Option<PathBuf>,
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Lower-level horizon used to size the expert's steps.
        #[arg(long, default_value_t = 10)]
        c: usize,
    },
    /// Parse demonstrations into subgoal transitions with a checkpoint's primitive.
    Relabel {
        #[arg(long)]
        demos: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "pip")]
        parser: ParserArg,
        /// Window length for the fixed-window parser.
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Success rate of a checkpoint's deterministic policies.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// JSON suite of episode seeds; defaults to the held-out suite.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        rollouts: usize,
    },
    /// Run a grid of configs, one run per point and seed.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value = "archive")]
        out: PathBuf,
    },
    /// Success and curriculum figures for a sweep archive.
    Plot {
        #[arg(long)]
        archive: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            out,
            resume,
        } => {
            let mut trainer = match resume {
                Some(path) => {
                    let ckpt = Checkpoint::load(&path).with_context(|| format!("loading {}", path.display()))?;
                    Trainer::resume(ckpt, None)?
                }
                None => {
                    let path = config.expect("clap requires --config or --resume");
                    let mut cfg = RunConfig::from_file(&path)?;
                    if let Some(s) = seed {
                        cfg.seed = s;
                    }
                    Trainer::new(cfg, None)?
                }
            };
            if let Some(dir) = &out {
                trainer = trainer.with_output(dir)?;
            }
            trainer.train()?;
            let c = trainer.counters();
            let last = trainer.metrics().last().map_or(f64::NAN, |r| r.success);
            println!(
                "env_steps {} relabel_steps {} episodes {} final_success {last:.3}",
                c.env_steps, c.relabel_steps, c.episodes
            );
        }
        Command::GenDemos {
            env,
            config,
            count,
            seed,
            out,
            c,
        } => {
            let (cfg, c) = match (env, config) {
                (_, Some(path)) => {
                    let run = RunConfig::from_file(&path)?;
                    (run.env, run.hierarchy.c)
                }
                (Some(name), None) => match EnvConfig::by_name(&name) {
                    Some(cfg) => (cfg, c),
                    None => bail!("unknown env {name:?}; expected maze, blockpush or rope"),
                },
                (None, None) => unreachable!("clap requires --env or --config"),
            };
            let ds = generate_demos(&cfg, &GenerateOptions::new(count, seed, c))?;
            save_dataset(&ds, &out)?;
            println!("wrote {} demonstrations to {}", ds.trajectories.len(), out.display());
        }
        Command::Relabel {
            demos,
            checkpoint,
            parser,
            k,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let demos = load_dataset(&demos)?;
            let parser = match parser {
                ParserArg::Pip => ParserKind::Pip,
                ParserArg::Window => ParserKind::FixedWindow(k),
            };
            let h = ckpt.cfg.hierarchy;
            let mut env = ckpt.cfg.env.build()?;
            let mut dg = SubgoalDataset::default();
            let mut lower = Deterministic(&ckpt.policies.lower);
            let tag = checkpoint.display().to_string();
            let report = repopulate(&mut dg, &demos, &mut lower, env.as_mut(), parser, h.c, h.delta_low, 0, &tag)?;
            save_subgoals(&dg, &out)?;
            println!(
                "{} transitions ({:.2} per demo), {} relabel steps, {} demos skipped",
                dg.len(),
                dg.subgoals_per_demo(demos.trajectories.len()),
                report.env_steps,
                report.skipped
            );
        }
        Command::Eval {
            checkpoint,
            suite,
            rollouts,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let suite = match suite {
                Some(p) => EvalSuite::load(&p)?,
                None => EvalSuite::held_out(rollouts),
            };
            let mut policies = ckpt.policies.clone();
            let rate = evaluate_config(&mut policies, &ckpt.cfg.env, &suite, rollouts)?;
            println!("success {rate:.4} over {rollouts} rollouts");
        }
        Command::Sweep { config, grid, out } => {
            let base = RunConfig::from_file(&config)?;
            let grid = Grid::from_file(&grid)?;
            let archive = sweep(&base, &grid, &out, None)?;
            let failed = archive.entries.iter().filter(|e| e.status != RunStatus::Completed).count();
            println!("{} runs archived in {} ({failed} failed)", archive.entries.len(), out.display());
        }
        Command::Plot { archive, out } => {
            for path in plot_archive(&archive, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}
