//! Training loop, evaluation, sweeps and plots.

mod config;
mod eval;
mod metrics;
mod plot;
mod sweep;
mod trainer;

pub use config::{parse_pairs, RunConfig, Variant};
pub use eval::{evaluate, evaluate_config, training_seed, EvalPolicy, EvalSuite};
pub use metrics::{read_metrics, write_metrics, Mean, MetricsRow};
pub use plot::{aggregate, curriculum_figure, plot_archive, success_figure, Curve};
pub use sweep::{point_config, point_label, sweep, Archive, ArchiveEntry, Grid, RunStatus};
pub use trainer::{train, Checkpoint, Deterministic, CountingEnv, Counters, LossKind, Policies, Streams, Trainer, CHECKPOINT_VERSION};
