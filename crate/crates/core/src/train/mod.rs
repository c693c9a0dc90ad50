//! The outer training loop: real sampling, model refits and policy
//! optimisation on model rollouts.

mod collect;
mod config;
mod runner;

pub use collect::{collect_model, collect_real, RolloutMetric, DIVERGENCE_BOUND};
pub use config::{AgentConfig, MetricKind, MetricsConfig, RunConfig, RunnerConfig, SolverConfig};
pub use runner::{train, train_env, ControlIterationRow, EnvIterationRow, RunLog, TrainOutcome};
