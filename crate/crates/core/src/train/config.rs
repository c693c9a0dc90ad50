use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::envs::Env;
use crate::error::{invalid_arg, Error, Result};
use crate::gp::GpFitConfig;
use crate::policy::OptimizerKind;
use crate::solver::{CvarConfig, PolicyUpdateConfig};

/// Full training configuration; every section falls back to defaults and
/// the effective values are echoed next to the run outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub env: Env,
    pub runner: RunnerConfig,
    pub dynamics_model: GpFitConfig,
    pub metrics: MetricsConfig,
    pub agent: AgentConfig,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env: Env::default(),
            runner: RunnerConfig::default(),
            dynamics_model: GpFitConfig::default(),
            metrics: MetricsConfig::default(),
            agent: AgentConfig::default(),
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunnerConfig {
    /// Outer iterations, each starting with real-environment sampling.
    pub env_iterations: usize,
    /// Policy updates on model rollouts per env-iteration.
    pub control_iterations: usize,
    /// Real trajectories per env-iteration.
    pub real_traces: usize,
    /// Model trajectories per control iteration.
    pub model_traces: usize,
    pub max_len: usize,
    pub gamma: f64,
    pub gae_lambda: f64,
    /// Write checkpoints after every env-iteration.
    pub checkpoint_every_iteration: bool,
}

impl Default for RunnerConfig {
    fn default() -> Self {
        Self {
            env_iterations: 50,
            control_iterations: 10,
            real_traces: 1,
            model_traces: 20,
            max_len: 30,
            gamma: 0.99,
            gae_lambda: 0.97,
            checkpoint_every_iteration: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Loo,
    Bootstrap,
    Entropy,
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loo" => Ok(Self::Loo),
            "bootstrap" => Ok(Self::Bootstrap),
            "entropy" => Ok(Self::Entropy),
            _ => invalid_arg(format!("unknown metric {s:?}; expected loo, bootstrap or entropy")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub kind: MetricKind,
    /// Average LOO over this many random training points; 0 uses all.
    pub loo_subsample: usize,
    pub bootstrap_partitions: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { kind: MetricKind::Loo, loo_subsample: 0, bootstrap_partitions: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub policy: PolicyUpdateConfig,
    pub critic_lr: f64,
    pub critic_epochs: usize,
    pub critic_optimizer: OptimizerKind,
    /// Zero disables clipping of critic gradients.
    pub critic_max_grad_norm: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            policy: PolicyUpdateConfig::default(),
            critic_lr: 1e-3,
            critic_epochs: 80,
            critic_optimizer: OptimizerKind::Adam,
            critic_max_grad_norm: 0.5,
        }
    }
}

/// CVaR constraint settings plus the switches used by the unconstrained
/// ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub alpha: f64,
    pub xi: f64,
    pub penalty_lr: f64,
    pub initial_lambda_cvar: f64,
    /// When false, the CVaR multiplier is pinned at zero.
    pub constrained: bool,
    /// When false, the exploration objective gets zero weight.
    pub explore: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let c = CvarConfig::default();
        Self {
            alpha: c.alpha,
            xi: c.xi,
            penalty_lr: c.penalty_lr,
            initial_lambda_cvar: 0.0,
            constrained: true,
            explore: true,
        }
    }
}

impl SolverConfig {
    pub fn cvar(&self) -> CvarConfig {
        CvarConfig { alpha: self.alpha, xi: self.xi, penalty_lr: self.penalty_lr }
    }
}

impl RunConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Same run with the CVaR constraint and the exploration objective off.
    pub fn ablation(&self) -> Self {
        let mut c = self.clone();
        c.solver.constrained = false;
        c.solver.explore = false;
        c.solver.initial_lambda_cvar = 0.0;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let r = &self.runner;
        if r.env_iterations == 0 || r.real_traces == 0 || r.model_traces == 0 || r.max_len == 0 {
            return Err(Error::Config(
                "env_iterations, real_traces, model_traces and max_len must be at least 1".into(),
            ));
        }
        if !(0.0..1.0).contains(&r.gamma) || !(0.0..=1.0).contains(&r.gae_lambda) {
            return Err(Error::Config(format!("gamma must lie in [0, 1) and gae_lambda in [0, 1], got {} and {}", r.gamma, r.gae_lambda)));
        }
        if self.metrics.kind == MetricKind::Bootstrap && self.metrics.bootstrap_partitions == 0 {
            return Err(Error::Config("bootstrap_partitions must be at least 1".into()));
        }
        if !(self.agent.critic_lr > 0.0) || self.agent.critic_max_grad_norm < 0.0 {
            return Err(Error::Config("critic_lr must be positive and critic_max_grad_norm non-negative".into()));
        }
        if !(self.solver.initial_lambda_cvar >= 0.0) {
            return Err(Error::Config("initial_lambda_cvar must be non-negative".into()));
        }
        self.env.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.solver.cvar().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.agent.policy.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let s = c.to_toml_string().unwrap();
        assert_eq!(RunConfig::from_toml_str(&s).unwrap(), c);
    }

    #[test]
    fn partial_file_uses_defaults() {
        let c = RunConfig::from_toml_str("seed = 4\n[runner]\nenv_iterations = 3\n[env]\nname = \"cartpole_double\"\n").unwrap();
        assert_eq!(c.seed, 4);
        assert_eq!(c.runner.env_iterations, 3);
        assert!(matches!(c.env, Env::CartpoleDouble(_)));
        assert_eq!(c.runner.model_traces, RunnerConfig::default().model_traces);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(RunConfig::from_toml_str("[runner]\nenv_iterations = 0\n").is_err());
        assert!(RunConfig::from_toml_str("[runner]\ngamma = 1.0\n").is_err());
        assert!(RunConfig::from_toml_str("[solver]\nalpha = 1.5\n").is_err());
        assert!(RunConfig::from_toml_str("[solver]\nunknown_key = 1\n").is_err());
    }

    #[test]
    fn ablation_switches() {
        let a = RunConfig::default().ablation();
        assert!(!a.solver.constrained && !a.solver.explore);
    }

    #[test]
    fn metric_names() {
        assert_eq!("loo".parse::<MetricKind>().unwrap(), MetricKind::Loo);
        assert!("variance".parse::<MetricKind>().is_err());
    }
}
