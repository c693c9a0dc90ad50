use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::PolicyCheckpoint;
use crate::envs::{run_episode, write_trajectories_csv, Controller, SafeEnv, Trajectory};
use crate::error::{invalid_arg, Error, Result};
use crate::rng_from_seed;
use crate::solver::cvar_empirical;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Environment steps per seed; the last trajectory is cut to hit it exactly.
    pub n_samples: usize,
    pub max_len: usize,
    /// Sample actions instead of applying the mean.
    pub stochastic: bool,
    /// Discount of the per-trajectory safety loss.
    pub gamma: f64,
    pub alpha: f64,
    pub xi: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { n_samples: 10_000, max_len: 30, stochastic: false, gamma: 0.99, alpha: 0.9, xi: 0.025 }
    }
}

/// Evaluation numbers for one seed or for all seeds pooled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub label: String,
    pub samples: usize,
    pub trajectories: usize,
    pub tv: usize,
    pub tc: f64,
    pub loss_q25: f64,
    pub loss_q50: f64,
    pub loss_q75: f64,
    pub mean_loss: f64,
    pub cvar: f64,
    pub mean_cost_return: f64,
    pub alpha: f64,
    pub xi: f64,
}

impl EvalRow {
    pub const FIELDS: [&'static str; 13] = [
        "label", "samples", "trajectories", "tv", "tc", "loss_q25", "loss_q50", "loss_q75", "mean_loss",
        "cvar", "mean_cost_return", "alpha", "xi",
    ];

    /// Mean trajectory safety loss within the limit.
    pub fn expectation_satisfied(&self) -> bool {
        self.mean_loss <= self.xi
    }

    /// Empirical CVaR of trajectory safety losses within the limit.
    pub fn cvar_satisfied(&self) -> bool {
        self.cvar <= self.xi
    }

    fn from_trajectories(label: String, trajs: &[Trajectory], cfg: &EvalConfig) -> Result<Self> {
        if trajs.is_empty() {
            return invalid_arg("no trajectories to evaluate");
        }
        let losses: Vec<f64> = trajs.iter().map(|t| t.safety_loss(cfg.gamma)).collect();
        let (q25, q50, q75) = quartiles(&losses);
        let n = trajs.len() as f64;
        Ok(Self {
            label,
            samples: trajs.iter().map(Trajectory::len).sum(),
            trajectories: trajs.len(),
            tv: trajs.iter().map(Trajectory::violations).sum(),
            tc: trajs.iter().map(Trajectory::total_safety_cost).sum(),
            loss_q25: q25,
            loss_q50: q50,
            loss_q75: q75,
            mean_loss: losses.iter().sum::<f64>() / n,
            cvar: cvar_empirical(&losses, cfg.alpha)?.cvar,
            mean_cost_return: trajs.iter().map(|t| t.cost_return(cfg.gamma)).sum::<f64>() / n,
            alpha: cfg.alpha,
            xi: cfg.xi,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub env: String,
    pub config: EvalConfig,
    pub per_seed: Vec<EvalRow>,
    pub aggregate: EvalRow,
}

impl EvalReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string_pretty(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, s)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_slice(&std::fs::read(path)?).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
    }

    /// Per-seed rows followed by the aggregate.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in self.per_seed.iter().chain(std::iter::once(&self.aggregate)) {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Quartiles with linear interpolation between order statistics.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (v.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    };
    (q(0.25), q(0.5), q(0.75))
}

/// Rolls `controller` out until exactly `n_samples` steps were taken.
pub fn rollout_samples<E, C>(env: &E, controller: &C, cfg: &EvalConfig, seed: u64) -> Vec<Trajectory>
where
    E: SafeEnv + ?Sized,
    C: Controller + ?Sized,
{
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    let mut steps = 0;
    while steps < cfg.n_samples {
        let t = run_episode(env, controller, cfg.max_len.min(cfg.n_samples - steps), &mut rng);
        steps += t.len();
        out.push(t);
    }
    out
}

/// Evaluates a controller over several seeds. With `log_dir`, every seed's
/// raw trajectories are written as `eval_seed{seed}.csv` so every number in
/// the report can be recomputed.
pub fn evaluate<E, C>(env: &E, controller: &C, cfg: &EvalConfig, seeds: &[u64], log_dir: Option<&Path>) -> Result<EvalReport>
where
    E: SafeEnv + ?Sized,
    C: Controller + ?Sized,
{
    if seeds.is_empty() || cfg.n_samples == 0 || cfg.max_len == 0 {
        return invalid_arg("evaluation needs seeds, samples and a positive trajectory length");
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    let mut pooled = Vec::new();
    for &seed in seeds {
        let trajs = rollout_samples(env, controller, cfg, seed);
        if let Some(dir) = log_dir {
            write_trajectories_csv(&dir.join(format!("eval_seed{seed}.csv")), &trajs)?;
        }
        per_seed.push(EvalRow::from_trajectories(format!("seed{seed}"), &trajs, cfg)?);
        pooled.extend(trajs);
    }
    let aggregate = EvalRow::from_trajectories("aggregate".into(), &pooled, cfg)?;
    Ok(EvalReport { env: env.name().to_string(), config: cfg.clone(), per_seed, aggregate })
}

/// Loads a policy checkpoint and evaluates it on the checkpoint's
/// environment. `expected_env`, when given, must name that environment.
pub fn evaluate_checkpoint(
    checkpoint: &Path,
    expected_env: Option<&str>,
    cfg: &EvalConfig,
    seeds: &[u64],
    log_dir: Option<&Path>,
) -> Result<EvalReport> {
    let ck = PolicyCheckpoint::load(checkpoint)?;
    if let Some(name) = expected_env {
        if name != ck.env.name() {
            return invalid_arg(format!("checkpoint was trained on {}, not {name}", ck.env.name()));
        }
    }
    let policy = &ck.bundle.policy;
    if policy.action_dim() != ck.env.action_dim() || policy.encoding() != &ck.env.encoding() {
        return invalid_arg("policy does not match the checkpoint environment");
    }
    if cfg.stochastic {
        evaluate(&ck.env, policy, cfg, seeds, log_dir)
    } else {
        evaluate(&ck.env, &policy.deterministic(), cfg, seeds, log_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn quartiles_are_ordered(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let (a, b, c) = quartiles(&v);
            prop_assert!(a <= b && b <= c);
        }
    }

    #[test]
    fn quartiles_by_hand() {
        assert_eq!(quartiles(&[4.0, 1.0, 3.0, 2.0, 5.0]), (2.0, 3.0, 4.0));
        assert_eq!(quartiles(&[1.0, 2.0, 3.0, 4.0]), (1.75, 2.5, 3.25));
        assert_eq!(quartiles(&[7.0]), (7.0, 7.0, 7.0));
    }
}
