use nalgebra::DMatrix;

use super::config::{MetricKind, MetricsConfig};
use crate::envs::{run_episode, Controller, SafeEnv, Step, Trajectory};
use crate::error::Result;
use crate::gp::{GpModel, TransitionDataset};
use crate::metrics::{entropy_baseline, BootstrapWorkspace, LooWorkspace};
use crate::policy::GaussianPolicy;
use crate::SambaRng;

/// Model states with any component beyond this magnitude end the rollout.
pub const DIVERGENCE_BOUND: f64 = 1e3;

/// Rolls out `b` real trajectories and appends every transition to `data`.
pub fn collect_real<E, C>(
    env: &E,
    controller: &C,
    b: usize,
    max_len: usize,
    data: &mut TransitionDataset,
    rng: &mut SambaRng,
) -> Vec<Trajectory>
where
    E: SafeEnv + ?Sized,
    C: Controller + ?Sized,
{
    let enc = env.encoding();
    (0..b)
        .map(|_| {
            let traj = run_episode(env, controller, max_len, rng);
            for s in &traj.steps {
                data.push(&enc, &s.state, &s.action, &s.next_state);
            }
            traj
        })
        .collect()
}

/// Exploration metric evaluated along model rollouts.
pub enum RolloutMetric<'a> {
    Loo(LooWorkspace<'a>),
    Bootstrap(BootstrapWorkspace),
    Entropy,
    /// Exploration disabled; every step gets zero.
    Off,
}

impl<'a> RolloutMetric<'a> {
    pub fn build(cfg: &MetricsConfig, model: &'a GpModel, rng: &mut SambaRng) -> Result<Self> {
        Ok(match cfg.kind {
            MetricKind::Loo if cfg.loo_subsample > 0 => {
                Self::Loo(LooWorkspace::with_subsample(model, cfg.loo_subsample, rng)?)
            }
            MetricKind::Loo => Self::Loo(LooWorkspace::new(model)?),
            MetricKind::Bootstrap => Self::Bootstrap(BootstrapWorkspace::new(model, cfg.bootstrap_partitions, rng)?),
            MetricKind::Entropy => Self::Entropy,
        })
    }

    /// Predictive moments per query and dimension, and the metric per query.
    fn evaluate(&self, model: &GpModel, q: &DMatrix<f64>) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>)> {
        if let Self::Loo(ws) = self {
            let evals = ws.evaluate_batch(q)?;
            let zeta = evals.iter().map(|e| e.zeta).collect();
            let (mean, var) = evals.into_iter().map(|e| (e.mean, e.var)).unzip();
            return Ok((mean, var, zeta));
        }
        let post = model.predict(q, false)?;
        let m = q.nrows();
        let vars: Vec<_> = post.cov.iter().map(|c| c.variances()).collect();
        let mean = (0..m).map(|j| post.mean.iter().map(|v| v[j]).collect()).collect();
        let var = (0..m).map(|j| vars.iter().map(|v| v[j]).collect()).collect();
        let zeta = match self {
            Self::Bootstrap(ws) => ws.zeta_batch(q)?,
            Self::Entropy => entropy_baseline(model, q)?,
            _ => vec![0.0; m],
        };
        Ok((mean, var, zeta))
    }
}

/// Samples `n` trajectories from the learned model, all advanced together
/// one step at a time. Costs and safety losses come from `env`; initial
/// states from its initial-state distribution. No early termination.
pub fn collect_model<E: SafeEnv + ?Sized>(
    model: &GpModel,
    env: &E,
    policy: &GaussianPolicy,
    n: usize,
    max_len: usize,
    metric: &RolloutMetric<'_>,
    rng: &mut SambaRng,
) -> Result<Vec<Trajectory>> {
    let mut states: Vec<Vec<f64>> = (0..n).map(|_| env.initial_state(rng)).collect();
    let mut trajs = vec![Trajectory::default(); n];
    let mut active: Vec<usize> = (0..n).collect();
    for _ in 0..max_len {
        if active.is_empty() {
            break;
        }
        let cur: Vec<Vec<f64>> = active.iter().map(|&i| states[i].clone()).collect();
        let actions: Vec<_> = cur.iter().map(|s| policy.sample(s, rng)).collect();
        let applied: Vec<Vec<f64>> = actions.iter().map(|a| a.applied.clone()).collect();
        let q = model.featurize_batch(&cur, &applied);
        let (mean, var, zeta) = metric.evaluate(model, &q)?;
        let mut still = Vec::with_capacity(active.len());
        for (j, (&i, action)) in active.iter().zip(actions).enumerate() {
            let next = model.sample_successor(&states[i], &mean[j], &var[j], rng);
            if next.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND) {
                trajs[i].diverged = true;
                continue;
            }
            let state = std::mem::replace(&mut states[i], next.clone());
            trajs[i].steps.push(Step {
                cost: env.cost(&state, &action.applied),
                safety_loss: env.safety_loss(&state),
                violation: env.is_violation(&state),
                state,
                action: action.applied,
                raw_action: action.raw,
                log_prob: action.log_prob,
                next_state: next,
                zeta: zeta[j],
            });
            still.push(i);
        }
        active = still;
    }
    Ok(trajs)
}
