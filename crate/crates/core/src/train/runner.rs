use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::collect::{collect_model, collect_real, RolloutMetric};
use super::config::RunConfig;
use crate::checkpoint::{ModelCheckpoint, PolicyCheckpoint};
use crate::envs::{write_trajectories_csv, SafeEnv, Trajectory};
use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelHyperparams, TransitionDataset};
use crate::policy::{gae, mc_returns, normalize, Optimizer, PolicyBundle};
use crate::solver::{
    cvar_empirical, min_norm_lambda, objective_gradients, policy_update, tail_weights, PolicyBatch,
    PolicySample, SolverState, SurrogateWeights,
};
use crate::{rng_from_seed, SambaRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvIterationRow {
    pub env_iter: usize,
    pub real_traces: usize,
    pub real_samples: usize,
    pub cumulative_samples: usize,
    pub real_tc: f64,
    pub real_tv: usize,
    pub real_mean_cost: f64,
    pub dataset_size: usize,
    pub gp_mll: f64,
    pub gp_fit_iterations: usize,
    /// The warm-started fit failed and hyperparameters were refit from scratch.
    pub cold_refit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlIterationRow {
    pub env_iter: usize,
    pub control_iter: usize,
    pub lambda_star: f64,
    pub stationary: bool,
    pub lambda_cvar: f64,
    pub nu: f64,
    pub cvar: f64,
    pub mean_cost_return: f64,
    pub mean_zeta_return: f64,
    pub grad_norm_cost: f64,
    pub grad_norm_zeta: f64,
    pub objective_before: f64,
    pub objective_after: f64,
    pub clip_fraction: f64,
    pub diverged_traces: usize,
    pub aborted: bool,
}

/// Scalar streams of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub env_rows: Vec<EnvIterationRow>,
    pub control_rows: Vec<ControlIterationRow>,
    pub checkpoints: Vec<PathBuf>,
    /// A policy update hit a non-finite gradient; training stopped there.
    pub flagged: bool,
}

impl RunLog {
    pub fn total_real_samples(&self) -> usize {
        self.env_rows.last().map_or(0, |r| r.cumulative_samples)
    }

    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        write_rows(&dir.join("env_iterations.csv"), &self.env_rows)?;
        write_rows(&dir.join("control_iterations.csv"), &self.control_rows)
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub struct TrainOutcome {
    pub bundle: PolicyBundle,
    pub solver: SolverState,
    pub model: Option<GpModel>,
    pub log: RunLog,
    pub real_trajectories: Vec<Trajectory>,
}

/// Trains on the environment named in the config.
pub fn train(cfg: &RunConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    train_env(cfg, &cfg.env, out)
}

/// Runs the full loop on `env`, ignoring `cfg.env` except for checkpoint
/// metadata. With `out` set, the effective config, per-iteration checkpoints
/// and CSV logs are written there; logs are flushed after every
/// env-iteration so a failed run leaves a partial record.
pub fn train_env<E: SafeEnv + ?Sized>(cfg: &RunConfig, env: &E, out: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir.join("checkpoints"))?;
        fs::write(dir.join("config.toml"), cfg.to_toml_string()?)?;
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut t = Trainer::new(cfg, env, &mut rng)?;
    let mut log = RunLog::default();
    let mut data = TransitionDataset::default();
    let mut real = Vec::new();
    let mut model: Option<GpModel> = None;
    let r = &cfg.runner;

    for j in 0..r.env_iterations {
        let trajs = collect_real(env, &t.bundle.policy, r.real_traces, r.max_len, &mut data, &mut rng);
        let samples: usize = trajs.iter().map(Trajectory::len).sum();
        let mut row = EnvIterationRow {
            env_iter: j,
            real_traces: trajs.len(),
            real_samples: samples,
            cumulative_samples: log.total_real_samples() + samples,
            real_tc: trajs.iter().map(Trajectory::total_safety_cost).sum(),
            real_tv: trajs.iter().map(Trajectory::violations).sum(),
            real_mean_cost: trajs.iter().map(|t| t.cost_return(1.0)).sum::<f64>() / trajs.len() as f64,
            dataset_size: data.len(),
            gp_mll: f64::NAN,
            gp_fit_iterations: 0,
            cold_refit: false,
        };
        real.extend(trajs);

        if data.len() >= 2 {
            let warm = model.as_ref().map(|m| m.hyperparams());
            let fitted = match fit(cfg, env, &data, warm.as_deref(), &mut rng) {
                Ok(m) => Ok(m),
                Err(_) if warm.is_some() => {
                    row.cold_refit = true;
                    fit(cfg, env, &data, None, &mut rng)
                }
                Err(e) => Err(e),
            };
            let (m, iters) = match fitted {
                Ok(v) => v,
                Err(e) => {
                    log.env_rows.push(row);
                    if let Some(dir) = out {
                        log.write_csv(dir)?;
                    }
                    return Err(e);
                }
            };
            row.gp_mll = m.marginal_log_likelihood();
            row.gp_fit_iterations = iters;
            model = Some(m);
            let m = model.as_ref().unwrap();
            let metric = if cfg.solver.explore {
                RolloutMetric::build(&cfg.metrics, m, &mut rng)?
            } else {
                RolloutMetric::Off
            };
            for k in 0..r.control_iterations {
                let c = t.control_iteration(m, env, &metric, &mut rng, j, k)?;
                let aborted = c.aborted;
                log.control_rows.push(c);
                if aborted {
                    log.flagged = true;
                    break;
                }
            }
        }
        log.env_rows.push(row);

        if let Some(dir) = out {
            if r.checkpoint_every_iteration {
                let p = dir.join("checkpoints").join(format!("policy_{j:03}.json"));
                PolicyCheckpoint::new(&cfg.env, j, &t.bundle, &t.solver).save(&p)?;
                log.checkpoints.push(p);
                if let Some(m) = &model {
                    let p = dir.join("checkpoints").join(format!("model_{j:03}.json"));
                    ModelCheckpoint::from_model(m, &cfg.env).save(&p)?;
                    log.checkpoints.push(p);
                }
            }
            log.write_csv(dir)?;
        }
        if log.flagged {
            break;
        }
    }

    if let Some(dir) = out {
        PolicyCheckpoint::new(&cfg.env, log.env_rows.len(), &t.bundle, &t.solver).save(&dir.join("policy.json"))?;
        if let Some(m) = &model {
            ModelCheckpoint::from_model(m, &cfg.env).save(&dir.join("model.json"))?;
        }
        write_trajectories_csv(&dir.join("real_trajectories.csv"), &real)?;
        log.write_csv(dir)?;
    }
    Ok(TrainOutcome { bundle: t.bundle, solver: t.solver, model, log, real_trajectories: real })
}

fn fit<E: SafeEnv + ?Sized>(
    cfg: &RunConfig,
    env: &E,
    data: &TransitionDataset,
    warm: Option<&[KernelHyperparams]>,
    rng: &mut SambaRng,
) -> Result<(GpModel, usize)> {
    let (m, report) = GpModel::fit(data, &env.encoding(), env.action_dim(), &cfg.dynamics_model, warm, rng)?;
    if !m.marginal_log_likelihood().is_finite() {
        return Err(Error::ModelFit("non-finite marginal likelihood".into()));
    }
    Ok((m, report.traces.iter().map(|t| t.iterations).max().unwrap_or(0)))
}

struct Trainer<'c> {
    cfg: &'c RunConfig,
    bundle: PolicyBundle,
    solver: SolverState,
    policy_opt: Optimizer,
    cost_opt: Optimizer,
    zeta_opt: Optimizer,
}

impl<'c> Trainer<'c> {
    fn new<E: SafeEnv + ?Sized>(cfg: &'c RunConfig, env: &E, rng: &mut SambaRng) -> Result<Self> {
        let bundle = PolicyBundle::for_env(env, rng)?;
        let a = &cfg.agent;
        Ok(Self {
            policy_opt: Optimizer::new(a.policy.optimizer, a.policy.lr, bundle.policy.param_count()),
            cost_opt: Optimizer::new(a.critic_optimizer, a.critic_lr, bundle.cost_critic.params().len()),
            zeta_opt: Optimizer::new(a.critic_optimizer, a.critic_lr, bundle.zeta_critic.params().len()),
            solver: SolverState { lambda_cvar: cfg.solver.initial_lambda_cvar, ..SolverState::default() },
            bundle,
            cfg,
        })
    }

    fn control_iteration<E: SafeEnv + ?Sized>(
        &mut self,
        model: &GpModel,
        env: &E,
        metric: &RolloutMetric<'_>,
        rng: &mut SambaRng,
        j: usize,
        k: usize,
    ) -> Result<ControlIterationRow> {
        let r = &self.cfg.runner;
        let sc = &self.cfg.solver;
        let explore = sc.explore;
        let trajs = collect_model(model, env, &self.bundle.policy, r.model_traces, r.max_len, metric, rng)?;
        let diverged = trajs.iter().filter(|t| t.diverged).count();
        let kept: Vec<&Trajectory> = trajs.iter().filter(|t| !t.is_empty()).collect();
        if kept.is_empty() {
            return Err(Error::InvalidState("every model rollout diverged on its first step".into()));
        }

        // Critic targets and advantages, both streams.
        let mut states = Vec::new();
        let mut cost_targets = Vec::new();
        let mut zeta_targets = Vec::new();
        let mut adv_c = Vec::new();
        let mut adv_z = Vec::new();
        for t in &kept {
            let s: Vec<Vec<f64>> = t.steps.iter().map(|s| s.state.clone()).collect();
            let costs = t.costs();
            let vc: Vec<f64> = s.iter().map(|x| self.bundle.cost_critic.value(x)).collect();
            adv_c.extend(gae(&costs, &vc, r.gamma, r.gae_lambda)?);
            cost_targets.extend(mc_returns(&costs, r.gamma));
            if explore {
                let zetas = t.zetas();
                let vz: Vec<f64> = s.iter().map(|x| self.bundle.zeta_critic.value(x)).collect();
                adv_z.extend(gae(&zetas, &vz, r.gamma, r.gae_lambda)?);
                zeta_targets.extend(mc_returns(&zetas, r.gamma));
            }
            states.extend(s);
        }
        normalize(&mut adv_c);
        if explore {
            normalize(&mut adv_z);
        } else {
            adv_z = vec![0.0; adv_c.len()];
        }

        let losses: Vec<f64> = kept.iter().map(|t| t.safety_loss(r.gamma)).collect();
        let est = cvar_empirical(&losses, sc.alpha)?;
        let mut samples = Vec::with_capacity(states.len());
        let mut idx = 0;
        for (ti, t) in kept.iter().enumerate() {
            for s in &t.steps {
                samples.push(PolicySample {
                    state: s.state.clone(),
                    raw_action: s.raw_action.clone(),
                    old_log_prob: s.log_prob,
                    adv_cost: adv_c[idx],
                    adv_zeta: adv_z[idx],
                    traj: ti,
                });
                idx += 1;
            }
        }
        let batch = PolicyBatch::new(samples, tail_weights(&losses, est.var))?;

        let (g_cost, g_zeta) = objective_gradients(&self.bundle.policy, &batch);
        let norm = |g: &[f64]| g.iter().map(|x| x * x).sum::<f64>().sqrt();
        let (lambda_star, stationary) = if explore {
            let neg_zeta: Vec<f64> = g_zeta.iter().map(|g| -g).collect();
            let mn = min_norm_lambda(&g_cost, &neg_zeta)?;
            (mn.lambda, mn.stationary)
        } else {
            (1.0, false)
        };

        let a = &self.cfg.agent;
        let clip = (a.critic_max_grad_norm > 0.0).then_some(a.critic_max_grad_norm);
        self.bundle.cost_critic.fit(&states, &cost_targets, &mut self.cost_opt, a.critic_epochs, clip)?;
        if explore {
            self.bundle.zeta_critic.fit(&states, &zeta_targets, &mut self.zeta_opt, a.critic_epochs, clip)?;
        }

        if sc.constrained {
            self.solver.update_lambda(est.cvar, &sc.cvar());
        } else {
            self.solver.lambda_cvar = 0.0;
        }
        self.solver.nu = est.var;
        self.solver.lambda_star = lambda_star;
        self.solver.updates += 1;
        self.solver.stationary_steps += stationary as u64;

        let w = SurrogateWeights { lambda_star, lambda_cvar: self.solver.lambda_cvar, alpha: sc.alpha };
        let rep = policy_update(&mut self.bundle.policy, &batch, w, &a.policy, &mut self.policy_opt)?;

        let n = kept.len() as f64;
        Ok(ControlIterationRow {
            env_iter: j,
            control_iter: k,
            lambda_star,
            stationary,
            lambda_cvar: self.solver.lambda_cvar,
            nu: est.var,
            cvar: est.cvar,
            mean_cost_return: kept.iter().map(|t| t.cost_return(r.gamma)).sum::<f64>() / n,
            mean_zeta_return: kept.iter().map(|t| t.zeta_return(r.gamma)).sum::<f64>() / n,
            grad_norm_cost: norm(&g_cost),
            grad_norm_zeta: norm(&g_zeta),
            objective_before: rep.initial_objective,
            objective_after: rep.final_objective,
            clip_fraction: rep.clip_fraction,
            diverged_traces: diverged,
            aborted: rep.aborted,
        })
    }
}

