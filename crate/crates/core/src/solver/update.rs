use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::policy::{clip_grad_norm, GaussianPolicy, Optimizer, OptimizerKind};

/// One on-policy step as seen by the update.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicySample {
    pub state: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub old_log_prob: f64,
    pub adv_cost: f64,
    pub adv_zeta: f64,
    /// Index of the trajectory this step belongs to.
    pub traj: usize,
}

/// Steps of a batch of trajectories plus the per-trajectory CVaR tail
/// weights `1[L >= nu] (L - nu)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBatch {
    samples: Vec<PolicySample>,
    tail_weights: Vec<f64>,
}

impl PolicyBatch {
    pub fn new(samples: Vec<PolicySample>, tail_weights: Vec<f64>) -> Result<Self> {
        if tail_weights.is_empty() {
            return invalid_arg("batch has no trajectories");
        }
        if let Some(s) = samples.iter().find(|s| s.traj >= tail_weights.len()) {
            return invalid_arg(format!("sample refers to trajectory {} of {}", s.traj, tail_weights.len()));
        }
        if tail_weights.iter().any(|w| !(*w >= 0.0)) {
            return invalid_arg("tail weights must be non-negative");
        }
        Ok(Self { samples, tail_weights })
    }

    pub fn samples(&self) -> &[PolicySample] {
        &self.samples
    }

    pub fn tail_weights(&self) -> &[f64] {
        &self.tail_weights
    }

    pub fn n_traj(&self) -> usize {
        self.tail_weights.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyUpdateConfig {
    pub epochs: usize,
    pub lr: f64,
    pub clip_eps: f64,
    /// `None` disables gradient-norm clipping.
    pub max_grad_norm: Option<f64>,
    pub optimizer: OptimizerKind,
    /// Apply the ratio clip to the CVaR term as well.
    pub clip_cvar: bool,
}

impl Default for PolicyUpdateConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            lr: 3e-4,
            clip_eps: 0.2,
            max_grad_norm: Some(0.5),
            optimizer: OptimizerKind::Adam,
            clip_cvar: true,
        }
    }
}

impl PolicyUpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) || !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return invalid_arg(format!("bad policy update config {self:?}"));
        }
        if matches!(self.max_grad_norm, Some(c) if !(c > 0.0)) {
            return invalid_arg("max_grad_norm must be positive");
        }
        Ok(())
    }
}

/// Weights of the three terms in the surrogate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateWeights {
    /// Weight on the cost advantage; the exploration advantage gets `1 - lambda_star`.
    pub lambda_star: f64,
    pub lambda_cvar: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicyUpdateReport {
    pub epochs: usize,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub first_grad_norm: f64,
    /// Fraction of samples whose main term was clipped in the last epoch.
    pub clip_fraction: f64,
    /// A non-finite gradient stopped the update and the parameters were restored.
    pub aborted: bool,
}

/// Score-function gradients of the cost and exploration objectives at the
/// current parameters: `(1/N) sum_tau sum_t A_t grad log pi`.
pub fn objective_gradients(policy: &GaussianPolicy, batch: &PolicyBatch) -> (Vec<f64>, Vec<f64>) {
    let n = batch.n_traj() as f64;
    let mut gc = vec![0.0; policy.param_count()];
    let mut gz = vec![0.0; policy.param_count()];
    let mut score = vec![0.0; policy.param_count()];
    for s in &batch.samples {
        score.iter_mut().for_each(|x| *x = 0.0);
        policy.accumulate_log_prob_grad(&s.state, &s.raw_action, 1.0, &mut score);
        for ((c, z), g) in gc.iter_mut().zip(gz.iter_mut()).zip(&score) {
            *c += s.adv_cost * g / n;
            *z += s.adv_zeta * g / n;
        }
    }
    (gc, gz)
}

/// Value and gradient of the clipped surrogate to be minimised:
///
/// ```text
/// (1/N) sum_tau sum_t max(r A, clip(r) A)
///   + lambda_cvar / (N (1 - alpha)) sum_tau w_tau sum_t max(r, clip(r))
/// ```
///
/// with `A = lambda_star A_C - (1 - lambda_star) A_zeta` and `r` the
/// likelihood ratio against the behaviour policy. Without `clip_cvar` the
/// second sum uses `r` directly.
pub fn surrogate(
    policy: &GaussianPolicy,
    batch: &PolicyBatch,
    w: SurrogateWeights,
    clip_eps: f64,
    clip_cvar: bool,
) -> (f64, Vec<f64>, f64) {
    let n = batch.n_traj() as f64;
    let cvar_scale = w.lambda_cvar / (n * (1.0 - w.alpha));
    let (lo, hi) = (1.0 - clip_eps, 1.0 + clip_eps);
    let mut grad = vec![0.0; policy.param_count()];
    let mut obj = 0.0;
    let mut clipped = 0usize;
    for s in &batch.samples {
        let adv = w.lambda_star * s.adv_cost - (1.0 - w.lambda_star) * s.adv_zeta;
        let tail = cvar_scale * batch.tail_weights[s.traj];
        policy.accumulate_weighted_score(&s.state, &s.raw_action, &mut grad, |lp| {
            let r = (lp - s.old_log_prob).exp();
            let rc = r.clamp(lo, hi);
            let mut weight = 0.0;
            if r * adv >= rc * adv {
                obj += r * adv / n;
                weight += adv * r / n;
            } else {
                obj += rc * adv / n;
                clipped += 1;
            }
            if tail > 0.0 {
                if !clip_cvar || r >= rc {
                    obj += tail * r;
                    weight += tail * r;
                } else {
                    obj += tail * rc;
                }
            }
            weight
        });
    }
    let frac = if batch.samples.is_empty() { 0.0 } else { clipped as f64 / batch.samples.len() as f64 };
    (obj, grad, frac)
}

/// Full-batch clipped update of `policy` for `cfg.epochs` epochs.
///
/// A non-finite gradient restores the parameters from before the call and
/// sets `aborted` in the report.
pub fn policy_update(
    policy: &mut GaussianPolicy,
    batch: &PolicyBatch,
    w: SurrogateWeights,
    cfg: &PolicyUpdateConfig,
    opt: &mut Optimizer,
) -> Result<PolicyUpdateReport> {
    cfg.validate()?;
    if !(w.lambda_star >= 0.0 && w.lambda_star <= 1.0) || !(w.lambda_cvar >= 0.0) {
        return invalid_arg(format!("bad surrogate weights {w:?}"));
    }
    let saved = policy.params();
    let mut params = saved.clone();
    let mut report = PolicyUpdateReport::default();
    for epoch in 0..cfg.epochs {
        let (obj, mut grad, frac) = surrogate(policy, batch, w, cfg.clip_eps, cfg.clip_cvar);
        if !obj.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            policy.set_params(&saved)?;
            report.aborted = true;
            return Ok(report);
        }
        let norm = match cfg.max_grad_norm {
            Some(c) => clip_grad_norm(&mut grad, c),
            None => grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        };
        if epoch == 0 {
            report.initial_objective = obj;
            report.first_grad_norm = norm;
        }
        report.final_objective = obj;
        report.clip_fraction = frac;
        opt.step(&mut params, &grad);
        policy.set_params(&params)?;
        report.epochs = epoch + 1;
    }
    if !policy.is_finite() {
        policy.set_params(&saved)?;
        report.aborted = true;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::StateEncoding;
    use crate::rng_from_seed;
    use crate::solver::{cvar_gradient, tail_weights};
    use crate::SambaRng;
    use rand::Rng;

    fn policy(rng: &mut SambaRng) -> GaussianPolicy {
        let mut p = GaussianPolicy::new(StateEncoding::new(2, &[0]), 1, 2.0, rng).unwrap();
        let mut v = p.params();
        for x in v.iter_mut() {
            *x += 0.05 * rng.random_range(-1.0..1.0);
        }
        p.set_params(&v).unwrap();
        p
    }

    fn batch(p: &GaussianPolicy, rng: &mut SambaRng, n_traj: usize, len: usize, tails: Vec<f64>) -> PolicyBatch {
        let mut samples = Vec::new();
        for traj in 0..n_traj {
            for _ in 0..len {
                let state = vec![rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)];
                let a = p.sample(&state, rng);
                samples.push(PolicySample {
                    state,
                    raw_action: a.raw,
                    old_log_prob: a.log_prob,
                    adv_cost: rng.random_range(-1.0..1.0),
                    adv_zeta: rng.random_range(-1.0..1.0),
                    traj,
                });
            }
        }
        PolicyBatch::new(samples, tails).unwrap()
    }

    fn sgd_cfg(epochs: usize) -> PolicyUpdateConfig {
        PolicyUpdateConfig { epochs, lr: 0.01, max_grad_norm: None, optimizer: OptimizerKind::Sgd, ..Default::default() }
    }

    #[test]
    fn one_epoch_equals_hand_assembled_step() {
        let mut rng = rng_from_seed(0);
        let p = policy(&mut rng);
        let (loss, nu, alpha) = (1.7, 0.7, 0.9);
        let b = batch(&p, &mut rng, 1, 6, tail_weights(&[loss], nu));
        let (ls, lc) = (0.3, 2.5);

        // Assemble the step from policy primitives and the CVaR estimator.
        let mut expected = vec![0.0; p.param_count()];
        let mut score_sum = vec![0.0; p.param_count()];
        for s in b.samples() {
            let (_, g) = p.log_prob_grad(&s.state, &s.raw_action);
            let adv = ls * s.adv_cost - (1.0 - ls) * s.adv_zeta;
            for k in 0..g.len() {
                expected[k] += adv * g[k];
                score_sum[k] += g[k];
            }
        }
        let gc = cvar_gradient(&[loss], &[score_sum], nu, alpha).unwrap();
        let theta0 = p.params();
        let want: Vec<f64> = (0..theta0.len()).map(|k| theta0[k] - 0.01 * (expected[k] + lc * gc[k])).collect();

        let mut q = p.clone();
        let cfg = sgd_cfg(1);
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, q.param_count());
        let w = SurrogateWeights { lambda_star: ls, lambda_cvar: lc, alpha };
        policy_update(&mut q, &b, w, &cfg, &mut opt).unwrap();
        for (a, e) in q.params().iter().zip(&want) {
            assert!((a - e).abs() < 1e-10, "{a} vs {e}");
        }
    }

    #[test]
    fn cost_only_weights_ignore_exploration() {
        let mut rng = rng_from_seed(1);
        let p = policy(&mut rng);
        let b = batch(&p, &mut rng, 3, 5, vec![0.0; 3]);
        let mut scrambled = b.clone();
        for s in &mut scrambled.samples {
            s.adv_zeta = 123.0 - s.adv_zeta * 7.0;
        }
        let w = SurrogateWeights { lambda_star: 1.0, lambda_cvar: 0.0, alpha: 0.9 };
        let (o1, g1, _) = surrogate(&p, &b, w, 0.2, true);
        let (o2, g2, _) = surrogate(&p, &scrambled, w, 0.2, true);
        assert!((o1 - o2).abs() < 1e-12);
        for (a, c) in g1.iter().zip(&g2) {
            assert!((a - c).abs() < 1e-12);
        }
        // At the behaviour policy the gradient is the plain score-weighted cost gradient.
        let (gc, _) = objective_gradients(&p, &b);
        for (a, c) in g1.iter().zip(&gc) {
            assert!((a - c).abs() < 1e-12);
        }
    }

    #[test]
    fn exploration_only_weights() {
        let mut rng = rng_from_seed(2);
        let p = policy(&mut rng);
        let b = batch(&p, &mut rng, 2, 4, vec![0.0; 2]);
        let w = SurrogateWeights { lambda_star: 0.0, lambda_cvar: 0.0, alpha: 0.9 };
        let (_, g, _) = surrogate(&p, &b, w, 0.2, true);
        let (_, gz) = objective_gradients(&p, &b);
        for (a, c) in g.iter().zip(&gz) {
            assert!((a + c).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(3);
        let p0 = policy(&mut rng);
        let b = batch(&p0, &mut rng, 2, 4, vec![0.4, 0.0]);
        // Move off the behaviour policy so ratios differ from one but stay unclipped.
        let mut p = p0.clone();
        let mut v = p.params();
        for x in v.iter_mut() {
            *x += 1e-3 * rng.random_range(-1.0..1.0);
        }
        p.set_params(&v).unwrap();
        let w = SurrogateWeights { lambda_star: 0.6, lambda_cvar: 0.8, alpha: 0.9 };
        let (_, g, frac) = surrogate(&p, &b, w, 0.2, true);
        assert_eq!(frac, 0.0);
        for k in (0..g.len()).step_by(11) {
            let mut hi = v.clone();
            hi[k] += 1e-6;
            let mut lo = v.clone();
            lo[k] -= 1e-6;
            let mut ph = p.clone();
            ph.set_params(&hi).unwrap();
            let mut pl = p.clone();
            pl.set_params(&lo).unwrap();
            let fd = (surrogate(&ph, &b, w, 0.2, true).0 - surrogate(&pl, &b, w, 0.2, true).0) / 2e-6;
            assert!((fd - g[k]).abs() <= 1e-4 * fd.abs().max(1e-4), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn clipped_samples_stop_contributing() {
        let mut rng = rng_from_seed(4);
        let p = policy(&mut rng);
        let mut b = batch(&p, &mut rng, 1, 3, vec![0.0]);
        // Pretend the behaviour policy was far less likely: r >> 1 + eps.
        for s in &mut b.samples {
            s.old_log_prob -= 5.0;
            s.adv_cost = -1.0;
        }
        let w = SurrogateWeights { lambda_star: 1.0, lambda_cvar: 0.0, alpha: 0.9 };
        let (_, g, frac) = surrogate(&p, &b, w, 0.2, true);
        assert_eq!(frac, 1.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn nan_restores_parameters() {
        let mut rng = rng_from_seed(5);
        let mut p = policy(&mut rng);
        let mut b = batch(&p, &mut rng, 1, 3, vec![0.0]);
        b.samples[1].adv_cost = f64::NAN;
        let before = p.params();
        let cfg = PolicyUpdateConfig::default();
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, p.param_count());
        let w = SurrogateWeights { lambda_star: 1.0, lambda_cvar: 0.0, alpha: 0.9 };
        let r = policy_update(&mut p, &b, w, &cfg, &mut opt).unwrap();
        assert!(r.aborted);
        assert_eq!(before, p.params());
    }

    #[test]
    fn update_lowers_surrogate() {
        let mut rng = rng_from_seed(6);
        let mut p = policy(&mut rng);
        let b = batch(&p, &mut rng, 4, 8, vec![0.0, 0.5, 0.0, 1.0]);
        let cfg = PolicyUpdateConfig::default();
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, p.param_count());
        let w = SurrogateWeights { lambda_star: 0.7, lambda_cvar: 0.5, alpha: 0.9 };
        let r = policy_update(&mut p, &b, w, &cfg, &mut opt).unwrap();
        assert_eq!(r.epochs, 80);
        assert!(r.final_objective < r.initial_objective);
        assert!(p.is_finite());
    }

    #[test]
    fn batch_validation() {
        assert!(PolicyBatch::new(vec![], vec![]).is_err());
        assert!(PolicyBatch::new(vec![], vec![-1.0]).is_err());
        let s = PolicySample { state: vec![0.0], raw_action: vec![0.0], old_log_prob: 0.0, adv_cost: 0.0, adv_zeta: 0.0, traj: 2 };
        assert!(PolicyBatch::new(vec![s], vec![0.0, 0.0]).is_err());
    }
}
