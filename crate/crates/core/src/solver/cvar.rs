use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Risk level, cost limit and dual step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvarConfig {
    pub alpha: f64,
    pub xi: f64,
    pub penalty_lr: f64,
}

impl Default for CvarConfig {
    fn default() -> Self {
        Self { alpha: 0.9, xi: 0.025, penalty_lr: 5e-2 }
    }
}

impl CvarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return invalid_arg(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.xi > 0.0) {
            return invalid_arg(format!("xi must be positive, got {}", self.xi));
        }
        if !(self.penalty_lr >= 0.0 && self.penalty_lr.is_finite()) {
            return invalid_arg(format!("penalty_lr must be non-negative, got {}", self.penalty_lr));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvarEstimate {
    pub cvar: f64,
    /// The empirical alpha-quantile used as `nu`.
    pub var: f64,
}

/// Empirical CVaR of a batch of losses.
///
/// `nu` is the `ceil(N alpha)`-th order statistic, which minimises the
/// sample version of `nu + E[(L - nu)^+] / (1 - alpha)`, so the estimate is
/// that minimum.
pub fn cvar_empirical(losses: &[f64], alpha: f64) -> Result<CvarEstimate> {
    if losses.is_empty() {
        return invalid_arg("CVaR of an empty batch");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid_arg(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    if losses.iter().any(|l| !l.is_finite()) {
        return invalid_arg("non-finite loss");
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = ((n as f64 * alpha).ceil() as usize).clamp(1, n);
    let nu = sorted[k - 1];
    Ok(CvarEstimate { cvar: cvar_objective(losses, nu, alpha), var: nu })
}

/// `nu + mean((L - nu)^+) / (1 - alpha)`.
pub fn cvar_objective(losses: &[f64], nu: f64, alpha: f64) -> f64 {
    let tail = losses.iter().map(|l| (l - nu).max(0.0)).sum::<f64>() / losses.len() as f64;
    nu + tail / (1.0 - alpha)
}

/// Per-trajectory tail weight `1[L >= nu] (L - nu)`.
pub fn tail_weights(losses: &[f64], nu: f64) -> Vec<f64> {
    losses.iter().map(|&l| if l >= nu { l - nu } else { 0.0 }).collect()
}

/// Likelihood-ratio CVaR gradient with `nu` as baseline:
/// `1/(N (1 - alpha)) sum_tau 1[L >= nu] (L - nu) score_sum(tau)`.
pub fn cvar_gradient(losses: &[f64], score_sums: &[Vec<f64>], nu: f64, alpha: f64) -> Result<Vec<f64>> {
    if losses.is_empty() || losses.len() != score_sums.len() {
        return invalid_arg(format!("{} losses for {} score sums", losses.len(), score_sums.len()));
    }
    let dim = score_sums[0].len();
    if score_sums.iter().any(|s| s.len() != dim) {
        return invalid_arg("score sums have different lengths");
    }
    let scale = 1.0 / (losses.len() as f64 * (1.0 - alpha));
    let mut grad = vec![0.0; dim];
    for (w, s) in tail_weights(losses, nu).iter().zip(score_sums) {
        if *w > 0.0 {
            for (g, x) in grad.iter_mut().zip(s) {
                *g += scale * w * x;
            }
        }
    }
    Ok(grad)
}
