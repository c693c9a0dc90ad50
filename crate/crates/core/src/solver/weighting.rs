use serde::{Deserialize, Serialize};

use super::cvar::CvarConfig;
use crate::error::{invalid_arg, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinNorm {
    pub lambda: f64,
    /// Both gradients were zero.
    pub stationary: bool,
}

/// Weight `lambda` in `[0, 1]` minimising `|lambda g1 + (1 - lambda) g2|^2`.
///
/// Identical gradients give `lambda = 1`.
pub fn min_norm_lambda(g1: &[f64], g2: &[f64]) -> Result<MinNorm> {
    if g1.len() != g2.len() {
        return invalid_arg(format!("gradient lengths differ: {} vs {}", g1.len(), g2.len()));
    }
    if g1.iter().chain(g2).any(|x| !x.is_finite()) {
        return invalid_arg("non-finite gradient");
    }
    if g1.iter().chain(g2).all(|&x| x == 0.0) {
        return Ok(MinNorm { lambda: 1.0, stationary: true });
    }
    let mut dd = 0.0;
    let mut num = 0.0;
    for (a, b) in g1.iter().zip(g2) {
        let d = b - a;
        dd += d * d;
        num += d * b;
    }
    let lambda = if dd == 0.0 { 1.0 } else { (num / dd).clamp(0.0, 1.0) };
    Ok(MinNorm { lambda, stationary: false })
}

/// `lambda g1 + (1 - lambda) g2`.
pub fn combine(g1: &[f64], g2: &[f64], lambda: f64) -> Vec<f64> {
    g1.iter().zip(g2).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect()
}

/// Projected dual ascent on the CVaR constraint.
pub fn update_lambda_cvar(lambda: f64, cvar: f64, xi: f64, penalty_lr: f64) -> f64 {
    (lambda + penalty_lr * (cvar - xi)).max(0.0)
}

/// Dual variable and last diagnostics of the constrained solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverState {
    pub lambda_cvar: f64,
    pub nu: f64,
    pub lambda_star: f64,
    pub updates: u64,
    pub stationary_steps: u64,
}

impl Default for SolverState {
    fn default() -> Self {
        Self { lambda_cvar: 0.0, nu: 0.0, lambda_star: 1.0, updates: 0, stationary_steps: 0 }
    }
}

impl SolverState {
    pub fn update_lambda(&mut self, cvar: f64, cfg: &CvarConfig) {
        self.lambda_cvar = update_lambda_cvar(self.lambda_cvar, cvar, cfg.xi, cfg.penalty_lr);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn examples() {
        assert_eq!(min_norm_lambda(&[1.0, 2.0], &[1.0, 2.0]).unwrap().lambda, 1.0);
        assert_eq!(min_norm_lambda(&[1.0, 0.0], &[0.0, 1.0]).unwrap().lambda, 0.5);
        assert_eq!(min_norm_lambda(&[2.0, 0.0], &[1.0, 0.0]).unwrap().lambda, 0.0);
        let z = min_norm_lambda(&[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(z.stationary && z.lambda == 1.0);
        assert!(min_norm_lambda(&[1.0], &[1.0, 2.0]).is_err());
        assert!(min_norm_lambda(&[f64::NAN], &[1.0]).is_err());
    }

    #[test]
    fn dual_update() {
        assert_eq!(update_lambda_cvar(0.3, 0.025, 0.025, 0.05), 0.3);
        assert_eq!(update_lambda_cvar(0.0, 0.01, 0.025, 0.05), 0.0);
        assert!((update_lambda_cvar(1.0, 0.125, 0.025, 0.05) - 1.005).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn min_norm_matches_grid_search(
            g1 in prop::collection::vec(-3.0f64..3.0, 1..6),
            seed in prop::collection::vec(-3.0f64..3.0, 6),
        ) {
            let g2: Vec<f64> = seed[..g1.len()].to_vec();
            let r = min_norm_lambda(&g1, &g2).unwrap();
            let got = norm(&combine(&g1, &g2, r.lambda));
            prop_assert!(got <= norm(&g1).min(norm(&g2)) + 1e-12);
            // Grid search on the quadratic in lambda with precomputed dots.
            let d: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a - b).collect();
            let (bb, bd, dd) = (
                g2.iter().map(|x| x * x).sum::<f64>(),
                g2.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>(),
                d.iter().map(|x| x * x).sum::<f64>(),
            );
            // Compared on the squared norm, the minimised quantity: near a zero
            // minimum the grid's own error in the norm exceeds 1e-6.
            let best = (0..=10_000)
                .map(|i| {
                    let l = i as f64 * 1e-4;
                    bb + 2.0 * l * bd + l * l * dd
                })
                .fold(f64::INFINITY, f64::min);
            prop_assert!(got * got <= best + 1e-12);
            prop_assert!((got * got - best).abs() < 1e-6);
        }

        #[test]
        fn interior_solution_is_common_descent(
            g1 in prop::collection::vec(-3.0f64..3.0, 3),
            g2 in prop::collection::vec(-3.0f64..3.0, 3),
        ) {
            let r = min_norm_lambda(&g1, &g2).unwrap();
            if r.lambda > 0.0 && r.lambda < 1.0 {
                let c = combine(&g1, &g2, r.lambda);
                let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                prop_assert!(dot(&c, &g1) >= -1e-9);
                prop_assert!(dot(&c, &g2) >= -1e-9);
            }
        }

        #[test]
        fn lambda_cvar_stays_non_negative(steps in prop::collection::vec(-1.0f64..1.0, 1..50)) {
            let mut s = SolverState::default();
            let cfg = CvarConfig::default();
            for c in steps {
                s.update_lambda(c, &cfg);
                prop_assert!(s.lambda_cvar >= 0.0);
            }
        }
    }
}
