use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kernel::KernelHyperparams;
use super::process::ExactGp;

/// Settings for marginal-likelihood hyperparameter fitting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpFitConfig {
    /// Iterations for a cold fit.
    pub optimization_iterations: usize,
    /// Iterations when warm-starting from a previous optimum.
    pub refit_iterations: usize,
    pub learning_rate: f64,
    /// Hyperparameters are optimised on a random subset of at most this many
    /// points; the model is then conditioned on all data.
    pub max_fit_points: usize,
    pub noise_floor: f64,
    pub initial_noise: f64,
    pub grad_tolerance: f64,
}

impl Default for GpFitConfig {
    fn default() -> Self {
        Self {
            optimization_iterations: 300,
            refit_iterations: 50,
            learning_rate: 0.1,
            max_fit_points: 200,
            noise_floor: 1e-6,
            initial_noise: 1e-2,
            grad_tolerance: 1e-5,
        }
    }
}

/// Outcome of one hyperparameter optimisation.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub initial_mll: f64,
    pub final_mll: f64,
    /// MLL after every accepted step, starting with the initial value.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub converged: bool,
}

const LOG_LENGTHSCALE_BOUNDS: (f64, f64) = (-4.605_170_185_988_091, 6.907_755_278_982_137); // [1e-2, 1e3]
const LOG_SIGNAL_BOUNDS: (f64, f64) = (-13.815_510_557_964_274, 9.210_340_371_976_184); // [1e-6, 1e4]
const LOG_NOISE_MAX: f64 = 2.302_585_092_994_046; // 10
const MAX_BACKTRACKS: usize = 40;

fn project(p: &mut [f64], log_noise_min: f64) {
    let d = p.len() - 2;
    for v in p.iter_mut().take(d) {
        *v = v.clamp(LOG_LENGTHSCALE_BOUNDS.0, LOG_LENGTHSCALE_BOUNDS.1);
    }
    p[d] = p[d].clamp(LOG_SIGNAL_BOUNDS.0, LOG_SIGNAL_BOUNDS.1);
    p[d + 1] = p[d + 1].clamp(log_noise_min, LOG_NOISE_MAX);
}

fn evaluate(x: &DMatrix<f64>, y: &DVector<f64>, p: &[f64]) -> Option<(f64, Vec<f64>)> {
    let gp = ExactGp::condition(x.clone(), y.clone(), KernelHyperparams::from_vec(p)).ok()?;
    let mll = gp.log_marginal_likelihood();
    mll.is_finite().then(|| (mll, gp.log_marginal_likelihood_grad()))
}

/// Projected gradient ascent on the log hyperparameters with a backtracking
/// step size. Every accepted step does not decrease the marginal likelihood.
pub fn optimize_hyperparams(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    init: &KernelHyperparams,
    iterations: usize,
    cfg: &GpFitConfig,
) -> (KernelHyperparams, FitTrace) {
    let log_noise_min = cfg.noise_floor.ln();
    let mut p = init.to_vec();
    project(&mut p, log_noise_min);

    let Some((mut f, mut g)) = evaluate(x, y, &p) else {
        let trace = FitTrace {
            initial_mll: f64::NEG_INFINITY,
            final_mll: f64::NEG_INFINITY,
            history: vec![],
            iterations: 0,
            final_grad_norm: f64::NAN,
            converged: false,
        };
        return (KernelHyperparams::from_vec(&p), trace);
    };
    let initial_mll = f;
    let mut history = vec![f];
    let mut step = cfg.learning_rate;
    let mut converged = false;
    let mut iters = 0;

    for _ in 0..iterations {
        let gnorm = projected_grad_norm(&p, &g, log_noise_min);
        if gnorm < cfg.grad_tolerance {
            converged = true;
            break;
        }
        iters += 1;
        let mut accepted = false;
        for _ in 0..MAX_BACKTRACKS {
            let mut cand: Vec<f64> = p.iter().zip(&g).map(|(a, b)| a + step * b).collect();
            project(&mut cand, log_noise_min);
            if cand == p {
                break;
            }
            if let Some((fc, gc)) = evaluate(x, y, &cand) {
                if fc >= f {
                    p = cand;
                    f = fc;
                    g = gc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        history.push(f);
        step *= 1.5;
    }
    let final_grad_norm = projected_grad_norm(&p, &g, log_noise_min);
    let trace = FitTrace {
        initial_mll,
        final_mll: f,
        history,
        iterations: iters,
        final_grad_norm,
        converged,
    };
    (KernelHyperparams::from_vec(&p), trace)
}

/// Norm of the gradient with components pushing against an active bound removed.
fn projected_grad_norm(p: &[f64], g: &[f64], log_noise_min: f64) -> f64 {
    let mut probe: Vec<f64> = p.iter().zip(g).map(|(a, b)| a + 1e-8 * b).collect();
    project(&mut probe, log_noise_min);
    probe
        .iter()
        .zip(p)
        .map(|(a, b)| ((a - b) / 1e-8).powi(2))
        .sum::<f64>()
        .sqrt()
}
