use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::kernel::{cross_covariance_scaled, gram_scaled, KernelHyperparams};
use crate::error::{invalid_arg, Error, Result};

/// Jitter ladder tried, in order, when `K + sn2 I` is not numerically SPD.
pub const JITTER_LADDER: [f64; 6] = [0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4];

/// Cached factors of the regularised training covariance.
#[derive(Debug, Clone)]
pub struct GpFactors {
    /// Lower Cholesky factor of `K + (sn2 + jitter) I`.
    pub chol: DMatrix<f64>,
    /// `A = (K + (sn2 + jitter) I)^-1`.
    pub inverse: DMatrix<f64>,
    /// `A y`.
    pub alpha: DVector<f64>,
    pub jitter: f64,
}

/// Exact single-output GP with an ARD RBF kernel.
#[derive(Debug, Clone)]
pub struct ExactGp {
    hp: KernelHyperparams,
    x: DMatrix<f64>,
    y: DVector<f64>,
    factors: Option<GpFactors>,
}

/// Predictive covariance, full or diagonal.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl Covariance {
    pub fn variances(&self) -> DVector<f64> {
        match self {
            Covariance::Diagonal(v) => v.clone(),
            Covariance::Full(m) => m.diagonal(),
        }
    }
}

impl ExactGp {
    /// Condition on `(x, y)` with fixed hyperparameters. `x` holds one input
    /// per row. An empty `x` yields the prior.
    pub fn condition(x: DMatrix<f64>, y: DVector<f64>, hp: KernelHyperparams) -> Result<Self> {
        if x.nrows() != y.len() {
            return invalid_arg(format!("{} inputs but {} targets", x.nrows(), y.len()));
        }
        if x.nrows() > 0 && x.ncols() != hp.dim() {
            return invalid_arg(format!(
                "inputs have {} columns, kernel expects {}",
                x.ncols(),
                hp.dim()
            ));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return invalid_arg("training data must be finite");
        }
        let factors = if x.nrows() == 0 { None } else { Some(factorize(&x, &y, &hp)?) };
        Ok(Self { hp, x, y, factors })
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hp
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn factors(&self) -> Option<&GpFactors> {
        self.factors.as_ref()
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    /// `K(queries, X)`, one query per row.
    pub fn cross_covariance(&self, queries: &DMatrix<f64>) -> DMatrix<f64> {
        cross_covariance_scaled(
            &self.hp.scale_inputs(queries),
            &self.hp.scale_inputs(&self.x),
            self.hp.signal_variance(),
        )
    }

    pub fn prior_covariance(&self, queries: &DMatrix<f64>) -> DMatrix<f64> {
        let s = self.hp.scale_inputs(queries);
        gram_scaled(&s, self.hp.signal_variance())
    }

    /// Posterior over the latent function at `queries` (one per row).
    pub fn predict(&self, queries: &DMatrix<f64>, full_cov: bool) -> Result<(DVector<f64>, Covariance)> {
        if queries.ncols() != self.hp.dim() {
            return invalid_arg(format!(
                "queries have {} columns, kernel expects {}",
                queries.ncols(),
                self.hp.dim()
            ));
        }
        let m = queries.nrows();
        let sf2 = self.hp.signal_variance();
        let Some(f) = &self.factors else {
            let mean = DVector::zeros(m);
            let cov = if full_cov {
                Covariance::Full(self.prior_covariance(queries))
            } else {
                Covariance::Diagonal(DVector::from_element(m, sf2))
            };
            return Ok((mean, cov));
        };
        let kq = self.cross_covariance(queries);
        let mean = &kq * &f.alpha;
        // V = L^-1 K(X, q)
        let v = f
            .chol
            .solve_lower_triangular(&kq.transpose())
            .ok_or_else(|| Error::InvalidState("singular Cholesky factor".into()))?;
        let cov = if full_cov {
            let mut c = self.prior_covariance(queries) - v.transpose() * &v;
            c = (&c + c.transpose()) * 0.5;
            for i in 0..m {
                c[(i, i)] = c[(i, i)].max(0.0);
            }
            Covariance::Full(c)
        } else {
            Covariance::Diagonal(DVector::from_iterator(
                m,
                v.column_iter().map(|col| (sf2 - col.norm_squared()).max(0.0)),
            ))
        };
        Ok((mean, cov))
    }

    /// Exact log marginal likelihood
    /// `-0.5 y^T A y - sum log L_ii - n/2 log 2 pi`.
    pub fn log_marginal_likelihood(&self) -> f64 {
        match &self.factors {
            None => 0.0,
            Some(f) => mll_from_factors(&self.y, f),
        }
    }

    /// Gradient of the log marginal likelihood with respect to
    /// `[log l_1.., log sf2, log sn2]`.
    pub fn log_marginal_likelihood_grad(&self) -> Vec<f64> {
        let d = self.hp.dim();
        let Some(f) = &self.factors else {
            return vec![0.0; d + 2];
        };
        let n = self.x.nrows();
        // W = alpha alpha^T - A; dMLL/dp = 0.5 sum_ij W_ij dK_ij/dp
        let mut w = &f.alpha * f.alpha.transpose();
        w -= &f.inverse;
        let scaled = self.hp.scale_inputs(&self.x);
        let kf = gram_scaled(&scaled, self.hp.signal_variance());
        let mut grad = vec![0.0; d + 2];
        let mut g_sf2 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let wk = w[(i, j)] * kf[(i, j)];
                g_sf2 += wk;
                if i != j {
                    for c in 0..d {
                        let diff = scaled[(i, c)] - scaled[(j, c)];
                        grad[c] += wk * diff * diff;
                    }
                }
            }
        }
        for g in grad.iter_mut().take(d) {
            *g *= 0.5;
        }
        grad[d] = 0.5 * g_sf2;
        grad[d + 1] = 0.5 * self.hp.noise_variance() * w.trace();
        grad
    }
}

fn factorize(x: &DMatrix<f64>, y: &DVector<f64>, hp: &KernelHyperparams) -> Result<GpFactors> {
    let n = x.nrows();
    let base = gram_scaled(&hp.scale_inputs(x), hp.signal_variance());
    let noise = hp.noise_variance();
    for &jitter in &JITTER_LADDER {
        let mut k = base.clone();
        for i in 0..n {
            k[(i, i)] += noise + jitter;
        }
        if let Some(chol) = k.cholesky() {
            let alpha = chol.solve(y);
            let inverse = chol.inverse();
            let l = chol.unpack();
            if alpha.iter().all(|v| v.is_finite()) {
                return Ok(GpFactors { chol: l, inverse, alpha, jitter });
            }
        }
    }
    Err(Error::ModelFit(format!(
        "covariance not positive definite after jitter {:e} (n = {n})",
        JITTER_LADDER[JITTER_LADDER.len() - 1]
    )))
}

pub(crate) fn mll_from_factors(y: &DVector<f64>, f: &GpFactors) -> f64 {
    let n = y.len() as f64;
    let log_det_half: f64 = f.chol.diagonal().iter().map(|v| v.ln()).sum();
    -0.5 * y.dot(&f.alpha) - log_det_half - 0.5 * n * (2.0 * PI).ln()
}
