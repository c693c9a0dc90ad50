use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;

use super::kl::kl_unchecked;
use super::{PointMetric, MIN_VARIANCE};
use crate::error::{invalid_arg, Error, Result};
use crate::gp::GpModel;
use crate::SambaRng;

/// Precomputed state for leave-one-out posteriors of a fitted model.
///
/// Removing training point `i` changes the posterior at a query by a
/// rank-one term built from row `a_i` of `A = (K + sn2 I)^-1`:
///
/// ```text
/// mu_i  = mu  - (k* . a_i) (a_i . y) / a_ii
/// var_i = var + (k* . a_i)^2 / a_ii
/// ```
///
/// so a full sweep over `i` costs one `A k*` product per query instead of
/// `n` refits. The workspace borrows the model, so it cannot outlive a refit.
#[derive(Debug, Clone)]
pub struct LooWorkspace<'a> {
    model: &'a GpModel,
    /// `diag(A)` per output dimension.
    diag: Vec<DVector<f64>>,
    /// Left-out indices averaged by `zeta`; `None` means all of them.
    subset: Option<Vec<usize>>,
    /// Rows of `A` for `subset`, per output dimension.
    subset_rows: Vec<DMatrix<f64>>,
}

/// Posterior moments and LOO value for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct LooEval {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub zeta: f64,
}

impl<'a> LooWorkspace<'a> {
    pub fn new(model: &'a GpModel) -> Result<Self> {
        let mut diag = Vec::with_capacity(model.outputs().len());
        for gp in model.outputs() {
            match gp.factors() {
                Some(f) => {
                    let d = f.inverse.diagonal();
                    if d.iter().any(|&a| !(a > 0.0)) {
                        return Err(Error::InvalidState("non-positive diagonal in A".into()));
                    }
                    diag.push(d);
                }
                None => diag.push(DVector::zeros(0)),
            }
        }
        Ok(Self { model, diag, subset: None, subset_rows: vec![] })
    }

    /// Average `zeta` over `m` uniformly drawn left-out indices instead of all.
    pub fn with_subsample(model: &'a GpModel, m: usize, rng: &mut SambaRng) -> Result<Self> {
        let mut ws = Self::new(model)?;
        let n = model.len();
        if m > 0 && m < n {
            let mut idx = sample(rng, n, m).into_vec();
            idx.sort_unstable();
            ws.subset_rows = model
                .outputs()
                .iter()
                .map(|gp| gp.factors().expect("fitted").inverse.select_rows(&idx))
                .collect();
            ws.subset = Some(idx);
        }
        Ok(ws)
    }

    pub fn model(&self) -> &GpModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.model.len()
    }

    pub fn is_empty(&self) -> bool {
        self.model.is_empty()
    }

    /// LOO posterior `(mean, variance)` per output dimension at a normalised
    /// query, with training point `i` removed.
    pub fn loo_posterior(&self, query: &[f64], i: usize) -> Result<Vec<(f64, f64)>> {
        let n = self.model.len();
        if i >= n {
            return invalid_arg(format!("left-out index {i} out of range for {n} points"));
        }
        if query.len() != self.model.input_dim() {
            return invalid_arg(format!(
                "query has {} features, model expects {}",
                query.len(),
                self.model.input_dim()
            ));
        }
        let q = DMatrix::from_row_slice(1, query.len(), query);
        let mut out = Vec::with_capacity(self.diag.len());
        for (gp, diag) in self.model.outputs().iter().zip(&self.diag) {
            let f = gp.factors().expect("non-empty model has factors");
            let kq = gp.cross_covariance(&q);
            let c = &kq * &f.inverse;
            let mean = kq.row(0).dot(&f.alpha.transpose());
            let var = gp.hyperparams().signal_variance() - kq.row(0).dot(&c.row(0));
            let ci = c[(0, i)];
            out.push((mean - ci * f.alpha[i] / diag[i], var + ci * ci / diag[i]));
        }
        Ok(out)
    }

    /// Posterior moments and `zeta_LOO` for each query row.
    pub fn evaluate_batch(&self, queries: &DMatrix<f64>) -> Result<Vec<LooEval>> {
        let n = self.model.len();
        if n < 2 {
            return Err(Error::InvalidState(format!("LOO metric needs at least 2 points, model has {n}")));
        }
        if queries.ncols() != self.model.input_dim() {
            return invalid_arg(format!(
                "queries have {} features, model expects {}",
                queries.ncols(),
                self.model.input_dim()
            ));
        }
        let m = queries.nrows();
        let dims = self.diag.len();
        let mut evals: Vec<LooEval> = (0..m)
            .map(|_| LooEval { mean: Vec::with_capacity(dims), var: Vec::with_capacity(dims), zeta: 0.0 })
            .collect();
        for (d, (gp, diag)) in self.model.outputs().iter().zip(&self.diag).enumerate() {
            let f = gp.factors().expect("non-empty model has factors");
            let sf2 = gp.hyperparams().signal_variance();
            let kq = gp.cross_covariance(queries);
            let mean = &kq * &f.alpha;
            match &self.subset {
                None => {
                    let c = &kq * &f.inverse;
                    for (j, ev) in evals.iter_mut().enumerate() {
                        let var = (sf2 - kq.row(j).dot(&c.row(j))).max(0.0);
                        let mu = mean[j];
                        let vq = var.max(MIN_VARIANCE);
                        let mut total = 0.0;
                        for i in 0..n {
                            let ci = c[(j, i)];
                            let mu_i = mu - ci * f.alpha[i] / diag[i];
                            let var_i = var + ci * ci / diag[i];
                            total += kl_unchecked(mu_i, var_i.max(MIN_VARIANCE), mu, vq);
                        }
                        ev.mean.push(mu);
                        ev.var.push(var);
                        ev.zeta += total / n as f64;
                    }
                }
                Some(idx) => {
                    let v = f
                        .chol
                        .solve_lower_triangular(&kq.transpose())
                        .ok_or_else(|| Error::InvalidState("singular Cholesky factor".into()))?;
                    let c = &kq * self.subset_rows[d].transpose();
                    for (j, ev) in evals.iter_mut().enumerate() {
                        let var = (sf2 - v.column(j).norm_squared()).max(0.0);
                        let mu = mean[j];
                        let vq = var.max(MIN_VARIANCE);
                        let mut total = 0.0;
                        for (k, &i) in idx.iter().enumerate() {
                            let ci = c[(j, k)];
                            let mu_i = mu - ci * f.alpha[i] / diag[i];
                            let var_i = var + ci * ci / diag[i];
                            total += kl_unchecked(mu_i, var_i.max(MIN_VARIANCE), mu, vq);
                        }
                        ev.mean.push(mu);
                        ev.var.push(var);
                        ev.zeta += total / idx.len() as f64;
                    }
                }
            }
        }
        Ok(evals)
    }

    /// `zeta_LOO` at one normalised query.
    pub fn zeta(&self, query: &[f64]) -> Result<f64> {
        let q = DMatrix::from_row_slice(1, query.len(), query);
        Ok(self.evaluate_batch(&q)?[0].zeta)
    }
}

impl PointMetric for LooWorkspace<'_> {
    fn name(&self) -> &'static str {
        "loo"
    }

    fn evaluate(&self, queries: &DMatrix<f64>) -> Result<Vec<f64>> {
        Ok(self.evaluate_batch(queries)?.into_iter().map(|e| e.zeta).collect())
    }
}
