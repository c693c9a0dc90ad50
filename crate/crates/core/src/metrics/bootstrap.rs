use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;

use super::kl::kl_unchecked;
use super::{PointMetric, MIN_VARIANCE};
use crate::error::{invalid_arg, Error, Result};
use crate::gp::{ExactGp, GpModel};
use crate::SambaRng;

/// Disagreement between GPs conditioned on random halves of the data.
///
/// Each partition splits the training set into halves of size `floor(n/2)`
/// and `ceil(n/2)`. Both halves reuse the full model's hyperparameters, so
/// the metric measures sensitivity to data and not to the fit.
#[derive(Debug, Clone)]
pub struct BootstrapWorkspace {
    /// Per partition, per output dimension: the two half-data GPs.
    halves: Vec<Vec<(ExactGp, ExactGp)>>,
    input_dim: usize,
}

impl BootstrapWorkspace {
    pub fn new(model: &GpModel, partitions: usize, rng: &mut SambaRng) -> Result<Self> {
        if partitions == 0 {
            return invalid_arg("bootstrap needs at least one partition");
        }
        let n = model.len();
        let parts: Vec<Vec<usize>> = (0..partitions)
            .map(|_| {
                let mut perm: Vec<usize> = (0..n).collect();
                perm.shuffle(rng);
                perm
            })
            .collect();
        Self::from_partitions(model, &parts)
    }

    /// Builds from explicit permutations; the first `floor(n/2)` entries of
    /// each form the first half.
    pub fn from_partitions(model: &GpModel, permutations: &[Vec<usize>]) -> Result<Self> {
        let n = model.len();
        if n < 2 {
            return Err(Error::InvalidState(format!("bootstrap metric needs at least 2 points, model has {n}")));
        }
        let mut halves = Vec::with_capacity(permutations.len());
        for perm in permutations {
            let mut seen = vec![false; n];
            if perm.len() != n || perm.iter().any(|&i| i >= n || std::mem::replace(&mut seen[i], true)) {
                return invalid_arg("partition is not a permutation of the training indices");
            }
            let (a, b) = perm.split_at(n / 2);
            let mut dims = Vec::with_capacity(model.outputs().len());
            for gp in model.outputs() {
                dims.push((half(gp, a)?, half(gp, b)?));
            }
            halves.push(dims);
        }
        Ok(Self { halves, input_dim: model.input_dim() })
    }

    pub fn partitions(&self) -> usize {
        self.halves.len()
    }

    /// `zeta_boot` for each normalised query row.
    pub fn zeta_batch(&self, queries: &DMatrix<f64>) -> Result<Vec<f64>> {
        if queries.ncols() != self.input_dim {
            return invalid_arg(format!(
                "queries have {} features, model expects {}",
                queries.ncols(),
                self.input_dim
            ));
        }
        let mut out = vec![0.0; queries.nrows()];
        for part in &self.halves {
            for (g1, g2) in part {
                let (m1, c1) = g1.predict(queries, false)?;
                let (m2, c2) = g2.predict(queries, false)?;
                let (v1, v2) = (c1.variances(), c2.variances());
                for (j, z) in out.iter_mut().enumerate() {
                    let (a, b) = (v1[j].max(MIN_VARIANCE), v2[j].max(MIN_VARIANCE));
                    *z += 0.5 * (kl_unchecked(m1[j], a, m2[j], b) + kl_unchecked(m2[j], b, m1[j], a));
                }
            }
        }
        let k = self.halves.len() as f64;
        out.iter_mut().for_each(|z| *z /= k);
        Ok(out)
    }
}

fn half(gp: &ExactGp, idx: &[usize]) -> Result<ExactGp> {
    // A half with fewer than two points degenerates to the prior.
    if idx.len() < 2 {
        return ExactGp::condition(
            DMatrix::zeros(0, gp.inputs().ncols()),
            DVector::zeros(0),
            gp.hyperparams().clone(),
        );
    }
    let x = gp.inputs().select_rows(idx);
    let y = DVector::from_iterator(idx.len(), idx.iter().map(|&i| gp.targets()[i]));
    ExactGp::condition(x, y, gp.hyperparams().clone())
}

impl PointMetric for BootstrapWorkspace {
    fn name(&self) -> &'static str {
        "bootstrap"
    }

    fn evaluate(&self, queries: &DMatrix<f64>) -> Result<Vec<f64>> {
        self.zeta_batch(queries)
    }
}
