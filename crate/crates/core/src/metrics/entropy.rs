use std::f64::consts::{E, PI};

use nalgebra::DMatrix;

use super::{PointMetric, MIN_VARIANCE};
use crate::error::Result;
use crate::gp::GpModel;

/// Differential entropy of the factorised predictive distribution.
#[derive(Debug, Clone, Copy)]
pub struct EntropyMetric<'a> {
    model: &'a GpModel,
}

impl<'a> EntropyMetric<'a> {
    pub fn new(model: &'a GpModel) -> Self {
        Self { model }
    }
}

/// `sum_d 0.5 ln(2 pi e var_d)` at each normalised query row.
pub fn entropy_baseline(model: &GpModel, queries: &DMatrix<f64>) -> Result<Vec<f64>> {
    let post = model.predict(queries, false)?;
    let mut out = vec![0.0; queries.nrows()];
    for cov in &post.cov {
        for (o, v) in out.iter_mut().zip(cov.variances().iter()) {
            *o += 0.5 * (2.0 * PI * E * v.max(MIN_VARIANCE)).ln();
        }
    }
    Ok(out)
}

impl PointMetric for EntropyMetric<'_> {
    fn name(&self) -> &'static str {
        "entropy"
    }

    fn evaluate(&self, queries: &DMatrix<f64>) -> Result<Vec<f64>> {
        entropy_baseline(self.model, queries)
    }
}
