//! Epistemic-uncertainty metrics over a fitted dynamics model.
//!
//! All metrics take queries already featurised and normalised by
//! [`GpModel::featurize`](crate::gp::GpModel::featurize) and act on the latent
//! function, so they are unaffected by the target normalisation.

mod bootstrap;
mod entropy;
mod grid;
mod kl;
mod loo;

use nalgebra::DMatrix;

pub use bootstrap::BootstrapWorkspace;
pub use entropy::{entropy_baseline, EntropyMetric};
pub use grid::{metric_grid, GridAxis, GridSpec, MetricGrid};
pub use kl::{kl_gaussian, symmetric_kl};
pub use loo::{LooEval, LooWorkspace};

use crate::error::{invalid_arg, Result};

/// Variance floor applied before any KL or entropy evaluation.
pub const MIN_VARIANCE: f64 = 1e-12;

/// A per-query scalar metric.
pub trait PointMetric {
    fn name(&self) -> &'static str;
    fn evaluate(&self, queries: &DMatrix<f64>) -> Result<Vec<f64>>;
}

/// Discounted sum `sum_t gamma^t zeta_t` of per-step metric values.
pub fn discounted_sum(values: &[f64], gamma: f64) -> f64 {
    values.iter().rev().fold(0.0, |acc, v| v + gamma * acc)
}

/// Trajectory-level metric: the discounted sum of `metric` along the rows
/// of `queries`, one row per time step.
pub fn zeta_trajectory<M: PointMetric + ?Sized>(metric: &M, queries: &DMatrix<f64>, gamma: f64) -> Result<f64> {
    if queries.nrows() == 0 {
        return invalid_arg("trajectory is empty");
    }
    if !(0.0..=1.0).contains(&gamma) {
        return invalid_arg(format!("discount {gamma} outside [0, 1]"));
    }
    Ok(discounted_sum(&metric.evaluate(queries)?, gamma))
}

#[cfg(test)]
mod tests;
