use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::PointMetric;
use crate::error::{invalid_arg, Error, Result};
use crate::gp::GpModel;

/// One heatmap axis over a raw state dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub dim: usize,
    pub min: f64,
    pub max: f64,
    pub resolution: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        match self.resolution {
            0 => vec![],
            1 => vec![self.min],
            r => (0..r)
                .map(|k| self.min + (self.max - self.min) * k as f64 / (r - 1) as f64)
                .collect(),
        }
    }
}

/// A 2-D slice of state space: two varying dimensions, the rest fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub axes: [GridAxis; 2],
    pub base_state: Vec<f64>,
    pub action: Vec<f64>,
}

impl GridSpec {
    pub fn validate(&self, state_dim: usize, action_dim: usize) -> Result<()> {
        if self.base_state.len() != state_dim || self.action.len() != action_dim {
            return invalid_arg(format!(
                "grid expects state of dim {state_dim} and action of dim {action_dim}"
            ));
        }
        for ax in &self.axes {
            if ax.dim >= state_dim || ax.resolution == 0 || !(ax.max >= ax.min) {
                return invalid_arg(format!("bad grid axis {ax:?}"));
            }
        }
        if self.axes[0].dim == self.axes[1].dim {
            return invalid_arg("grid axes must vary different dimensions");
        }
        Ok(())
    }

    /// Raw states in row-major order (axis 0 outer).
    pub fn states(&self) -> Vec<Vec<f64>> {
        let (v0, v1) = (self.axes[0].values(), self.axes[1].values());
        let mut out = Vec::with_capacity(v0.len() * v1.len());
        for &a in &v0 {
            for &b in &v1 {
                let mut s = self.base_state.clone();
                s[self.axes[0].dim] = a;
                s[self.axes[1].dim] = b;
                out.push(s);
            }
        }
        out
    }
}

/// Metric values on a grid, row-major with axis 0 as rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub spec: GridSpec,
    pub metric: String,
    pub values: Vec<f64>,
}

impl MetricGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.spec.axes[0].resolution, self.spec.axes[1].resolution)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.spec.axes[1].resolution + j]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Writes `axis0,axis1,value` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["axis0", "axis1", "value"])?;
        let (v0, v1) = (self.spec.axes[0].values(), self.spec.axes[1].values());
        for (i, a) in v0.iter().enumerate() {
            for (j, b) in v1.iter().enumerate() {
                w.write_record([a.to_string(), b.to_string(), self.get(i, j).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the `(axis0, axis1, value)` triples written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
        let mut r = csv::Reader::from_path(path)?;
        let mut out = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let parse = |k: usize| -> Result<f64> {
                rec.get(k)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("bad grid csv field {k}")))
            };
            out.push((parse(0)?, parse(1)?, parse(2)?));
        }
        Ok(out)
    }
}

/// Evaluates `metric` at every grid node with the spec's fixed action.
pub fn metric_grid<M: PointMetric + ?Sized>(model: &GpModel, metric: &M, spec: &GridSpec) -> Result<MetricGrid> {
    spec.validate(model.state_dim(), model.action_dim())?;
    let states = spec.states();
    let mut values = Vec::with_capacity(states.len());
    // Bounded batches keep the cross-covariance block small.
    for chunk in states.chunks(256) {
        let actions = vec![spec.action.clone(); chunk.len()];
        let q: DMatrix<f64> = model.featurize_batch(chunk, &actions);
        values.extend(metric.evaluate(&q)?);
    }
    Ok(MetricGrid { spec: spec.clone(), metric: metric.name().to_string(), values })
}
