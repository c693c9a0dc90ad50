use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::envs::StateEncoding;
use crate::error::{invalid_arg, Result};

/// Raw transition data: `(state, action)` inputs and successor-state deltas.
///
/// Rows are only ever appended.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransitionDataset {
    pub states: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub deltas: Vec<Vec<f64>>,
}

impl TransitionDataset {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn push(&mut self, encoding: &StateEncoding, state: &[f64], action: &[f64], next: &[f64]) {
        self.states.push(state.to_vec());
        self.actions.push(action.to_vec());
        self.deltas.push(encoding.delta(state, next));
    }

    pub fn extend(&mut self, other: &TransitionDataset) {
        self.states.extend(other.states.iter().cloned());
        self.actions.extend(other.actions.iter().cloned());
        self.deltas.extend(other.deltas.iter().cloned());
    }

    pub fn validate(&self) -> Result<()> {
        if self.states.len() != self.actions.len() || self.states.len() != self.deltas.len() {
            return invalid_arg("dataset columns have different lengths");
        }
        let finite = |rows: &Vec<Vec<f64>>| rows.iter().flatten().all(|v| v.is_finite());
        if !(finite(&self.states) && finite(&self.actions) && finite(&self.deltas)) {
            return invalid_arg("dataset contains non-finite values");
        }
        Ok(())
    }

    /// Model inputs: encoded state followed by the action, one row per sample.
    pub fn feature_matrix(&self, encoding: &StateEncoding, action_dim: usize) -> DMatrix<f64> {
        let d = encoding.encoded_dim() + action_dim;
        let mut buf = Vec::with_capacity(self.len() * d);
        for (s, a) in self.states.iter().zip(&self.actions) {
            encoding.encode_into(s, &mut buf);
            buf.extend_from_slice(a);
        }
        DMatrix::from_row_slice(self.len(), d, &buf)
    }

    pub fn target_matrix(&self) -> DMatrix<f64> {
        let d = self.deltas.first().map_or(0, |r| r.len());
        DMatrix::from_row_iterator(self.len(), d, self.deltas.iter().flatten().copied())
    }
}

/// Per-column affine standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Columns with a smaller spread are only centred.
const MIN_STD: f64 = 1e-12;

impl Normalizer {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit(data: &DMatrix<f64>) -> Self {
        let n = data.nrows();
        if n == 0 {
            return Self::identity(data.ncols());
        }
        let mut mean = Vec::with_capacity(data.ncols());
        let mut std = Vec::with_capacity(data.ncols());
        for col in data.column_iter() {
            let m = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > MIN_STD { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = (*v - m) / s;
        }
    }

    pub fn invert(&self, row: &mut [f64]) {
        for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
            *v = *v * s + m;
        }
    }

    pub fn apply_matrix(&self, data: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col.add_scalar_mut(-self.mean[j]);
            col /= self.std[j];
        }
        out
    }
}
