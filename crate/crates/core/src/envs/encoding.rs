use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Wrap an angle into `[-pi, pi)`.
pub fn wrap_angle(theta: f64) -> f64 {
    (theta + PI).rem_euclid(2.0 * PI) - PI
}

/// Which state components are angles.
///
/// Angles are fed to learned models as `(cos, sin)` pairs, and their deltas
/// are taken on the circle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateEncoding {
    pub angle_dims: Vec<bool>,
}

impl StateEncoding {
    pub fn new(state_dim: usize, angles: &[usize]) -> Self {
        let mut angle_dims = vec![false; state_dim];
        for &i in angles {
            angle_dims[i] = true;
        }
        Self { angle_dims }
    }

    pub fn state_dim(&self) -> usize {
        self.angle_dims.len()
    }

    pub fn encoded_dim(&self) -> usize {
        self.angle_dims.iter().map(|&a| if a { 2 } else { 1 }).sum()
    }

    pub fn encode_into(&self, state: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(state.len(), self.state_dim());
        for (&x, &is_angle) in state.iter().zip(&self.angle_dims) {
            if is_angle {
                out.push(x.cos());
                out.push(x.sin());
            } else {
                out.push(x);
            }
        }
    }

    pub fn encode(&self, state: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.encoded_dim());
        self.encode_into(state, &mut out);
        out
    }

    /// `next - state`, with angular components wrapped.
    pub fn delta(&self, state: &[f64], next: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(next)
            .zip(&self.angle_dims)
            .map(|((&s, &n), &is_angle)| if is_angle { wrap_angle(n - s) } else { n - s })
            .collect()
    }

    pub fn apply_delta(&self, state: &[f64], delta: &[f64]) -> Vec<f64> {
        state
            .iter()
            .zip(delta)
            .zip(&self.angle_dims)
            .map(|((&s, &d), &is_angle)| if is_angle { wrap_angle(s + d) } else { s + d })
            .collect()
    }

    pub fn wrap(&self, state: &mut [f64]) {
        for (x, &is_angle) in state.iter_mut().zip(&self.angle_dims) {
            if is_angle {
                *x = wrap_angle(*x);
            }
        }
    }
}
