use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};
use crate::SambaRng;

/// Width of both hidden layers.
pub const HIDDEN_UNITS: usize = 32;

/// Fully connected net with tanh hidden layers and a linear output.
///
/// Parameters live in one flat vector. Each layer stores its weights
/// row-major (`out x in`) followed by its biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cached`]; `acts[0]` is the input and
/// the last entry is the output.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("cache holds the input at least")
    }
}

impl Mlp {
    /// `[d_in, 32, 32, d_out]`.
    pub fn standard_sizes(d_in: usize, d_out: usize) -> Vec<usize> {
        vec![d_in, HIDDEN_UNITS, HIDDEN_UNITS, d_out]
    }

    pub fn param_count(sizes: &[usize]) -> usize {
        sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        Self::from_params(sizes, vec![0.0; Self::param_count(sizes)])
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return invalid_arg(format!("bad layer sizes {sizes:?}"));
        }
        if params.len() != Self::param_count(sizes) {
            return invalid_arg(format!(
                "expected {} parameters for {sizes:?}, got {}",
                Self::param_count(sizes),
                params.len()
            ));
        }
        Ok(Self { sizes: sizes.to_vec(), params })
    }

    /// Orthogonal weights (gain 1 on hidden layers, `output_gain` on the
    /// last), zero biases.
    pub fn orthogonal(sizes: &[usize], output_gain: f64, rng: &mut SambaRng) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let gain = if l + 1 == layers { output_gain } else { 1.0 };
            let w = orthogonal_block(n_out, n_in, rng);
            for o in 0..n_out {
                for i in 0..n_in {
                    net.params[off + o * n_in + i] = gain * w[(o, i)];
                }
            }
            off += n_in * n_out + n_out;
        }
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        self.for_each_layer(|w, b, n_in, hidden| {
            cur = affine(w, b, &cur, n_in, hidden);
        });
        cur
    }

    pub fn forward_cached(&self, x: &[f64]) -> MlpCache {
        let mut acts = vec![x.to_vec()];
        self.for_each_layer(|w, b, n_in, hidden| {
            let next = affine(w, b, acts.last().unwrap(), n_in, hidden);
            acts.push(next);
        });
        MlpCache { acts }
    }

    /// Adds `d output . d output / d params` (with `dout` the upstream
    /// gradient) into `grad`.
    pub fn backward(&self, cache: &MlpCache, dout: &[f64], grad: &mut [f64]) {
        debug_assert_eq!(grad.len(), self.params.len());
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l] * self.sizes[l + 1] + self.sizes[l + 1];
        }
        let mut delta = dout.to_vec();
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w_off, b_off) = (offsets[l], offsets[l] + n_in * n_out);
            let a = &cache.acts[l];
            for o in 0..n_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &mut grad[w_off + o * n_in..w_off + (o + 1) * n_in];
                for (g, &ai) in row.iter_mut().zip(a) {
                    *g += d * ai;
                }
                grad[b_off + o] += d;
            }
            if l > 0 {
                let mut prev = vec![0.0; n_in];
                for o in 0..n_out {
                    let d = delta[o];
                    let row = &self.params[w_off + o * n_in..w_off + (o + 1) * n_in];
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
                // acts[l] is a tanh output for every hidden layer.
                for (p, &ai) in prev.iter_mut().zip(a) {
                    *p *= 1.0 - ai * ai;
                }
                delta = prev;
            }
        }
    }

    fn for_each_layer(&self, mut f: impl FnMut(&[f64], &[f64], usize, bool)) {
        let layers = self.sizes.len() - 1;
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            f(w, b, n_in, l + 1 < layers);
            off += n_in * n_out + n_out;
        }
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], n_in: usize, tanh: bool) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(o, &bo)| {
            let z = bo + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            if tanh {
                z.tanh()
            } else {
                z
            }
        })
        .collect()
}

fn orthogonal_block(rows: usize, cols: usize, rng: &mut SambaRng) -> DMatrix<f64> {
    let (r, c) = if rows >= cols { (rows, cols) } else { (cols, rows) };
    let g = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let mut q = qr.q();
    let rmat = qr.r();
    for j in 0..c {
        if rmat[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if rows >= cols {
        q
    } else {
        q.transpose()
    }
}
