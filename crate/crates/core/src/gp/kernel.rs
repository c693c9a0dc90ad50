use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// ARD RBF hyperparameters, held as logarithms so that unconstrained
/// optimisation keeps them positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHyperparams {
    pub log_lengthscales: Vec<f64>,
    pub log_signal_variance: f64,
    pub log_noise_variance: f64,
}

impl KernelHyperparams {
    pub fn new(lengthscales: &[f64], signal_variance: f64, noise_variance: f64) -> Result<Self> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if lengthscales.is_empty() || !lengthscales.iter().all(|&l| positive(l)) {
            return invalid_arg(format!("lengthscales must be positive, got {lengthscales:?}"));
        }
        if !positive(signal_variance) || !positive(noise_variance) {
            return invalid_arg(format!(
                "variances must be positive, got signal {signal_variance}, noise {noise_variance}"
            ));
        }
        Ok(Self {
            log_lengthscales: lengthscales.iter().map(|l| l.ln()).collect(),
            log_signal_variance: signal_variance.ln(),
            log_noise_variance: noise_variance.ln(),
        })
    }

    /// Unit lengthscales and signal variance.
    pub fn isotropic(dim: usize, noise_variance: f64) -> Self {
        Self {
            log_lengthscales: vec![0.0; dim],
            log_signal_variance: 0.0,
            log_noise_variance: noise_variance.ln(),
        }
    }

    pub fn dim(&self) -> usize {
        self.log_lengthscales.len()
    }

    pub fn lengthscales(&self) -> Vec<f64> {
        self.log_lengthscales.iter().map(|l| l.exp()).collect()
    }

    pub fn signal_variance(&self) -> f64 {
        self.log_signal_variance.exp()
    }

    pub fn noise_variance(&self) -> f64 {
        self.log_noise_variance.exp()
    }

    /// Flattened as `[log l_1.., log sf2, log sn2]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.log_lengthscales.clone();
        v.push(self.log_signal_variance);
        v.push(self.log_noise_variance);
        v
    }

    pub fn from_vec(v: &[f64]) -> Self {
        let d = v.len() - 2;
        Self {
            log_lengthscales: v[..d].to_vec(),
            log_signal_variance: v[d],
            log_noise_variance: v[d + 1],
        }
    }

    /// `x / l` per column, for building scaled distances.
    pub(crate) fn scale_inputs(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let inv: Vec<f64> = self.log_lengthscales.iter().map(|l| (-l).exp()).collect();
        let mut out = x.clone();
        for (j, mut col) in out.column_iter_mut().enumerate() {
            col *= inv[j];
        }
        out
    }
}

/// `sf2 * exp(-0.5 * sum_d (x_d - x'_d)^2 / l_d^2)`.
pub fn rbf_kernel(x: &[f64], x_prime: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    if x.len() != hp.dim() || x_prime.len() != hp.dim() {
        return invalid_arg(format!(
            "kernel expects {}-dimensional inputs, got {} and {}",
            hp.dim(),
            x.len(),
            x_prime.len()
        ));
    }
    let r2: f64 = x
        .iter()
        .zip(x_prime)
        .zip(&hp.log_lengthscales)
        .map(|((a, b), l)| {
            let d = (a - b) * (-l).exp();
            d * d
        })
        .sum();
    Ok(hp.signal_variance() * (-0.5 * r2).exp())
}

/// Covariance between the rows of two already length-scaled matrices.
pub(crate) fn cross_covariance_scaled(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    signal_variance: f64,
) -> DMatrix<f64> {
    let an: Vec<f64> = a.row_iter().map(|r| r.norm_squared()).collect();
    let bn: Vec<f64> = b.row_iter().map(|r| r.norm_squared()).collect();
    let mut k = a * b.transpose();
    for i in 0..k.nrows() {
        for j in 0..k.ncols() {
            let r2 = (an[i] + bn[j] - 2.0 * k[(i, j)]).max(0.0);
            k[(i, j)] = signal_variance * (-0.5 * r2).exp();
        }
    }
    k
}

/// Symmetric training covariance with exact zeros on the distance diagonal.
pub(crate) fn gram_scaled(a: &DMatrix<f64>, signal_variance: f64) -> DMatrix<f64> {
    let n = a.nrows();
    let d = a.ncols();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = signal_variance;
        for j in 0..i {
            let mut r2 = 0.0;
            for c in 0..d {
                let diff = a[(i, c)] - a[(j, c)];
                r2 += diff * diff;
            }
            let v = signal_variance * (-0.5 * r2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn self_covariance_is_signal_variance() {
        let hp = KernelHyperparams::new(&[0.3, 2.0], 1.7, 0.1).unwrap();
        let x = [0.4, -1.2];
        assert!((rbf_kernel(&x, &x, &hp).unwrap() - 1.7).abs() < 1e-15);
    }

    #[test]
    fn unit_distance_value() {
        let hp = KernelHyperparams::new(&[1.0], 1.0, 0.1).unwrap();
        let k = rbf_kernel(&[0.0], &[1.0], &hp).unwrap();
        assert!((k - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_bounded() {
        let hp = KernelHyperparams::new(&[0.5, 1.5, 0.9], 2.0, 0.1).unwrap();
        let a = [0.1, -0.7, 2.0];
        let b = [1.1, 0.3, -0.4];
        let kab = rbf_kernel(&a, &b, &hp).unwrap();
        let kba = rbf_kernel(&b, &a, &hp).unwrap();
        assert_eq!(kab, kba);
        assert!(kab > 0.0 && kab <= 2.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let hp = KernelHyperparams::new(&[1.0, 1.0], 1.0, 0.1).unwrap();
        assert!(rbf_kernel(&[0.0], &[1.0], &hp).is_err());
    }

    #[test]
    fn non_positive_hyperparams_rejected() {
        assert!(KernelHyperparams::new(&[1.0, 0.0], 1.0, 0.1).is_err());
        assert!(KernelHyperparams::new(&[1.0], -1.0, 0.1).is_err());
        assert!(KernelHyperparams::new(&[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn matrix_helpers_agree_with_pointwise_kernel() {
        let hp = KernelHyperparams::new(&[0.7, 1.3], 1.4, 0.1).unwrap();
        let a = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, -0.5, 0.2, 1.1, -1.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.3, 0.3, -1.0, 2.0]);
        let kc = cross_covariance_scaled(&hp.scale_inputs(&a), &hp.scale_inputs(&b), 1.4);
        let kg = gram_scaled(&hp.scale_inputs(&a), 1.4);
        for i in 0..3 {
            let ai: Vec<f64> = a.row(i).iter().copied().collect();
            for j in 0..2 {
                let bj: Vec<f64> = b.row(j).iter().copied().collect();
                assert!((kc[(i, j)] - rbf_kernel(&ai, &bj, &hp).unwrap()).abs() < 1e-13);
            }
            for j in 0..3 {
                let aj: Vec<f64> = a.row(j).iter().copied().collect();
                assert!((kg[(i, j)] - rbf_kernel(&ai, &aj, &hp).unwrap()).abs() < 1e-13);
            }
        }
    }
}
