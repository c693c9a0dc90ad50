use std::f64::consts::PI;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::envs::{Action, Controller, SafeEnv, StateEncoding};
use crate::error::{invalid_arg, Result};
use crate::SambaRng;

pub const LOG_STD_FLOOR: f64 = -20.0;

/// Initial log standard deviation, `ln 0.5`.
pub const INITIAL_LOG_STD: f64 = -std::f64::consts::LN_2;

/// Diagonal Gaussian policy with an MLP mean and a state-independent
/// log standard deviation.
///
/// Sampled actions are clipped to `[-action_bound, action_bound]` before
/// being applied; densities and scores always refer to the unclipped sample.
/// The flat parameter vector is the MLP's followed by the log-stds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    encoding: StateEncoding,
    net: Mlp,
    log_std: Vec<f64>,
    action_bound: f64,
}

impl GaussianPolicy {
    pub fn new(encoding: StateEncoding, action_dim: usize, action_bound: f64, rng: &mut SambaRng) -> Result<Self> {
        if !(action_bound > 0.0) {
            return invalid_arg(format!("action bound must be positive, got {action_bound}"));
        }
        let sizes = Mlp::standard_sizes(encoding.encoded_dim(), action_dim);
        let net = Mlp::orthogonal(&sizes, 0.01, rng)?;
        Ok(Self { encoding, net, log_std: vec![INITIAL_LOG_STD; action_dim], action_bound })
    }

    pub fn for_env<E: SafeEnv + ?Sized>(env: &E, rng: &mut SambaRng) -> Result<Self> {
        Self::new(env.encoding(), env.action_dim(), env.action_bound(), rng)
    }

    pub fn from_parts(encoding: StateEncoding, net: Mlp, log_std: Vec<f64>, action_bound: f64) -> Result<Self> {
        if net.input_dim() != encoding.encoded_dim() || net.output_dim() != log_std.len() {
            return invalid_arg("policy network does not match encoding or action dimension");
        }
        Ok(Self { encoding, net, log_std, action_bound })
    }

    pub fn encoding(&self) -> &StateEncoding {
        &self.encoding
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn action_bound(&self) -> f64 {
        self.action_bound
    }

    pub fn log_std(&self) -> &[f64] {
        &self.log_std
    }

    pub fn set_log_std(&mut self, value: f64) {
        self.log_std.iter_mut().for_each(|l| *l = value);
    }

    pub fn param_count(&self) -> usize {
        self.net.params().len() + self.log_std.len()
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.net.params().to_vec();
        p.extend_from_slice(&self.log_std);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return invalid_arg(format!("expected {} parameters, got {}", self.param_count(), params.len()));
        }
        let n = self.net.params().len();
        self.net.params_mut().copy_from_slice(&params[..n]);
        self.log_std.copy_from_slice(&params[n..]);
        Ok(())
    }

    fn effective_log_std(&self) -> impl Iterator<Item = f64> + '_ {
        self.log_std.iter().map(|&l| l.max(LOG_STD_FLOOR))
    }

    pub fn std(&self) -> Vec<f64> {
        self.effective_log_std().map(f64::exp).collect()
    }

    pub fn mean(&self, state: &[f64]) -> Vec<f64> {
        self.net.forward(&self.encoding.encode(state))
    }

    pub fn clip(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().map(|a| a.clamp(-self.action_bound, self.action_bound)).collect()
    }

    pub fn sample(&self, state: &[f64], rng: &mut SambaRng) -> Action {
        let mean = self.mean(state);
        let raw: Vec<f64> = mean
            .iter()
            .zip(self.std())
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                m + s * z
            })
            .collect();
        let log_prob = self.log_density(&mean, &raw);
        Action { applied: self.clip(&raw), raw, log_prob }
    }

    fn log_density(&self, mean: &[f64], raw: &[f64]) -> f64 {
        mean.iter()
            .zip(raw)
            .zip(self.effective_log_std())
            .map(|((m, a), ls)| {
                let z = (a - m) / ls.exp();
                -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
            })
            .sum()
    }

    pub fn log_prob(&self, state: &[f64], raw: &[f64]) -> f64 {
        self.log_density(&self.mean(state), raw)
    }

    /// `log pi(raw | state)` and its gradient with respect to the flat
    /// parameters.
    pub fn log_prob_grad(&self, state: &[f64], raw: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; self.param_count()];
        let lp = self.accumulate_log_prob_grad(state, raw, 1.0, &mut grad);
        (lp, grad)
    }

    /// Adds `weight * grad log pi(raw | state)` into `grad` and returns the
    /// log-density.
    pub fn accumulate_log_prob_grad(&self, state: &[f64], raw: &[f64], weight: f64, grad: &mut [f64]) -> f64 {
        self.accumulate_weighted_score(state, raw, grad, |_| weight)
    }

    /// Like [`accumulate_log_prob_grad`](Self::accumulate_log_prob_grad), but
    /// the weight is computed from the log-density, so ratio-dependent
    /// weights need a single forward pass.
    pub fn accumulate_weighted_score(
        &self,
        state: &[f64],
        raw: &[f64],
        grad: &mut [f64],
        weight_of: impl FnOnce(f64) -> f64,
    ) -> f64 {
        let cache = self.net.forward_cached(&self.encoding.encode(state));
        let mean = cache.output();
        let n = self.net.params().len();
        let lp = self.log_density(mean, raw);
        let weight = weight_of(lp);
        if weight == 0.0 {
            return lp;
        }
        let mut dmean = Vec::with_capacity(mean.len());
        for (k, ((m, a), &ls_raw)) in mean.iter().zip(raw).zip(&self.log_std).enumerate() {
            let ls = ls_raw.max(LOG_STD_FLOOR);
            let var = (2.0 * ls).exp();
            let diff = a - m;
            dmean.push(weight * diff / var);
            if ls_raw > LOG_STD_FLOOR {
                grad[n + k] += weight * (diff * diff / var - 1.0);
            }
        }
        {
            self.net.backward(&cache, &dmean, &mut grad[..n]);
        }
        lp
    }

    pub fn is_finite(&self) -> bool {
        self.net.params().iter().chain(&self.log_std).all(|p| p.is_finite())
    }

    /// Controller that applies the clipped mean action.
    pub fn deterministic(&self) -> MeanController<'_> {
        MeanController(self)
    }
}

impl Controller for GaussianPolicy {
    fn act(&self, state: &[f64], rng: &mut SambaRng) -> Action {
        self.sample(state, rng)
    }
}

pub struct MeanController<'a>(&'a GaussianPolicy);

impl Controller for MeanController<'_> {
    fn act(&self, state: &[f64], _rng: &mut SambaRng) -> Action {
        let mean = self.0.mean(state);
        let lp = self.0.log_density(&mean, &mean);
        Action { applied: self.0.clip(&mean), raw: mean, log_prob: lp }
    }
}
