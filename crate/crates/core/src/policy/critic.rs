use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use super::optim::{clip_grad_norm, Optimizer};
use crate::envs::StateEncoding;
use crate::error::{invalid_arg, Result};
use crate::SambaRng;

/// State-value network trained on Monte-Carlo targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    encoding: StateEncoding,
    net: Mlp,
}

impl Critic {
    pub fn new(encoding: StateEncoding, rng: &mut SambaRng) -> Result<Self> {
        let net = Mlp::orthogonal(&Mlp::standard_sizes(encoding.encoded_dim(), 1), 1.0, rng)?;
        Ok(Self { encoding, net })
    }

    pub fn from_net(encoding: StateEncoding, net: Mlp) -> Result<Self> {
        if net.input_dim() != encoding.encoded_dim() || net.output_dim() != 1 {
            return invalid_arg("critic network shape does not match the encoding");
        }
        Ok(Self { encoding, net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn params(&self) -> &[f64] {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        self.net.params_mut()
    }

    pub fn value(&self, state: &[f64]) -> f64 {
        self.net.forward(&self.encoding.encode(state))[0]
    }

    /// Mean of `0.5 (V(x) - target)^2` over the batch and its gradient.
    pub fn loss_grad(&self, states: &[Vec<f64>], targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        if states.is_empty() || states.len() != targets.len() {
            return invalid_arg(format!("{} states for {} targets", states.len(), targets.len()));
        }
        let n = states.len() as f64;
        let mut grad = vec![0.0; self.net.params().len()];
        let mut loss = 0.0;
        for (s, t) in states.iter().zip(targets) {
            let cache = self.net.forward_cached(&self.encoding.encode(s));
            let err = cache.output()[0] - t;
            loss += 0.5 * err * err / n;
            self.net.backward(&cache, &[err / n], &mut grad);
        }
        Ok((loss, grad))
    }

    /// One optimiser step on the squared loss; returns the pre-step loss.
    pub fn update(
        &mut self,
        states: &[Vec<f64>],
        targets: &[f64],
        opt: &mut Optimizer,
        max_grad_norm: Option<f64>,
    ) -> Result<f64> {
        let (loss, mut grad) = self.loss_grad(states, targets)?;
        if let Some(c) = max_grad_norm {
            clip_grad_norm(&mut grad, c);
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(crate::Error::InvalidState("non-finite critic gradient".into()));
        }
        opt.step(self.net.params_mut(), &grad);
        Ok(loss)
    }

    /// `epochs` full-batch steps; returns the loss before each step.
    pub fn fit(
        &mut self,
        states: &[Vec<f64>],
        targets: &[f64],
        opt: &mut Optimizer,
        epochs: usize,
        max_grad_norm: Option<f64>,
    ) -> Result<Vec<f64>> {
        (0..epochs).map(|_| self.update(states, targets, opt, max_grad_norm)).collect()
    }
}
