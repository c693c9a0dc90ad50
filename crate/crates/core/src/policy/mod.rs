//! Gaussian policy, value critics and their optimisers.

mod critic;
mod gaussian;
mod mlp;
mod optim;
mod returns;

use serde::{Deserialize, Serialize};

pub use critic::Critic;
pub use gaussian::{GaussianPolicy, MeanController, INITIAL_LOG_STD, LOG_STD_FLOOR};
pub use mlp::{Mlp, MlpCache, HIDDEN_UNITS};
pub use optim::{clip_grad_norm, Optimizer, OptimizerKind};
pub use returns::{gae, mc_returns, normalize};

use crate::envs::SafeEnv;
use crate::error::Result;
use crate::SambaRng;

/// Policy plus the cost critic and the exploration critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyBundle {
    pub policy: GaussianPolicy,
    pub cost_critic: Critic,
    pub zeta_critic: Critic,
}

impl PolicyBundle {
    pub fn for_env<E: SafeEnv + ?Sized>(env: &E, rng: &mut SambaRng) -> Result<Self> {
        Ok(Self {
            policy: GaussianPolicy::for_env(env, rng)?,
            cost_critic: Critic::new(env.encoding(), rng)?,
            zeta_critic: Critic::new(env.encoding(), rng)?,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.policy.is_finite()
            && self.cost_critic.params().iter().all(|p| p.is_finite())
            && self.zeta_critic.params().iter().all(|p| p.is_finite())
    }
}
