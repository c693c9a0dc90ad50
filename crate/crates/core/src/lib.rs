//! Safe, active, model-based reinforcement learning.
//!
//! The crate is organised around the pieces of the training loop:
//!
//! - [`gp`]: exact Gaussian-process dynamics models (ARD RBF kernel,
//!   marginal-likelihood fitting, batched posterior prediction).
//! - [`metrics`]: the leave-one-out and bootstrap information metrics used
//!   for safe active exploration, plus the entropy baseline.
//! - [`envs`]: safety-augmented pendulum and cart double-pendulum.
//! - [`policy`]: Gaussian MLP policy and value critics with hand-written
//!   reverse-mode gradients.
//! - [`solver`]: empirical CVaR, min-norm bi-objective weighting, the
//!   Lagrange multiplier schedule and the clipped policy update.
//! - [`train`]: the outer model-based loop.
//! - [`analysis`]: evaluation, heatmaps, trace export and run comparison.

pub mod analysis;
pub mod checkpoint;
pub mod envs;
pub mod error;
pub mod gp;
pub mod metrics;
pub mod policy;
pub mod solver;
pub mod train;

pub use error::{Error, Result};

/// Random number generator used throughout; seeded explicitly everywhere.
pub type SambaRng = rand_chacha::ChaCha8Rng;

/// Construct the crate RNG from a seed.
pub fn rng_from_seed(seed: u64) -> SambaRng {
    use rand::SeedableRng;
    SambaRng::seed_from_u64(seed)
}
