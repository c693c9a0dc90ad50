//! Constrained bi-objective policy optimisation: CVaR estimation, min-norm
//! weighting of the cost and exploration gradients, the dual variable and
//! the clipped policy update.

mod cvar;
mod update;
mod weighting;

pub use cvar::{cvar_empirical, cvar_gradient, cvar_objective, tail_weights, CvarConfig, CvarEstimate};
pub use update::{
    objective_gradients, policy_update, surrogate, PolicyBatch, PolicySample, PolicyUpdateConfig,
    PolicyUpdateReport, SurrogateWeights,
};
pub use weighting::{combine, min_norm_lambda, update_lambda_cvar, MinNorm, SolverState};
