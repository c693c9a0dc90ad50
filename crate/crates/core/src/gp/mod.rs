//! Exact Gaussian-process dynamics models.

mod dataset;
mod fit;
mod kernel;
mod model;
mod process;

pub use dataset::{Normalizer, TransitionDataset};
pub use fit::{optimize_hyperparams, FitTrace, GpFitConfig};
pub use kernel::{rbf_kernel, KernelHyperparams};
pub use model::{FitReport, GpModel, GpPosterior};
pub use process::{Covariance, ExactGp, GpFactors, JITTER_LADDER};
