use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{Normalizer, TransitionDataset};
use super::fit::{optimize_hyperparams, FitTrace, GpFitConfig};
use super::kernel::KernelHyperparams;
use super::process::{Covariance, ExactGp};
use crate::envs::StateEncoding;
use crate::error::{invalid_arg, Error, Result};
use crate::SambaRng;

/// Posterior per output dimension, in normalised delta space.
#[derive(Debug, Clone, PartialEq)]
pub struct GpPosterior {
    pub mean: Vec<DVector<f64>>,
    pub cov: Vec<Covariance>,
}

/// Report from fitting a dynamics model.
#[derive(Debug, Clone)]
pub struct FitReport {
    pub traces: Vec<FitTrace>,
    pub fit_points: usize,
}

/// Multi-output GP transition model.
///
/// Inputs are `(encoded state, action)` and targets are successor-state
/// deltas; both are standardised with statistics frozen at fit time. Each
/// output dimension is an independent exact GP with its own hyperparameters.
#[derive(Debug, Clone)]
pub struct GpModel {
    encoding: StateEncoding,
    action_dim: usize,
    data: TransitionDataset,
    input_norm: Normalizer,
    target_norm: Normalizer,
    outputs: Vec<ExactGp>,
}

impl GpModel {
    /// Fit hyperparameters by maximising the exact marginal likelihood, then
    /// condition on the full dataset. `warm_start` continues from a previous
    /// optimum with `refit_iterations`; otherwise `optimization_iterations`
    /// are run from unit lengthscales.
    pub fn fit(
        data: &TransitionDataset,
        encoding: &StateEncoding,
        action_dim: usize,
        cfg: &GpFitConfig,
        warm_start: Option<&[KernelHyperparams]>,
        rng: &mut SambaRng,
    ) -> Result<(Self, FitReport)> {
        if data.len() < 2 {
            return invalid_arg(format!("need at least 2 transitions to fit, got {}", data.len()));
        }
        data.validate()?;
        let raw_x = data.feature_matrix(encoding, action_dim);
        let raw_y = data.target_matrix();
        let input_norm = Normalizer::fit(&raw_x);
        let target_norm = Normalizer::fit(&raw_y);
        let x = input_norm.apply_matrix(&raw_x);
        let y = target_norm.apply_matrix(&raw_y);

        let n = x.nrows();
        let subset: Option<Vec<usize>> = (n > cfg.max_fit_points).then(|| {
            let mut idx = sample(rng, n, cfg.max_fit_points).into_vec();
            idx.sort_unstable();
            idx
        });
        let (fx, fy) = match &subset {
            Some(idx) => (x.select_rows(idx), y.select_rows(idx)),
            None => (x.clone(), y.clone()),
        };

        let iterations = if warm_start.is_some() {
            cfg.refit_iterations
        } else {
            cfg.optimization_iterations
        };
        let mut outputs = Vec::with_capacity(y.ncols());
        let mut traces = Vec::with_capacity(y.ncols());
        for d in 0..y.ncols() {
            let init = match warm_start {
                Some(hps) if hps.len() == y.ncols() && hps[d].dim() == x.ncols() => hps[d].clone(),
                _ => KernelHyperparams::isotropic(x.ncols(), cfg.initial_noise),
            };
            let (hp, trace) =
                optimize_hyperparams(&fx, &fy.column(d).into_owned(), &init, iterations, cfg);
            let gp = ExactGp::condition(x.clone(), y.column(d).into_owned(), hp)
                .map_err(|e| Error::ModelFit(format!("output {d}: {e}")))?;
            outputs.push(gp);
            traces.push(trace);
        }
        let model = Self {
            encoding: encoding.clone(),
            action_dim,
            data: data.clone(),
            input_norm,
            target_norm,
            outputs,
        };
        Ok((model, FitReport { traces, fit_points: fx.nrows() }))
    }

    /// Condition on `data` with given hyperparameters and normalisation.
    pub fn from_parts(
        data: TransitionDataset,
        encoding: StateEncoding,
        action_dim: usize,
        input_norm: Normalizer,
        target_norm: Normalizer,
        hyperparams: Vec<KernelHyperparams>,
    ) -> Result<Self> {
        data.validate()?;
        let in_dim = encoding.encoded_dim() + action_dim;
        let out_dim = encoding.state_dim();
        if input_norm.dim() != in_dim || target_norm.dim() != out_dim || hyperparams.len() != out_dim {
            return invalid_arg("normalisation or hyperparameter dimensions do not match the encoding");
        }
        let x = if data.is_empty() {
            DMatrix::zeros(0, in_dim)
        } else {
            input_norm.apply_matrix(&data.feature_matrix(&encoding, action_dim))
        };
        let y = if data.is_empty() {
            DMatrix::zeros(0, out_dim)
        } else {
            target_norm.apply_matrix(&data.target_matrix())
        };
        let outputs = hyperparams
            .into_iter()
            .enumerate()
            .map(|(d, hp)| ExactGp::condition(x.clone(), y.column(d).into_owned(), hp))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { encoding, action_dim, data, input_norm, target_norm, outputs })
    }

    /// Condition on `data` with fixed hyperparameters, normalising with
    /// statistics computed from `data`.
    pub fn with_hyperparams(
        data: &TransitionDataset,
        encoding: &StateEncoding,
        action_dim: usize,
        hyperparams: Vec<KernelHyperparams>,
    ) -> Result<Self> {
        let in_dim = encoding.encoded_dim() + action_dim;
        let (input_norm, target_norm) = if data.is_empty() {
            (Normalizer::identity(in_dim), Normalizer::identity(encoding.state_dim()))
        } else {
            (
                Normalizer::fit(&data.feature_matrix(encoding, action_dim)),
                Normalizer::fit(&data.target_matrix()),
            )
        };
        Self::from_parts(data.clone(), encoding.clone(), action_dim, input_norm, target_norm, hyperparams)
    }

    pub fn encoding(&self) -> &StateEncoding {
        &self.encoding
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn state_dim(&self) -> usize {
        self.encoding.state_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.encoding.encoded_dim() + self.action_dim
    }

    pub fn dataset(&self) -> &TransitionDataset {
        &self.data
    }

    pub fn input_normalizer(&self) -> &Normalizer {
        &self.input_norm
    }

    pub fn target_normalizer(&self) -> &Normalizer {
        &self.target_norm
    }

    pub fn outputs(&self) -> &[ExactGp] {
        &self.outputs
    }

    pub fn hyperparams(&self) -> Vec<KernelHyperparams> {
        self.outputs.iter().map(|g| g.hyperparams().clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Normalised GP input for a state-action pair.
    pub fn featurize(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.input_dim());
        self.encoding.encode_into(state, &mut f);
        f.extend_from_slice(action);
        self.input_norm.apply(&mut f);
        f
    }

    pub fn featurize_batch(&self, states: &[Vec<f64>], actions: &[Vec<f64>]) -> DMatrix<f64> {
        let d = self.input_dim();
        let mut buf = Vec::with_capacity(states.len() * d);
        for (s, a) in states.iter().zip(actions) {
            buf.extend(self.featurize(s, a));
        }
        DMatrix::from_row_slice(states.len(), d, &buf)
    }

    /// Training inputs in normalised feature space.
    pub fn training_features(&self) -> &DMatrix<f64> {
        self.outputs[0].inputs()
    }

    pub fn predict(&self, queries: &DMatrix<f64>, full_cov: bool) -> Result<GpPosterior> {
        let mut mean = Vec::with_capacity(self.outputs.len());
        let mut cov = Vec::with_capacity(self.outputs.len());
        for gp in &self.outputs {
            let (m, c) = gp.predict(queries, full_cov)?;
            mean.push(m);
            cov.push(c);
        }
        Ok(GpPosterior { mean, cov })
    }

    /// Sum over output dimensions of the exact log marginal likelihood.
    pub fn marginal_log_likelihood(&self) -> f64 {
        self.outputs.iter().map(|g| g.log_marginal_likelihood()).sum()
    }

    /// Per-output gradients with respect to the log hyperparameters.
    pub fn marginal_log_likelihood_grad(&self) -> Vec<Vec<f64>> {
        self.outputs.iter().map(|g| g.log_marginal_likelihood_grad()).collect()
    }

    /// Turn a per-dimension Gaussian over normalised deltas into one sampled
    /// successor state.
    pub fn sample_successor(
        &self,
        state: &[f64],
        mean: &[f64],
        var: &[f64],
        rng: &mut SambaRng,
    ) -> Vec<f64> {
        let mut delta: Vec<f64> = mean
            .iter()
            .zip(var)
            .map(|(&m, &v)| {
                let z: f64 = StandardNormal.sample(rng);
                m + v.max(0.0).sqrt() * z
            })
            .collect();
        self.target_norm.invert(&mut delta);
        self.encoding.apply_delta(state, &delta)
    }

    /// Mean successor state (no sampling).
    pub fn mean_successor(&self, state: &[f64], mean: &[f64]) -> Vec<f64> {
        let mut delta = mean.to_vec();
        self.target_norm.invert(&mut delta);
        self.encoding.apply_delta(state, &delta)
    }

    /// Sample a successor from the model: predict the normalised delta per
    /// dimension, draw independently, denormalise and add to the state.
    pub fn step(&self, state: &[f64], action: &[f64], rng: &mut SambaRng) -> Result<Vec<f64>> {
        let q = DMatrix::from_row_slice(1, self.input_dim(), &self.featurize(state, action));
        let post = self.predict(&q, false)?;
        let mean: Vec<f64> = post.mean.iter().map(|m| m[0]).collect();
        let var: Vec<f64> = post.cov.iter().map(|c| c.variances()[0]).collect();
        Ok(self.sample_successor(state, &mean, &var, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{Pendulum, SafeEnv};
    use rand::Rng;

    fn pendulum_data(n: usize, seed: u64) -> (TransitionDataset, StateEncoding) {
        let env = Pendulum::default();
        let enc = env.encoding();
        let mut rng = crate::rng_from_seed(seed);
        let mut ds = TransitionDataset::default();
        for _ in 0..n {
            let s = vec![rng.random_range(-3.0..3.0), rng.random_range(-4.0..4.0)];
            let a = vec![rng.random_range(-2.0..2.0)];
            let next = env.step(&s, &a);
            ds.push(&enc, &s, &a, &next);
        }
        (ds, enc)
    }

    #[test]
    fn fit_requires_two_points() {
        let (ds, enc) = pendulum_data(1, 0);
        let mut rng = crate::rng_from_seed(0);
        assert!(GpModel::fit(&ds, &enc, 1, &GpFitConfig::default(), None, &mut rng).is_err());
    }

    #[test]
    fn zero_variance_step_is_state_plus_mean_delta() {
        let (ds, enc) = pendulum_data(30, 1);
        let mut rng = crate::rng_from_seed(1);
        let (model, _) = GpModel::fit(&ds, &enc, 1, &GpFitConfig::default(), None, &mut rng).unwrap();
        let s = [2.0, 0.5];
        let mean = [0.3, -0.2];
        let next = model.sample_successor(&s, &mean, &[0.0, 0.0], &mut rng);
        assert_eq!(next, model.mean_successor(&s, &mean));
    }

    #[test]
    fn seeded_steps_are_reproducible() {
        let (ds, enc) = pendulum_data(30, 2);
        let mut rng = crate::rng_from_seed(2);
        let (model, _) = GpModel::fit(&ds, &enc, 1, &GpFitConfig::default(), None, &mut rng).unwrap();
        let a = model.step(&[1.0, 0.2], &[0.5], &mut crate::rng_from_seed(9)).unwrap();
        let b = model.step(&[1.0, 0.2], &[0.5], &mut crate::rng_from_seed(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn learns_pendulum_one_step_dynamics() {
        let (ds, enc) = pendulum_data(120, 3);
        let mut rng = crate::rng_from_seed(3);
        let (model, report) =
            GpModel::fit(&ds, &enc, 1, &GpFitConfig::default(), None, &mut rng).unwrap();
        assert!(report.traces.iter().all(|t| t.final_mll >= t.initial_mll));
        let env = Pendulum::default();
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            let s = vec![rng.random_range(-2.5..2.5), rng.random_range(-3.0..3.0)];
            let a = vec![rng.random_range(-1.5..1.5)];
            let q = DMatrix::from_row_slice(1, 4, &model.featurize(&s, &a));
            let post = model.predict(&q, false).unwrap();
            let mean: Vec<f64> = post.mean.iter().map(|m| m[0]).collect();
            let pred = model.mean_successor(&s, &mean);
            let truth = env.step(&s, &a);
            worst = worst.max(enc.delta(&truth, &pred).iter().map(|v| v.abs()).fold(0.0, f64::max));
        }
        assert!(worst < 0.05, "max one-step error {worst}");
    }
}
