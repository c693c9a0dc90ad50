//! Versioned JSON checkpoints for dynamics models and policy bundles.

use std::fs;
use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envs::{Env, StateEncoding};
use crate::error::{Error, Result};
use crate::gp::{GpModel, KernelHyperparams, Normalizer, TransitionDataset};
use crate::policy::PolicyBundle;
use crate::solver::SolverState;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to rebuild a fitted [`GpModel`] exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub env: Env,
    pub encoding: StateEncoding,
    pub action_dim: usize,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub hyperparams: Vec<KernelHyperparams>,
    pub dataset: TransitionDataset,
}

impl ModelCheckpoint {
    pub fn from_model(model: &GpModel, env: &Env) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            env: env.clone(),
            encoding: model.encoding().clone(),
            action_dim: model.action_dim(),
            input_norm: model.input_normalizer().clone(),
            target_norm: model.target_normalizer().clone(),
            hyperparams: model.hyperparams(),
            dataset: model.dataset().clone(),
        }
    }

    pub fn to_model(&self) -> Result<GpModel> {
        GpModel::from_parts(
            self.dataset.clone(),
            self.encoding.clone(),
            self.action_dim,
            self.input_norm.clone(),
            self.target_norm.clone(),
            self.hyperparams.clone(),
        )
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = load_json(path)?;
        check_version(c.version)?;
        Ok(c)
    }
}

/// Policy, critics and solver state after an env-iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyCheckpoint {
    pub version: u32,
    pub env: Env,
    pub env_iteration: usize,
    pub bundle: PolicyBundle,
    pub solver: SolverState,
}

impl PolicyCheckpoint {
    pub fn new(env: &Env, env_iteration: usize, bundle: &PolicyBundle, solver: &SolverState) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            env: env.clone(),
            env_iteration,
            bundle: bundle.clone(),
            solver: solver.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        save_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = load_json(path)?;
        check_version(c.version)?;
        Ok(c)
    }
}

fn check_version(v: u32) -> Result<()> {
    if v != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {v}")));
    }
    Ok(())
}

/// Writes pretty JSON and returns its SHA-256 as lowercase hex.
fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<String> {
    let bytes = serde_json::to_vec_pretty(value).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
