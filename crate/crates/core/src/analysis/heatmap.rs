use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::checkpoint::ModelCheckpoint;
use crate::envs::{Env, SafeEnv};
use crate::error::{Error, Result};
use crate::metrics::{metric_grid, BootstrapWorkspace, EntropyMetric, GridAxis, GridSpec, LooWorkspace, MetricGrid};
use crate::rng_from_seed;
use crate::train::MetricKind;

/// Sidecar written next to a heatmap CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapMeta {
    pub env: String,
    pub metric: String,
    pub spec: GridSpec,
    pub min: f64,
    pub max: f64,
    pub training_points: usize,
    pub usr: [f64; 2],
    pub hazard: [f64; 2],
    /// State dimension holding the monitored angle.
    pub monitored_dim: usize,
}

/// A `resolution x resolution` grid over the monitored angle and its rate,
/// other components at the hanging rest state, zero action.
pub fn default_grid(env: &Env, resolution: usize) -> GridSpec {
    match env {
        Env::Pendulum(p) => GridSpec {
            axes: [
                GridAxis { dim: 0, min: -PI, max: PI, resolution },
                GridAxis { dim: 1, min: -p.max_speed, max: p.max_speed, resolution },
            ],
            base_state: vec![PI, 0.0],
            action: vec![0.0],
        },
        Env::CartpoleDouble(_) => GridSpec {
            axes: [
                GridAxis { dim: 2, min: -PI, max: PI, resolution },
                GridAxis { dim: 3, min: -10.0, max: 10.0, resolution },
            ],
            base_state: vec![0.0, 0.0, PI, 0.0, PI, 0.0],
            action: vec![0.0],
        },
    }
}

fn monitored_dim(env: &Env) -> usize {
    match env {
        Env::Pendulum(_) => 0,
        Env::CartpoleDouble(_) => 2,
    }
}

/// Evaluates `metric` on the grid for a checkpointed model and writes
/// `heatmap_<metric>.csv`, `heatmap_<metric>.json` and `training_inputs.csv`
/// into `out_dir`. `seed` drives the bootstrap partitions.
pub fn heatmap(
    ck: &ModelCheckpoint,
    metric: MetricKind,
    spec: &GridSpec,
    bootstrap_partitions: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<MetricGrid> {
    let model = ck.to_model()?;
    let grid = match metric {
        MetricKind::Loo => metric_grid(&model, &LooWorkspace::new(&model)?, spec)?,
        MetricKind::Bootstrap => {
            let mut rng = rng_from_seed(seed);
            metric_grid(&model, &BootstrapWorkspace::new(&model, bootstrap_partitions, &mut rng)?, spec)?
        }
        MetricKind::Entropy => metric_grid(&model, &EntropyMetric::new(&model), spec)?,
    };
    std::fs::create_dir_all(out_dir)?;
    grid.write_csv(&out_dir.join(format!("heatmap_{}.csv", grid.metric)))?;
    let safety = ck.env.safety();
    let meta = HeatmapMeta {
        env: ck.env.name().to_string(),
        metric: grid.metric.clone(),
        spec: spec.clone(),
        min: grid.values.iter().copied().fold(f64::INFINITY, f64::min),
        max: grid.max(),
        training_points: ck.dataset.len(),
        usr: [safety.usr_min, safety.usr_max],
        hazard: [safety.hz_min(), safety.hz_max()],
        monitored_dim: monitored_dim(&ck.env),
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(out_dir.join(format!("heatmap_{}.json", grid.metric)), json)?;
    write_training_inputs(ck, &out_dir.join("training_inputs.csv"))?;
    Ok(grid)
}

fn write_training_inputs(ck: &ModelCheckpoint, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let sd = ck.encoding.state_dim();
    let mut header: Vec<String> = (0..sd).map(|i| format!("s{i}")).collect();
    header.extend((0..ck.action_dim).map(|i| format!("a{i}")));
    w.write_record(&header)?;
    for (s, a) in ck.dataset.states.iter().zip(&ck.dataset.actions) {
        w.write_record(s.iter().chain(a).map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
