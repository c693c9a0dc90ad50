use std::path::Path;

use rand::Rng;

use crate::envs::SafeEnv;
use crate::error::Result;
use crate::gp::GpModel;
use crate::train::DIVERGENCE_BOUND;
use crate::SambaRng;

/// A real trajectory under random actions and model traces replaying them.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceExport {
    pub actions: Vec<Vec<f64>>,
    /// `horizon + 1` states.
    pub real: Vec<Vec<f64>>,
    /// Per model trace, its states; shorter than `horizon + 1` if it diverged.
    pub model: Vec<Vec<Vec<f64>>>,
}

/// Records one real rollout with uniform random actions, then replays those
/// actions open loop through `n_traces` sampled model rollouts from the same
/// initial state.
pub fn export_traces<E: SafeEnv + ?Sized>(
    model: &GpModel,
    env: &E,
    n_traces: usize,
    horizon: usize,
    rng: &mut SambaRng,
) -> Result<TraceExport> {
    let bound = env.action_bound();
    let x0 = env.initial_state(rng);
    let mut real = vec![x0.clone()];
    let mut actions = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let a: Vec<f64> = (0..env.action_dim()).map(|_| rng.random_range(-bound..=bound)).collect();
        real.push(env.step(real.last().unwrap(), &a));
        actions.push(a);
    }
    let mut traces = Vec::with_capacity(n_traces);
    for _ in 0..n_traces {
        let mut states = vec![x0.clone()];
        for a in &actions {
            let next = model.step(states.last().unwrap(), a, rng)?;
            if next.iter().any(|x| !x.is_finite() || x.abs() > DIVERGENCE_BOUND) {
                break;
            }
            states.push(next);
        }
        traces.push(states);
    }
    Ok(TraceExport { actions, real, model: traces })
}

impl TraceExport {
    /// Columns `source,trace,t,s*,a*`; the action at the last step is empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let sd = self.real[0].len();
        let ad = self.actions.first().map_or(0, Vec::len);
        let mut header = vec!["source".to_string(), "trace".into(), "t".into()];
        header.extend((0..sd).map(|i| format!("s{i}")));
        header.extend((0..ad).map(|i| format!("a{i}")));
        w.write_record(&header)?;
        let mut write = |source: &str, k: usize, states: &[Vec<f64>]| -> Result<()> {
            for (t, s) in states.iter().enumerate() {
                let mut row = vec![source.to_string(), k.to_string(), t.to_string()];
                row.extend(s.iter().map(|v| v.to_string()));
                match self.actions.get(t) {
                    Some(a) => row.extend(a.iter().map(|v| v.to_string())),
                    None => row.extend(std::iter::repeat_n(String::new(), ad)),
                }
                w.write_record(&row)?;
            }
            Ok(())
        };
        write("real", 0, &self.real)?;
        for (k, m) in self.model.iter().enumerate() {
            write("model", k, m)?;
        }
        w.flush()?;
        Ok(())
    }
}
