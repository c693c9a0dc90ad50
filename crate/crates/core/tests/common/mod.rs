#![allow(dead_code)]

use rand::Rng;
use samba::envs::{SafeEnv, SafetySpec, StateEncoding};
use samba::train::RunConfig;
use samba::SambaRng;

/// One-dimensional integrator `x' = x + 0.1 a` whose initial state is one
/// of ten fixed points around the origin. The monitored angle is `x`.
#[derive(Debug, Clone, Default)]
pub struct LineEnv {
    pub safety: SafetySpec,
}

impl LineEnv {
    pub const STARTS: usize = 10;
}

impl SafeEnv for LineEnv {
    fn name(&self) -> &'static str {
        "line"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn action_bound(&self) -> f64 {
        1.0
    }
    fn encoding(&self) -> StateEncoding {
        StateEncoding::new(1, &[])
    }
    fn initial_state(&self, rng: &mut SambaRng) -> Vec<f64> {
        let k = rng.random_range(0..Self::STARTS);
        vec![0.1 * k as f64 - 0.45]
    }
    fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        vec![state[0] + 0.1 * action[0].clamp(-1.0, 1.0)]
    }
    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        state[0] * state[0] + 0.01 * action[0] * action[0]
    }
    fn monitored_angle(&self, state: &[f64]) -> f64 {
        state[0]
    }
    fn safety(&self) -> &SafetySpec {
        &self.safety
    }
}

/// An environment whose state never leaves the middle of the unsafe region.
#[derive(Debug, Clone, Default)]
pub struct PinnedEnv {
    pub safety: SafetySpec,
}

impl SafeEnv for PinnedEnv {
    fn name(&self) -> &'static str {
        "pinned"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn action_dim(&self) -> usize {
        1
    }
    fn action_bound(&self) -> f64 {
        1.0
    }
    fn encoding(&self) -> StateEncoding {
        StateEncoding::new(1, &[0])
    }
    fn initial_state(&self, _rng: &mut SambaRng) -> Vec<f64> {
        vec![0.5 * (self.safety.usr_min + self.safety.usr_max)]
    }
    fn step(&self, state: &[f64], _action: &[f64]) -> Vec<f64> {
        state.to_vec()
    }
    fn cost(&self, _state: &[f64], _action: &[f64]) -> f64 {
        1.0
    }
    fn monitored_angle(&self, state: &[f64]) -> f64 {
        state[0]
    }
    fn safety(&self) -> &SafetySpec {
        &self.safety
    }
}

/// A small config that runs the whole loop in well under a second per
/// iteration.
pub fn quick_config(j: usize, k: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.runner.env_iterations = j;
    cfg.runner.control_iterations = k;
    cfg.runner.model_traces = 4;
    cfg.runner.max_len = 10;
    cfg.dynamics_model.optimization_iterations = 40;
    cfg.dynamics_model.refit_iterations = 10;
    cfg.agent.critic_epochs = 5;
    cfg.agent.policy.epochs = 5;
    cfg
}
