//! Safety-augmented control environments.

mod cartpole;
mod encoding;
mod episode;
mod pendulum;
mod safety;

use serde::{Deserialize, Serialize};

pub use cartpole::CartPoleDouble;
pub use encoding::{wrap_angle, StateEncoding};
pub use episode::{run_episode, write_trajectories_csv, Action, Controller, Step, Trajectory};
pub use pendulum::Pendulum;
pub use safety::{
    default_loss_scale, should_terminate, SafetySpec, HAZARD_MARGIN, TERMINATION_COST,
    TERMINATION_WINDOW,
};

use crate::SambaRng;

/// A control environment with a monitored angle and an unsafe region.
pub trait SafeEnv {
    fn name(&self) -> &'static str;
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    /// Symmetric bound applied to every action component.
    fn action_bound(&self) -> f64;
    fn encoding(&self) -> StateEncoding;
    /// Draw from the initial-state distribution.
    fn initial_state(&self, rng: &mut SambaRng) -> Vec<f64>;
    fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64>;
    fn cost(&self, state: &[f64], action: &[f64]) -> f64;
    /// The angle checked against the safety spec, wrapped to `[-pi, pi]`.
    fn monitored_angle(&self, state: &[f64]) -> f64;
    fn safety(&self) -> &SafetySpec;

    /// Whether real rollouts stop once the agent has stabilised.
    fn terminates_early(&self) -> bool {
        false
    }

    fn safety_loss(&self, state: &[f64]) -> f64 {
        self.safety().loss(self.monitored_angle(state))
    }

    fn is_violation(&self, state: &[f64]) -> bool {
        self.safety().is_violation(self.monitored_angle(state))
    }
}

/// Environments selectable from a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Env {
    Pendulum(Pendulum),
    CartpoleDouble(CartPoleDouble),
}

impl Default for Env {
    fn default() -> Self {
        Env::Pendulum(Pendulum::default())
    }
}

impl Env {
    fn inner(&self) -> &dyn SafeEnv {
        match self {
            Env::Pendulum(p) => p,
            Env::CartpoleDouble(c) => c,
        }
    }

    pub fn validate(&self) -> crate::Result<()> {
        self.safety().validate()
    }
}

impl SafeEnv for Env {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn state_dim(&self) -> usize {
        self.inner().state_dim()
    }
    fn action_dim(&self) -> usize {
        self.inner().action_dim()
    }
    fn action_bound(&self) -> f64 {
        self.inner().action_bound()
    }
    fn encoding(&self) -> StateEncoding {
        self.inner().encoding()
    }
    fn initial_state(&self, rng: &mut SambaRng) -> Vec<f64> {
        self.inner().initial_state(rng)
    }
    fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        self.inner().step(state, action)
    }
    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        self.inner().cost(state, action)
    }
    fn monitored_angle(&self, state: &[f64]) -> f64 {
        self.inner().monitored_angle(state)
    }
    fn safety(&self) -> &SafetySpec {
        self.inner().safety()
    }
    fn terminates_early(&self) -> bool {
        self.inner().terminates_early()
    }
}
