use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{wrap_angle, StateEncoding};
use super::safety::SafetySpec;
use super::SafeEnv;
use crate::SambaRng;

/// Frictionless torque-limited pendulum, `theta = 0` upright.
///
/// State is `(theta, theta_dot)`. Dynamics are
/// `theta_ddot = 3g/(2l) sin(theta) + 3u/(m l^2)` integrated with
/// semi-implicit Euler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Pendulum {
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub dt: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub goal_theta: f64,
    pub speed_cost: f64,
    pub action_cost: f64,
    /// Initial angle is drawn uniformly within this distance of hanging down.
    pub init_theta_spread: f64,
    /// Initial angular speed is drawn uniformly from `[-init_speed, init_speed]`.
    pub init_speed: f64,
    pub safety: SafetySpec,
}

impl Default for Pendulum {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            mass: 1.0,
            length: 1.0,
            dt: 0.05,
            max_torque: 2.0,
            max_speed: 8.0,
            goal_theta: 0.0,
            speed_cost: 0.1,
            action_cost: 0.001,
            init_theta_spread: PI / 2.0,
            init_speed: 0.5,
            safety: SafetySpec::default(),
        }
    }
}

impl Pendulum {
    /// Angular acceleration of the continuous system.
    pub fn acceleration(&self, theta: f64, torque: f64) -> f64 {
        3.0 * self.gravity / (2.0 * self.length) * theta.sin()
            + 3.0 * torque / (self.mass * self.length * self.length)
    }

    pub fn step_state(&self, theta: f64, theta_dot: f64, torque: f64) -> (f64, f64) {
        let u = torque.clamp(-self.max_torque, self.max_torque);
        let new_dot = (theta_dot + self.acceleration(theta, u) * self.dt)
            .clamp(-self.max_speed, self.max_speed);
        (wrap_angle(theta + new_dot * self.dt), new_dot)
    }

    /// `E = 0.5 theta_dot^2 + 3g/(2l) cos(theta)`, conserved when uncontrolled.
    pub fn energy(&self, theta: f64, theta_dot: f64) -> f64 {
        0.5 * theta_dot * theta_dot + 3.0 * self.gravity / (2.0 * self.length) * theta.cos()
    }
}

impl SafeEnv for Pendulum {
    fn name(&self) -> &'static str {
        "pendulum"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        self.max_torque
    }

    fn encoding(&self) -> StateEncoding {
        StateEncoding::new(2, &[0])
    }

    fn initial_state(&self, rng: &mut SambaRng) -> Vec<f64> {
        let offset = if self.init_theta_spread > 0.0 {
            rng.random_range(-self.init_theta_spread..=self.init_theta_spread)
        } else {
            0.0
        };
        let speed = if self.init_speed > 0.0 {
            rng.random_range(-self.init_speed..=self.init_speed)
        } else {
            0.0
        };
        vec![wrap_angle(PI + offset), speed]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let (theta, theta_dot) = self.step_state(state[0], state[1], action[0]);
        vec![theta, theta_dot]
    }

    fn cost(&self, state: &[f64], action: &[f64]) -> f64 {
        let err = wrap_angle(state[0] - self.goal_theta);
        let u = action[0].clamp(-self.max_torque, self.max_torque);
        err * err + self.speed_cost * state[1] * state[1] + self.action_cost * u * u
    }

    fn monitored_angle(&self, state: &[f64]) -> f64 {
        state[0]
    }

    fn safety(&self) -> &SafetySpec {
        &self.safety
    }

    fn terminates_early(&self) -> bool {
        true
    }
}
