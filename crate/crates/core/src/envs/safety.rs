use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid_arg, Result};

/// Unsafe region, surrounding hazard region and the shape of the safety loss.
///
/// The hazard region extends the unsafe region by a quarter turn on each side.
/// The safety loss is a tent over the hazard region: zero at its edges, `scale`
/// at its centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetySpec {
    pub usr_min: f64,
    pub usr_max: f64,
    pub scale: f64,
}

/// Hazard margin on each side of the unsafe region.
pub const HAZARD_MARGIN: f64 = PI / 4.0;

impl Default for SafetySpec {
    fn default() -> Self {
        Self {
            usr_min: 20.0 * PI / 180.0,
            usr_max: 30.0 * PI / 180.0,
            scale: default_loss_scale(0.99, 30),
        }
    }
}

/// Scale at which a trajectory of `horizon` steps pinned at the hazard centre
/// accumulates a discounted safety loss of exactly one.
pub fn default_loss_scale(gamma: f64, horizon: usize) -> f64 {
    let total: f64 = (0..horizon).map(|t| gamma.powi(t as i32)).sum();
    1.0 / total
}

impl SafetySpec {
    pub fn new(usr_min: f64, usr_max: f64, scale: f64) -> Result<Self> {
        let spec = Self { usr_min, usr_max, scale };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.usr_min.is_finite() && self.usr_max.is_finite() && self.usr_min < self.usr_max) {
            return invalid_arg(format!(
                "unsafe region must satisfy usr_min < usr_max, got [{}, {}]",
                self.usr_min, self.usr_max
            ));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return invalid_arg(format!("safety loss scale must be >= 0, got {}", self.scale));
        }
        Ok(())
    }

    pub fn hz_min(&self) -> f64 {
        self.usr_min - HAZARD_MARGIN
    }

    pub fn hz_max(&self) -> f64 {
        self.usr_max + HAZARD_MARGIN
    }

    pub fn hazard_centre(&self) -> f64 {
        0.5 * (self.hz_min() + self.hz_max())
    }

    pub fn hazard_half_width(&self) -> f64 {
        0.5 * (self.hz_max() - self.hz_min())
    }

    /// Safety loss for a monitored angle already wrapped to `[-pi, pi]`.
    pub fn loss(&self, theta: f64) -> f64 {
        let dist = (theta - self.hazard_centre()).abs();
        self.scale * (1.0 - dist / self.hazard_half_width()).max(0.0)
    }

    /// Closed unsafe interval.
    pub fn is_violation(&self, theta: f64) -> bool {
        self.usr_min <= theta && theta <= self.usr_max
    }

    pub fn in_hazard(&self, theta: f64) -> bool {
        self.hz_min() <= theta && theta <= self.hz_max()
    }
}

/// Early-termination rule: the last `TERMINATION_WINDOW` costs are all at most
/// `TERMINATION_COST` (equivalently, rewards all at least `-0.01`).
pub const TERMINATION_WINDOW: usize = 5;
pub const TERMINATION_COST: f64 = 0.01;

pub fn should_terminate(costs: &[f64]) -> bool {
    costs.len() >= TERMINATION_WINDOW
        && costs[costs.len() - TERMINATION_WINDOW..]
            .iter()
            .all(|&c| c <= TERMINATION_COST)
}
