use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoding::{wrap_angle, StateEncoding};
use super::safety::SafetySpec;
use super::SafeEnv;
use crate::SambaRng;

/// Cart with a double pendulum (point masses on massless rods), `theta = 0`
/// upright for both poles. Pole angles are absolute.
///
/// State is `(x, x_dot, theta1, theta1_dot, theta2, theta2_dot)`. Equations of
/// motion come from the Lagrangian of the cart/double-pole system and are
/// integrated with classical RK4.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CartPoleDouble {
    pub gravity: f64,
    pub cart_mass: f64,
    pub mass1: f64,
    pub mass2: f64,
    pub length1: f64,
    pub length2: f64,
    pub dt: f64,
    /// RK4 substeps per control step.
    pub substeps: usize,
    pub max_force: f64,
    pub init_noise: f64,
    pub safety: SafetySpec,
}

impl Default for CartPoleDouble {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            cart_mass: 0.5,
            mass1: 0.5,
            mass2: 0.5,
            length1: 0.6,
            length2: 0.6,
            dt: 0.05,
            substeps: 1,
            max_force: 10.0,
            init_noise: 0.1,
            safety: SafetySpec {
                scale: super::safety::default_loss_scale(0.95, 30),
                ..SafetySpec::default()
            },
        }
    }
}

type State6 = [f64; 6];

impl CartPoleDouble {
    /// Time derivative of the state under a constant horizontal force.
    pub fn derivative(&self, s: &State6, force: f64) -> State6 {
        let (m0, m1, m2) = (self.cart_mass, self.mass1, self.mass2);
        let (l1, l2, g) = (self.length1, self.length2, self.gravity);
        let [_, xd, t1, t1d, t2, t2d] = *s;
        let (s1, c1) = t1.sin_cos();
        let (s2, c2) = t2.sin_cos();
        let (s12, c12) = (t1 - t2).sin_cos();
        let m12 = m1 + m2;

        let mass = Matrix3::new(
            m0 + m12,
            m12 * l1 * c1,
            m2 * l2 * c2,
            m12 * l1 * c1,
            m12 * l1 * l1,
            m2 * l1 * l2 * c12,
            m2 * l2 * c2,
            m2 * l1 * l2 * c12,
            m2 * l2 * l2,
        );
        let rhs = Vector3::new(
            force + m12 * l1 * s1 * t1d * t1d + m2 * l2 * s2 * t2d * t2d,
            m12 * g * l1 * s1 - m2 * l1 * l2 * s12 * t2d * t2d,
            m2 * g * l2 * s2 + m2 * l1 * l2 * s12 * t1d * t1d,
        );
        // The mass matrix is symmetric positive definite for positive masses.
        let acc = mass
            .cholesky()
            .expect("cart double-pendulum mass matrix is SPD")
            .solve(&rhs);
        [xd, acc[0], t1d, acc[1], t2d, acc[2]]
    }

    fn rk4(&self, s: &State6, force: f64, h: f64) -> State6 {
        let add = |a: &State6, k: &State6, c: f64| -> State6 {
            let mut out = *a;
            for i in 0..6 {
                out[i] += c * k[i];
            }
            out
        };
        let k1 = self.derivative(s, force);
        let k2 = self.derivative(&add(s, &k1, 0.5 * h), force);
        let k3 = self.derivative(&add(s, &k2, 0.5 * h), force);
        let k4 = self.derivative(&add(s, &k3, h), force);
        let mut out = *s;
        for i in 0..6 {
            out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// One control step without angle wrapping.
    pub fn integrate(&self, s: &State6, force: f64) -> State6 {
        let f = force.clamp(-self.max_force, self.max_force);
        let n = self.substeps.max(1);
        let h = self.dt / n as f64;
        let mut cur = *s;
        for _ in 0..n {
            cur = self.rk4(&cur, f, h);
        }
        cur
    }

    /// Total mechanical energy.
    pub fn energy(&self, s: &State6) -> f64 {
        let (m0, m1, m2) = (self.cart_mass, self.mass1, self.mass2);
        let (l1, l2, g) = (self.length1, self.length2, self.gravity);
        let [_, xd, t1, t1d, t2, t2d] = *s;
        let v1x = xd + l1 * t1.cos() * t1d;
        let v1y = -l1 * t1.sin() * t1d;
        let v2x = v1x + l2 * t2.cos() * t2d;
        let v2y = v1y - l2 * t2.sin() * t2d;
        let kinetic = 0.5 * m0 * xd * xd
            + 0.5 * m1 * (v1x * v1x + v1y * v1y)
            + 0.5 * m2 * (v2x * v2x + v2y * v2y);
        let potential = g * (m1 * l1 * t1.cos() + m2 * (l1 * t1.cos() + l2 * t2.cos()));
        kinetic + potential
    }

    /// Position of the outer pole tip.
    pub fn tip(&self, s: &[f64]) -> (f64, f64) {
        (
            s[0] + self.length1 * s[2].sin() + self.length2 * s[4].sin(),
            self.length1 * s[2].cos() + self.length2 * s[4].cos(),
        )
    }
}

impl SafeEnv for CartPoleDouble {
    fn name(&self) -> &'static str {
        "cartpole_double"
    }

    fn state_dim(&self) -> usize {
        6
    }

    fn action_dim(&self) -> usize {
        1
    }

    fn action_bound(&self) -> f64 {
        self.max_force
    }

    fn encoding(&self) -> StateEncoding {
        StateEncoding::new(6, &[2, 4])
    }

    fn initial_state(&self, rng: &mut SambaRng) -> Vec<f64> {
        let mut noise = || {
            if self.init_noise > 0.0 {
                rng.random_range(-self.init_noise..=self.init_noise)
            } else {
                0.0
            }
        };
        vec![
            noise(),
            noise(),
            wrap_angle(PI + noise()),
            noise(),
            wrap_angle(PI + noise()),
            noise(),
        ]
    }

    fn step(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        let s: State6 = state.try_into().expect("cart double-pendulum state has 6 components");
        let mut next = self.integrate(&s, action[0]);
        next[2] = wrap_angle(next[2]);
        next[4] = wrap_angle(next[4]);
        next.to_vec()
    }

    fn cost(&self, state: &[f64], _action: &[f64]) -> f64 {
        let (tx, ty) = self.tip(state);
        let dy = ty - (self.length1 + self.length2);
        tx * tx + dy * dy
    }

    fn monitored_angle(&self, state: &[f64]) -> f64 {
        state[2]
    }

    fn safety(&self) -> &SafetySpec {
        &self.safety
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hanging_rest_is_stable() {
        let env = CartPoleDouble::default();
        let s = vec![0.0, 0.0, PI - 0.0, 0.0, PI, 0.0];
        let mut cur = s.clone();
        for _ in 0..50 {
            cur = env.step(&cur, &[0.0]);
        }
        assert!(cur[0].abs() < 1e-9 && cur[1].abs() < 1e-9);
        assert!((cur[2].abs() - PI).abs() < 1e-9 && (cur[4].abs() - PI).abs() < 1e-9);
        assert!(cur[3].abs() < 1e-9 && cur[5].abs() < 1e-9);
    }

    fn energy_drift(substeps: usize) -> f64 {
        let env = CartPoleDouble { substeps, ..CartPoleDouble::default() };
        let mut s: State6 = [0.1, 0.2, PI - 0.4, 0.3, PI + 0.3, -0.2];
        let e0 = env.energy(&s);
        let mut worst: f64 = 0.0;
        for _ in 0..50 {
            s = env.integrate(&s, 0.0);
            worst = worst.max((env.energy(&s) - e0).abs());
        }
        worst
    }

    #[test]
    fn energy_drift_shrinks_at_fourth_order() {
        // A wrong mass matrix or force term shows up as drift that does not
        // vanish with the step size.
        let (d1, d2, d4) = (energy_drift(2), energy_drift(4), energy_drift(8));
        assert!(d1 / d2 > 12.0 && d2 / d4 > 12.0, "drifts {d1} {d2} {d4}");
        assert!(d4 < 1e-6, "drift {d4}");
    }

    #[test]
    fn mirror_symmetry() {
        let env = CartPoleDouble::default();
        let s = [0.3, -0.2, 2.5, 0.7, -2.9, 1.1];
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let a = env.step(&s, &[3.0]);
        let b = env.step(&neg, &[-3.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x + y).abs() < 1e-12, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn cost_zero_at_upright() {
        let env = CartPoleDouble::default();
        assert!(env.cost(&[0.0; 6], &[0.0]).abs() < 1e-15);
        let hanging = env.cost(&[0.0, 0.0, PI, 0.0, PI, 0.0], &[0.0]);
        assert!((hanging - (2.0 * (env.length1 + env.length2)).powi(2)).abs() < 1e-12);
    }
}
