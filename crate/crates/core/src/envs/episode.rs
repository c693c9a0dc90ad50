use std::io::Write;
use std::path::Path;

use super::safety::should_terminate;
use super::SafeEnv;
use crate::SambaRng;

/// Action chosen by a controller.
///
/// `raw` is what the policy sampled; `applied` is `raw` clipped to the
/// environment bounds. `log_prob` is the density of `raw`.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub applied: Vec<f64>,
    pub raw: Vec<f64>,
    pub log_prob: f64,
}

impl Action {
    pub fn deterministic(applied: Vec<f64>) -> Self {
        Self { raw: applied.clone(), applied, log_prob: 0.0 }
    }
}

pub trait Controller {
    fn act(&self, state: &[f64], rng: &mut SambaRng) -> Action;
}

impl<F> Controller for F
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    fn act(&self, state: &[f64], _rng: &mut SambaRng) -> Action {
        Action::deterministic(self(state))
    }
}

/// One transition with its bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub log_prob: f64,
    pub next_state: Vec<f64>,
    pub cost: f64,
    pub safety_loss: f64,
    pub violation: bool,
    /// Pointwise exploration value; zero for real-environment steps.
    pub zeta: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    /// Set when a model rollout was truncated because the state blew up.
    pub diverged: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Number of steps spent inside the unsafe region.
    pub fn violations(&self) -> usize {
        self.steps.iter().filter(|s| s.violation).count()
    }

    /// Undiscounted accumulated safety cost.
    pub fn total_safety_cost(&self) -> f64 {
        self.steps.iter().map(|s| s.safety_loss).sum()
    }

    /// Discounted accumulated safety loss `L(tau)`.
    pub fn safety_loss(&self, gamma: f64) -> f64 {
        discounted_sum(self.steps.iter().map(|s| s.safety_loss), gamma)
    }

    pub fn cost_return(&self, gamma: f64) -> f64 {
        discounted_sum(self.steps.iter().map(|s| s.cost), gamma)
    }

    pub fn zeta_return(&self, gamma: f64) -> f64 {
        discounted_sum(self.steps.iter().map(|s| s.zeta), gamma)
    }

    pub fn costs(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.cost).collect()
    }

    pub fn zetas(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.zeta).collect()
    }
}

fn discounted_sum(values: impl Iterator<Item = f64>, gamma: f64) -> f64 {
    let mut discount = 1.0;
    let mut total = 0.0;
    for v in values {
        total += discount * v;
        discount *= gamma;
    }
    total
}

/// Roll a controller out in the real environment for at most `max_len`
/// steps, applying the environment's early-termination rule.
pub fn run_episode<E, C>(env: &E, controller: &C, max_len: usize, rng: &mut SambaRng) -> Trajectory
where
    E: SafeEnv + ?Sized,
    C: Controller + ?Sized,
{
    let state = env.initial_state(rng);
    run_episode_from(env, controller, state, max_len, rng)
}

pub(crate) fn run_episode_from<E, C>(
    env: &E,
    controller: &C,
    mut state: Vec<f64>,
    max_len: usize,
    rng: &mut SambaRng,
) -> Trajectory
where
    E: SafeEnv + ?Sized,
    C: Controller + ?Sized,
{
    let mut traj = Trajectory::default();
    let mut costs = Vec::with_capacity(max_len);
    for _ in 0..max_len {
        let action = controller.act(&state, rng);
        let next = env.step(&state, &action.applied);
        let cost = env.cost(&state, &action.applied);
        costs.push(cost);
        traj.steps.push(Step {
            safety_loss: env.safety_loss(&state),
            violation: env.is_violation(&state),
            state,
            action: action.applied,
            raw_action: action.raw,
            log_prob: action.log_prob,
            next_state: next.clone(),
            cost,
            zeta: 0.0,
        });
        state = next;
        if env.terminates_early() && should_terminate(&costs) {
            break;
        }
    }
    traj
}

/// Write trajectories as CSV: `traj,t,s0..,a0..,cost,safety_loss,violation,zeta`.
pub fn write_trajectories_csv(path: &Path, trajectories: &[Trajectory]) -> crate::Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    let (sd, ad) = trajectories
        .iter()
        .find_map(|t| t.steps.first())
        .map(|s| (s.state.len(), s.action.len()))
        .unwrap_or((0, 0));
    let mut header = vec!["traj".to_string(), "t".to_string()];
    header.extend((0..sd).map(|i| format!("s{i}")));
    header.extend((0..ad).map(|i| format!("a{i}")));
    header.extend(["cost", "safety_loss", "violation", "zeta"].map(String::from));
    writeln!(out, "{}", header.join(","))?;
    for (k, traj) in trajectories.iter().enumerate() {
        for (t, s) in traj.steps.iter().enumerate() {
            let mut row = vec![k.to_string(), t.to_string()];
            row.extend(s.state.iter().map(|v| v.to_string()));
            row.extend(s.action.iter().map(|v| v.to_string()));
            row.push(s.cost.to_string());
            row.push(s.safety_loss.to_string());
            row.push((s.violation as u8).to_string());
            row.push(s.zeta.to_string());
            writeln!(out, "{}", row.join(","))?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::Pendulum;

    #[test]
    fn single_step_episode() {
        let env = Pendulum::default();
        let mut rng = crate::rng_from_seed(0);
        let policy = |_: &[f64]| vec![0.0];
        let traj = run_episode(&env, &policy, 1, &mut rng);
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.steps[0].next_state, env.step(&traj.steps[0].state, &[0.0]));
    }

    #[test]
    fn stabilised_pendulum_terminates_after_five_steps() {
        let env = Pendulum { init_theta_spread: 0.0, init_speed: 0.0, ..Pendulum::default() };
        let mut rng = crate::rng_from_seed(0);
        let policy = |_: &[f64]| vec![0.0];
        let start = vec![0.0, 0.0];
        let traj = run_episode_from(&env, &policy, start, 30, &mut rng);
        assert_eq!(traj.len(), 5);
    }

    #[test]
    fn accounting_identities() {
        let env = Pendulum::default();
        let mut rng = crate::rng_from_seed(1);
        let policy = |s: &[f64]| vec![if s[1] >= 0.0 { 2.0 } else { -2.0 }];
        let traj = run_episode(&env, &policy, 30, &mut rng);
        let tv = traj
            .steps
            .iter()
            .filter(|s| env.safety.is_violation(s.state[0]))
            .count();
        let tc: f64 = traj.steps.iter().map(|s| env.safety.loss(s.state[0])).sum();
        assert_eq!(traj.violations(), tv);
        assert!((traj.total_safety_cost() - tc).abs() < 1e-15);
    }
}
