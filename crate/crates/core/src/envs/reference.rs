use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::control::{ContinuousEnv, PendulumConfig};
use crate::error::Result;

/// Fraction of the gap between the do-nothing return and the reference return
/// that a learner must close to count as solving a task.
pub const SOLVE_FRACTION: f64 = 0.9;

/// Hand-designed feedback controllers used as a yardstick for learned policies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceController {
    /// `u = −kp·p − kd·v` per axis.
    Pd { kp: f64, kd: f64 },
    /// Energy pumping towards the upright energy level, switching to PD
    /// stabilization once within `switch_angle` of upright.
    EnergyPd { k_energy: f64, kp: f64, kd: f64, switch_angle: f64 },
    Zero,
}

impl ReferenceController {
    /// Action from an observation (before clipping).
    pub fn act(&self, env: &ContinuousEnv, obs: &[f64]) -> Vec<f64> {
        match (*self, env) {
            (ReferenceController::Zero, _) => vec![0.0; env.action_dim()],
            (ReferenceController::Pd { kp, kd }, _) => {
                let n = env.action_dim();
                (0..n).map(|i| -kp * obs[i] - kd * obs[n + i]).collect()
            }
            (ReferenceController::EnergyPd { k_energy, kp, kd, switch_angle }, ContinuousEnv::Pendulum(c)) => {
                let theta = obs[1].atan2(obs[0]);
                let speed = obs[2];
                if theta.abs() < switch_angle {
                    vec![-kp * theta - kd * speed]
                } else {
                    let target = 0.5 * c.mass * c.gravity * c.length;
                    let energy = ContinuousEnv::pendulum_energy(c, &[theta, speed]);
                    let direction = if speed >= 0.0 { 1.0 } else { -1.0 };
                    vec![k_energy * (target - energy) * direction]
                }
            }
            (ReferenceController::EnergyPd { .. }, _) => vec![0.0; env.action_dim()],
        }
    }
}

/// Seeded initial states shared by every controller being compared.
pub fn evaluation_starts(env: &ContinuousEnv, episodes: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..episodes).map(|_| env.reset(&mut rng)).collect()
}

/// Undiscounted return of one episode from `start` under `act(observation)`.
pub fn episode_return<F>(env: &ContinuousEnv, start: &[f64], mut act: F) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let mut state = start.to_vec();
    let mut total = 0.0;
    for _ in 0..env.horizon() {
        let action = act(&env.observe(&state))?;
        let out = env.step(&state, &action)?;
        total += out.reward;
        state = out.next_state;
        if out.terminal {
            break;
        }
    }
    Ok(total)
}

/// Mean return of `controller` over `starts`.
pub fn controller_return(env: &ContinuousEnv, controller: ReferenceController, starts: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for s in starts {
        total += episode_return(env, s, |obs| Ok(controller.act(env, obs)))?;
    }
    Ok(total / starts.len() as f64)
}

fn candidates(env: &ContinuousEnv) -> Vec<ReferenceController> {
    let gains = |lo: f64, hi: f64, n: usize| -> Vec<f64> {
        (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
    };
    let mut out = Vec::new();
    match env {
        ContinuousEnv::PointMass(_) => {
            for kp in gains(0.25, 64.0, 17) {
                for kd in gains(0.25, 32.0, 15) {
                    out.push(ReferenceController::Pd { kp, kd });
                }
            }
        }
        ContinuousEnv::Pendulum(PendulumConfig { .. }) => {
            for k_energy in gains(0.05, 50.0, 10) {
                for kp in gains(4.0, 128.0, 6) {
                    for kd in gains(0.5, 32.0, 7) {
                        for switch_angle in [0.1, 0.2, 0.3, 0.4, 0.5, 0.7, 0.9, 1.2] {
                            out.push(ReferenceController::EnergyPd { k_energy, kp, kd, switch_angle });
                        }
                    }
                }
            }
        }
    }
    out
}

/// Grid-search the controller family for `env`, returning the best controller
/// and its mean return over `starts`.
pub fn tune_reference(env: &ContinuousEnv, starts: &[Vec<f64>]) -> Result<(ReferenceController, f64)> {
    let mut best = (ReferenceController::Zero, controller_return(env, ReferenceController::Zero, starts)?);
    for c in candidates(env) {
        let r = controller_return(env, c, starts)?;
        if r > best.1 {
            best = (c, r);
        }
    }
    Ok(best)
}

/// Return a learner must exceed: `zero + SOLVE_FRACTION · (reference − zero)`.
pub fn solve_threshold(zero_return: f64, reference_return: f64) -> f64 {
    zero_return + SOLVE_FRACTION * (reference_return - zero_return)
}

/// Solve threshold for `env` on the given evaluation starts, with the tuned
/// reference controller and its return.
pub fn reference_threshold(env: &ContinuousEnv, starts: &[Vec<f64>]) -> Result<(f64, ReferenceController, f64)> {
    let zero = controller_return(env, ReferenceController::Zero, starts)?;
    let (controller, reference) = tune_reference(env, starts)?;
    Ok((solve_threshold(zero, reference), controller, reference))
}
