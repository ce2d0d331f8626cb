use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};

/// Built-in continuous-control task identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvId {
    PointMass,
    Pendulum,
}

impl EnvId {
    pub fn name(self) -> &'static str {
        match self {
            EnvId::PointMass => "point_mass",
            EnvId::Pendulum => "pendulum",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "point_mass" => Some(EnvId::PointMass),
            "pendulum" => Some(EnvId::Pendulum),
            _ => None,
        }
    }
}

/// 2-D double integrator driven by a bounded force, quadratic cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMassConfig {
    pub dt: f64,
    pub horizon: usize,
    pub max_force: f64,
    pub init_range: f64,
    pub position_cost: f64,
    pub velocity_cost: f64,
    pub action_cost: f64,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 200,
            max_force: 1.0,
            init_range: 1.0,
            position_cost: 1.0,
            velocity_cost: 0.1,
            action_cost: 0.01,
        }
    }
}

/// Torque-limited uniform rod pivoting at one end. Angle 0 is upright; episodes
/// start hanging down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendulumConfig {
    pub dt: f64,
    pub horizon: usize,
    pub gravity: f64,
    pub mass: f64,
    pub length: f64,
    pub max_torque: f64,
    pub max_speed: f64,
    pub init_angle_noise: f64,
    pub init_speed_noise: f64,
    pub velocity_cost: f64,
    pub torque_cost: f64,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 200,
            gravity: 10.0,
            mass: 1.0,
            length: 1.0,
            max_torque: 2.0,
            max_speed: 8.0,
            init_angle_noise: 0.1,
            init_speed_noise: 0.1,
            velocity_cost: 0.1,
            torque_cost: 0.001,
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub terminal: bool,
}

/// A continuous-state, continuous-action task. Physical state and observation
/// differ for the pendulum, where the angle is observed through `(cos, sin)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContinuousEnv {
    PointMass(PointMassConfig),
    Pendulum(PendulumConfig),
}

impl ContinuousEnv {
    pub fn new(id: EnvId) -> Self {
        match id {
            EnvId::PointMass => ContinuousEnv::PointMass(PointMassConfig::default()),
            EnvId::Pendulum => ContinuousEnv::Pendulum(PendulumConfig::default()),
        }
    }

    pub fn id(&self) -> EnvId {
        match self {
            ContinuousEnv::PointMass(_) => EnvId::PointMass,
            ContinuousEnv::Pendulum(_) => EnvId::Pendulum,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (dt, horizon, bound) = match self {
            ContinuousEnv::PointMass(c) => (c.dt, c.horizon, c.max_force),
            ContinuousEnv::Pendulum(c) => {
                if !(c.mass > 0.0 && c.length > 0.0 && c.max_speed > 0.0) {
                    return Err(Error::Domain("pendulum mass, length and max speed must be positive".into()));
                }
                (c.dt, c.horizon, c.max_torque)
            }
        };
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Domain(format!("dt must be positive, got {dt}")));
        }
        if horizon == 0 {
            return Err(Error::Domain("horizon must be at least 1".into()));
        }
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::Domain(format!("action bound must be positive and finite, got {bound}")));
        }
        Ok(())
    }

    pub fn state_dim(&self) -> usize {
        match self {
            ContinuousEnv::PointMass(_) => 4,
            ContinuousEnv::Pendulum(_) => 2,
        }
    }

    pub fn observation_dim(&self) -> usize {
        match self {
            ContinuousEnv::PointMass(_) => 4,
            ContinuousEnv::Pendulum(_) => 3,
        }
    }

    pub fn action_dim(&self) -> usize {
        match self {
            ContinuousEnv::PointMass(_) => 2,
            ContinuousEnv::Pendulum(_) => 1,
        }
    }

    /// Symmetric per-dimension action bound.
    pub fn action_bound(&self) -> f64 {
        match self {
            ContinuousEnv::PointMass(c) => c.max_force,
            ContinuousEnv::Pendulum(c) => c.max_torque,
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ContinuousEnv::PointMass(c) => c.horizon,
            ContinuousEnv::Pendulum(c) => c.horizon,
        }
    }

    pub fn clip_action(&self, action: &[f64]) -> Vec<f64> {
        let b = self.action_bound();
        action.iter().map(|a| a.clamp(-b, b)).collect()
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        match self {
            ContinuousEnv::PointMass(c) => {
                let r = c.init_range;
                vec![rng.gen_range(-r..=r), rng.gen_range(-r..=r), 0.0, 0.0]
            }
            ContinuousEnv::Pendulum(c) => {
                let angle = wrap_angle(std::f64::consts::PI + rng.gen_range(-c.init_angle_noise..=c.init_angle_noise));
                let speed = rng.gen_range(-c.init_speed_noise..=c.init_speed_noise);
                vec![angle, speed]
            }
        }
    }

    pub fn observe(&self, state: &[f64]) -> Vec<f64> {
        match self {
            ContinuousEnv::PointMass(_) => state.to_vec(),
            ContinuousEnv::Pendulum(_) => vec![state[0].cos(), state[0].sin(), state[1]],
        }
    }

    /// Advance one step. Actions outside the bounds are clipped; the reward is
    /// charged on the pre-step state and the clipped action.
    pub fn step(&self, state: &[f64], action: &[f64]) -> Result<StepOutcome> {
        ensure_dim("environment state", self.state_dim(), state.len())?;
        ensure_dim("environment action", self.action_dim(), action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("non-finite action".into()));
        }
        let u = self.clip_action(action);
        let outcome = match self {
            ContinuousEnv::PointMass(c) => {
                let (p, v) = (&state[..2], &state[2..]);
                let cost = c.position_cost * (p[0] * p[0] + p[1] * p[1])
                    + c.velocity_cost * (v[0] * v[0] + v[1] * v[1])
                    + c.action_cost * (u[0] * u[0] + u[1] * u[1]);
                let dt = c.dt;
                let next = vec![
                    p[0] + v[0] * dt + 0.5 * u[0] * dt * dt,
                    p[1] + v[1] * dt + 0.5 * u[1] * dt * dt,
                    v[0] + u[0] * dt,
                    v[1] + u[1] * dt,
                ];
                StepOutcome { next_state: next, reward: -cost, terminal: false }
            }
            ContinuousEnv::Pendulum(c) => {
                let angle = wrap_angle(state[0]);
                let cost = angle * angle + c.velocity_cost * state[1] * state[1] + c.torque_cost * u[0] * u[0];
                let (theta, speed) = pendulum_rk4(c, state[0], state[1], u[0]);
                StepOutcome {
                    next_state: vec![wrap_angle(theta), speed.clamp(-c.max_speed, c.max_speed)],
                    reward: -cost,
                    terminal: false,
                }
            }
        };
        if !outcome.reward.is_finite() || outcome.next_state.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("environment produced a non-finite state or reward".into()));
        }
        Ok(outcome)
    }

    /// Mechanical energy of a pendulum state (zero torque conserves it).
    pub fn pendulum_energy(config: &PendulumConfig, state: &[f64]) -> f64 {
        let inertia = config.mass * config.length * config.length / 3.0;
        0.5 * inertia * state[1] * state[1] + 0.5 * config.mass * config.gravity * config.length * state[0].cos()
    }
}

fn pendulum_accel(c: &PendulumConfig, theta: f64, torque: f64) -> f64 {
    1.5 * c.gravity / c.length * theta.sin() + 3.0 * torque / (c.mass * c.length * c.length)
}

fn pendulum_rk4(c: &PendulumConfig, theta: f64, speed: f64, torque: f64) -> (f64, f64) {
    let h = c.dt;
    let f = |th: f64, w: f64| (w, pendulum_accel(c, th, torque));
    let k1 = f(theta, speed);
    let k2 = f(theta + 0.5 * h * k1.0, speed + 0.5 * h * k1.1);
    let k3 = f(theta + 0.5 * h * k2.0, speed + 0.5 * h * k2.1);
    let k4 = f(theta + h * k3.0, speed + h * k3.1);
    (
        theta + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        speed + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
    )
}

/// Map an angle to `[-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let wrapped = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped < -PI {
        wrapped + 2.0 * PI
    } else {
        wrapped
    }
}
