//! Tabular MDPs with exact evaluation, and two small continuous-control tasks.

mod control;
mod reference;
mod tabular;

pub use control::{wrap_angle, ContinuousEnv, EnvId, PendulumConfig, PointMassConfig, StepOutcome};
pub use reference::{
    controller_return, episode_return, evaluation_starts, reference_threshold, solve_threshold, tune_reference,
    ReferenceController, SOLVE_FRACTION,
};
pub use tabular::{policy_value, sample_index, state_values, tabular_exact_q, TabularMdp};

use serde::{Deserialize, Serialize};

use crate::action::Action;

/// One stored environment interaction.
///
/// `action` is what the environment executed (clipped to bounds); `sampled_action`
/// is the raw policy draw whose log-probability is `behavior_log_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Action<f64>,
    pub sampled_action: Action<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub behavior_log_prob: f64,
    pub terminal: bool,
}
