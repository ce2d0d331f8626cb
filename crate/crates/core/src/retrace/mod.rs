//! Trajectory replay, the critic and its target copy, and Retrace targets.

mod buffer;
mod critic;
mod tabular;
mod targets;

pub use buffer::{ReplayBuffer, TrajectoryWindow};
pub use critic::{critic_update, Critic, CriticInput, CriticNet, QFunction};
pub use tabular::{exact_retrace_operator, one_hot, tabular_trajectory, TabularPolicy, TabularQ};
pub use targets::{
    candidate_actions, retrace_from_parts, retrace_targets, trace_coefficient, ActionSet, PolicyHeads, WindowBatch,
    WindowSpan,
};
