//! Policy improvement: the sample-based E-step (temperature dual and weights),
//! the KL-constrained M-step, and the parametric E-step variant.

mod estep;
mod mstep;
mod parametric;

pub use estep::{dual_value_and_grad, estep_kl, estep_weights, eta_gradient_step, solve_eta, EStepBatch, ETA_MAX, ETA_MIN};
pub use mstep::{
    alternate_mstep, mean_kl, mstep_lagrangian, mstep_update, multiplier_from_raw, multiplier_to_raw, AlternationConfig,
    DualState, MStepOutput, SampleBatch,
};
pub use parametric::{parametric_estep_grad, parametric_lagrangian, weighted_advantages};
