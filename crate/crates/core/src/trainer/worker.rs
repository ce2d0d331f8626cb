use rand::Rng;

use super::chief::{GradientBundle, SharedParams};
use super::config::{EtaSolver, TrainConfig, VariationalMode};
use crate::error::{Error, Result};
use crate::mpo::{
    dual_value_and_grad, estep_weights, mstep_update, multiplier_from_raw, parametric_estep_grad, solve_eta, weighted_advantages,
    EStepBatch, SampleBatch,
};
use crate::numerics::Matrix;
use crate::retrace::{critic_update, ReplayBuffer, WindowBatch};

/// Diagnostics from one worker pass.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WorkerStats {
    pub q_loss: f64,
    /// Temperature used for the E-step weights (NaN in parametric mode).
    pub eta: f64,
    /// Dual value `g(η)` at that temperature (NaN in parametric mode).
    pub dual_value: f64,
    pub kl_mean: f64,
    pub kl_cov: f64,
}

/// One mini-batch pass: critic, E-step and M-step (or parametric E-step)
/// gradients at the snapshot `params`, as descent directions on the shared
/// parameters.
pub fn worker_iteration<R: Rng + ?Sized>(
    worker_id: usize,
    params: &SharedParams,
    replay: &ReplayBuffer,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<(GradientBundle, WorkerStats)> {
    if replay.is_empty() {
        return Err(Error::Empty("replay buffer"));
    }
    let windows = replay.sample_windows(config.retrace.batch_windows, config.retrace.steps, rng)?;
    // Bootstrap values, E-step samples and importance ratios all use θ_i and φ′.
    let batch = WindowBatch::evaluate(&windows, &params.reference, &params.critic.target_q(), config.mpo.action_samples, rng)?;
    let targets = batch.targets(config.rl.gamma)?;
    let (q_loss, critic_grad) = critic_update(&params.critic, batch.taken_pairs(), &targets)?;

    let rows: Vec<usize> = batch.transition_rows().collect();
    let state_dim = params.policy.state_dim();
    let states = Matrix::from_vec(rows.len(), state_dim, rows.iter().flat_map(|&r| batch.states[r].iter().copied()).collect())?;
    let reference = rows.iter().map(|&r| batch.heads[r].clone()).collect();
    let actions = rows.iter().map(|&r| batch.candidates[r].actions.clone()).collect();
    let q: Vec<Vec<f64>> = rows.iter().map(|&r| batch.candidates[r].q.clone()).collect();
    let log_weights: Vec<Vec<f64>> = rows.iter().map(|&r| batch.candidates[r].log_weights.clone()).collect();

    let mpo = &config.mpo;
    let mut dual = params.dual(mpo.epsilon, mpo.epsilon_mu, mpo.epsilon_sigma);
    let (out, eta_grad, stats_eta, dual_value) = match mpo.mode {
        VariationalMode::Nonparametric => {
            let estep = EStepBatch::new(q, log_weights)?;
            let eta_grad = match mpo.eta_solver {
                EtaSolver::Gradient => {
                    let (_, dg) = dual_value_and_grad(dual.eta, &estep, mpo.epsilon)?;
                    dg * multiplier_from_raw(params.eta_raw).1
                }
                EtaSolver::Bisection => {
                    dual.eta = solve_eta(&estep, mpo.epsilon)?;
                    0.0
                }
            };
            let (g, _) = dual_value_and_grad(dual.eta, &estep, mpo.epsilon)?;
            let weights = estep_weights(dual.eta, &estep)?;
            let sample = SampleBatch::new(states, reference, actions, weights)?;
            (mstep_update(&params.policy, &sample, &dual)?, eta_grad, dual.eta, g)
        }
        VariationalMode::Parametric => {
            let values = weighted_advantages(&q, &log_weights);
            let sample = SampleBatch::new(states, reference, actions, values)?;
            (parametric_estep_grad(&params.policy, &sample, &dual)?, 0.0, f64::NAN, f64::NAN)
        }
    };

    // The Lagrangian is ascended in θ and descended in the multipliers.
    let bundle = GradientBundle {
        worker_id,
        version: params.version,
        critic: critic_grad.into_vec(),
        policy: out.policy_grad.as_slice().iter().map(|g| -g).collect(),
        eta: eta_grad,
        eta_mu: out.eta_mu_grad * multiplier_from_raw(params.eta_mu_raw).1,
        eta_sigma: out.eta_sigma_grad * multiplier_from_raw(params.eta_sigma_raw).1,
    };
    if !bundle.is_finite() {
        return Err(Error::Fault(format!("worker {worker_id} produced a non-finite gradient")));
    }
    let stats = WorkerStats { q_loss, eta: stats_eta, dual_value, kl_mean: out.kl_mean, kl_cov: out.kl_cov };
    Ok((bundle, stats))
}
