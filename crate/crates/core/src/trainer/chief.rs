use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::mpo::{multiplier_from_raw, multiplier_to_raw, DualState, ETA_MAX, ETA_MIN};
use crate::numerics::{l2_norm, AdamConfig, AdamState};
use crate::policy::PolicyParams;
use crate::retrace::Critic;

/// Parameters shared by the chief and every worker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedParams {
    /// Policy `θ`, updated every step.
    pub policy: PolicyParams<f64>,
    /// Reference policy `θ_i`, refreshed at outer-iteration boundaries.
    pub reference: PolicyParams<f64>,
    /// Online critic `φ` and target `φ′`.
    pub critic: Critic,
    /// Softplus parameters of `η`, `η_μ` and `η_Σ`.
    pub eta_raw: f64,
    pub eta_mu_raw: f64,
    pub eta_sigma_raw: f64,
    /// Incremented by every chief update.
    pub version: u64,
}

impl SharedParams {
    pub fn new(policy: PolicyParams<f64>, critic: Critic, eta: f64, eta_mu: f64, eta_sigma: f64) -> Self {
        Self {
            reference: policy.clone(),
            policy,
            critic,
            eta_raw: multiplier_to_raw(eta),
            eta_mu_raw: multiplier_to_raw(eta_mu),
            eta_sigma_raw: multiplier_to_raw(eta_sigma),
            version: 0,
        }
    }

    pub fn eta(&self) -> f64 {
        multiplier_from_raw(self.eta_raw).0.clamp(ETA_MIN, ETA_MAX)
    }

    pub fn eta_mu(&self) -> f64 {
        multiplier_from_raw(self.eta_mu_raw).0
    }

    pub fn eta_sigma(&self) -> f64 {
        multiplier_from_raw(self.eta_sigma_raw).0
    }

    pub fn dual(&self, epsilon: f64, epsilon_mu: f64, epsilon_sigma: f64) -> DualState<f64> {
        DualState { eta: self.eta(), eta_mu: self.eta_mu(), eta_sigma: self.eta_sigma(), epsilon, epsilon_mu, epsilon_sigma }
    }

    /// `θ_i := θ`, `φ′ := φ`.
    pub fn refresh_reference(&mut self) {
        self.reference.net.as_mut_slice().copy_from_slice(self.policy.net.as_slice());
        self.critic.sync_target();
    }
}

/// Descent gradients from one worker, all taken at the same parameter version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBundle {
    pub worker_id: usize,
    /// Parameter version the gradients were computed against.
    pub version: u64,
    pub critic: Vec<f64>,
    pub policy: Vec<f64>,
    pub eta: f64,
    pub eta_mu: f64,
    pub eta_sigma: f64,
}

impl GradientBundle {
    pub fn is_finite(&self) -> bool {
        self.critic.iter().chain(&self.policy).chain([&self.eta, &self.eta_mu, &self.eta_sigma]).all(|g| g.is_finite())
    }
}

/// Arithmetic mean of the bundles, summed in worker-id order.
pub fn mean_bundle(bundles: &[GradientBundle]) -> Result<GradientBundle> {
    let first = bundles.first().ok_or(Error::Empty("gradient bundles"))?;
    let mut order: Vec<&GradientBundle> = bundles.iter().collect();
    order.sort_by_key(|b| b.worker_id);
    let g = bundles.len() as f64;
    let mut mean = GradientBundle {
        worker_id: 0,
        version: first.version,
        critic: vec![0.0; first.critic.len()],
        policy: vec![0.0; first.policy.len()],
        eta: 0.0,
        eta_mu: 0.0,
        eta_sigma: 0.0,
    };
    for b in order {
        ensure_dim("bundle (critic)", mean.critic.len(), b.critic.len())?;
        ensure_dim("bundle (policy)", mean.policy.len(), b.policy.len())?;
        if b.version != mean.version {
            return Err(Error::Fault(format!("worker {} computed against version {}, expected {}", b.worker_id, b.version, mean.version)));
        }
        mean.critic.iter_mut().zip(&b.critic).for_each(|(m, x)| *m += x);
        mean.policy.iter_mut().zip(&b.policy).for_each(|(m, x)| *m += x);
        mean.eta += b.eta;
        mean.eta_mu += b.eta_mu;
        mean.eta_sigma += b.eta_sigma;
    }
    mean.critic.iter_mut().chain(mean.policy.iter_mut()).for_each(|m| *m /= g);
    mean.eta /= g;
    mean.eta_mu /= g;
    mean.eta_sigma /= g;
    Ok(mean)
}

/// Scales `grads` down to Euclidean norm `bound` if it exceeds it.
pub fn clip_norm(grads: &mut [f64], bound: f64) {
    let norm = l2_norm(grads);
    if norm > bound {
        let s = bound / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
}

/// Owns the shared parameters and their optimizer state; applies one Adam step
/// per barrier of exactly `workers` bundles.
#[derive(Debug, Clone)]
pub struct Chief {
    pub params: SharedParams,
    pub workers: usize,
    pub grad_clip: f64,
    critic_adam: AdamState<f64>,
    policy_adam: AdamState<f64>,
    dual_adam: AdamState<f64>,
}

impl Chief {
    pub fn new(params: SharedParams, workers: usize, grad_clip: f64, adam: AdamConfig, dual_adam: AdamConfig) -> Result<Self> {
        if workers == 0 {
            return Err(Error::Domain("at least one worker is required".into()));
        }
        Ok(Self {
            critic_adam: AdamState::new(params.critic.online.num_params(), adam)?,
            policy_adam: AdamState::new(params.policy.net.num_params(), adam)?,
            dual_adam: AdamState::new(3, dual_adam)?,
            params,
            workers,
            grad_clip,
        })
    }

    /// Averages one barrier's worth of bundles and applies the update.
    pub fn aggregate(&mut self, bundles: &[GradientBundle]) -> Result<()> {
        if bundles.len() != self.workers {
            return Err(Error::Fault(format!("expected {} gradient bundles, got {}", self.workers, bundles.len())));
        }
        let mut ids: Vec<usize> = bundles.iter().map(|b| b.worker_id).collect();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != bundles.len() {
            return Err(Error::Fault("duplicate worker id in barrier".into()));
        }
        if let Some(b) = bundles.iter().find(|b| !b.is_finite()) {
            return Err(Error::Fault(format!("non-finite gradient from worker {}", b.worker_id)));
        }
        let mean = mean_bundle(bundles)?;
        self.apply(&mean)
    }

    /// One clipped Adam step on every parameter group from a mean bundle.
    pub fn apply(&mut self, mean: &GradientBundle) -> Result<()> {
        if mean.version != self.params.version {
            return Err(Error::Fault(format!("stale gradients: version {} vs {}", mean.version, self.params.version)));
        }
        let p = &mut self.params;
        ensure_dim("chief (critic)", p.critic.online.num_params(), mean.critic.len())?;
        ensure_dim("chief (policy)", p.policy.net.num_params(), mean.policy.len())?;
        let mut critic = mean.critic.clone();
        let mut policy = mean.policy.clone();
        let mut dual = vec![mean.eta, mean.eta_mu, mean.eta_sigma];
        for g in [&mut critic, &mut policy, &mut dual] {
            clip_norm(g, self.grad_clip);
        }
        self.critic_adam.step(p.critic.online.as_mut_slice(), &critic)?;
        self.policy_adam.step(p.policy.net.as_mut_slice(), &policy)?;
        let mut raw = [p.eta_raw, p.eta_mu_raw, p.eta_sigma_raw];
        self.dual_adam.step(&mut raw, &dual)?;
        [p.eta_raw, p.eta_mu_raw, p.eta_sigma_raw] = raw;
        p.version += 1;
        Ok(())
    }
}
