use crate::action::Action;
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{AdamConfig, AdamState, Matrix, MlpParams};
use crate::policy::{kl_categorical, kl_categorical_grad_new, kl_decoupled, kl_decoupled_grad_new, Head, HeadGrad, PolicyParams};
use crate::scalar::{lit, softplus, softplus_inverse, sigmoid, Scalar};

/// Temperatures, Lagrange multipliers and their bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualState<T> {
    pub eta: T,
    pub eta_mu: T,
    pub eta_sigma: T,
    pub epsilon: T,
    pub epsilon_mu: T,
    pub epsilon_sigma: T,
}

impl<T: Scalar> DualState<T> {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |x: T| x.is_finite() && x >= T::zero();
        if !(finite_nonneg(self.eta_mu) && finite_nonneg(self.eta_sigma)) {
            return Err(Error::Numeric(format!("multipliers {} / {}", self.eta_mu, self.eta_sigma)));
        }
        if !(self.eta >= lit(super::ETA_MIN) && self.eta <= lit(super::ETA_MAX)) {
            return Err(Error::Domain(format!("temperature {} outside its bounds", self.eta)));
        }
        for e in [self.epsilon, self.epsilon_mu, self.epsilon_sigma] {
            if !(e > T::zero() && e.is_finite()) {
                return Err(Error::Domain(format!("KL bound must be positive, got {e}")));
            }
        }
        Ok(())
    }
}

/// States, the reference policy at each of them, and per-state action sets with
/// a value per action (E-step weights for the M-step, advantages for the
/// parametric E-step). Actions were drawn from, or enumerate, the reference.
#[derive(Debug, Clone)]
pub struct SampleBatch<T> {
    pub states: Matrix<T>,
    pub reference: Vec<Head<T>>,
    pub actions: Vec<Vec<Action<T>>>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> SampleBatch<T> {
    pub fn new(states: Matrix<T>, reference: Vec<Head<T>>, actions: Vec<Vec<Action<T>>>, values: Vec<Vec<T>>) -> Result<Self> {
        let n = states.rows();
        if n == 0 {
            return Err(Error::Empty("sample batch"));
        }
        ensure_dim("sample batch (reference heads)", n, reference.len())?;
        ensure_dim("sample batch (actions)", n, actions.len())?;
        ensure_dim("sample batch (values)", n, values.len())?;
        for (a, v) in actions.iter().zip(&values) {
            ensure_dim("sample batch (values per state)", a.len(), v.len())?;
            if a.is_empty() {
                return Err(Error::Empty("sample batch action set"));
            }
        }
        Ok(Self { states, reference, actions, values })
    }

    pub fn n_states(&self) -> usize {
        self.states.rows()
    }
}

/// Result of one M-step gradient evaluation.
#[derive(Debug, Clone)]
pub struct MStepOutput<T> {
    /// `∂L/∂θ`, to be ascended.
    pub policy_grad: MlpParams<T>,
    /// `∂L/∂η_μ = ε_μ − C_μ` and `∂L/∂η_Σ = ε_Σ − C_Σ`, to be descended.
    pub eta_mu_grad: T,
    pub eta_sigma_grad: T,
    pub kl_mean: T,
    pub kl_cov: T,
    pub log_likelihood: T,
    pub lagrangian: T,
}

/// Per-state KL terms `(C_μ, C_Σ)` of `KL(reference ‖ new)`. A categorical head
/// has a single KL, reported as the mean term.
fn kl_terms<T: Scalar>(reference: &Head<T>, new: &Head<T>) -> Result<(T, T)> {
    match (reference, new) {
        (Head::Gaussian(o), Head::Gaussian(n)) => kl_decoupled(o, n),
        (Head::Categorical(o), Head::Categorical(n)) => Ok((kl_categorical(o, n)?, T::zero())),
        _ => Err(Error::Domain("reference and policy heads differ in kind".into())),
    }
}

/// Gradient of the M-step Lagrangian
/// `mean_s Σ_j w_sj log π_θ(a_sj|s) + η_μ(ε_μ − C_μ) + η_Σ(ε_Σ − C_Σ)`.
pub fn mstep_update<T: Scalar>(policy: &PolicyParams<T>, batch: &SampleBatch<T>, dual: &DualState<T>) -> Result<MStepOutput<T>> {
    let fwd = policy.forward_batch(&batch.states)?;
    let n = lit::<T>(batch.n_states() as f64);
    let (mut loglik, mut c_mu, mut c_sigma) = (T::zero(), T::zero(), T::zero());
    let mut head_grads = Vec::with_capacity(batch.n_states());
    for s in 0..batch.n_states() {
        let head = &fwd.heads[s];
        let mut g = HeadGrad::zeros_for(head);
        for (a, &w) in batch.actions[s].iter().zip(&batch.values[s]) {
            let (lp, lg) = head.log_prob_grad(a)?;
            loglik += w * lp;
            g.add_scaled(&lg, w);
        }
        match (&batch.reference[s], head) {
            (Head::Gaussian(o), Head::Gaussian(h)) => {
                let ((m, c), gm, gc) = kl_decoupled_grad_new(o, h)?;
                c_mu += m;
                c_sigma += c;
                g.add_scaled(&HeadGrad::Gaussian(gm), -dual.eta_mu);
                g.add_scaled(&HeadGrad::Gaussian(gc), -dual.eta_sigma);
            }
            (Head::Categorical(o), Head::Categorical(h)) => {
                let (k, gk) = kl_categorical_grad_new(o, h)?;
                c_mu += k;
                g.add_scaled(&HeadGrad::Categorical(gk), -dual.eta_mu);
            }
            _ => return Err(Error::Domain("reference and policy heads differ in kind".into())),
        }
        head_grads.push(g);
    }
    let inv_n = T::one() / n;
    head_grads.iter_mut().for_each(|g| g.scale(inv_n));
    let policy_grad = policy.backward_batch(&fwd, &head_grads)?;
    let (loglik, c_mu, c_sigma) = (loglik * inv_n, c_mu * inv_n, c_sigma * inv_n);
    let eta_sigma_grad = if is_categorical(policy) { T::zero() } else { dual.epsilon_sigma - c_sigma };
    let out = MStepOutput {
        policy_grad,
        eta_mu_grad: dual.epsilon_mu - c_mu,
        eta_sigma_grad,
        kl_mean: c_mu,
        kl_cov: c_sigma,
        log_likelihood: loglik,
        lagrangian: loglik + dual.eta_mu * (dual.epsilon_mu - c_mu) + dual.eta_sigma * eta_sigma_grad,
    };
    if !out.lagrangian.is_finite() || out.policy_grad.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite M-step gradient".into()));
    }
    Ok(out)
}

fn is_categorical<T>(policy: &PolicyParams<T>) -> bool {
    matches!(policy.head, crate::policy::HeadKind::Categorical { .. })
}

/// Value of the M-step Lagrangian, computed independently of the gradient path.
pub fn mstep_lagrangian<T: Scalar>(policy: &PolicyParams<T>, batch: &SampleBatch<T>, dual: &DualState<T>) -> Result<T> {
    let heads = policy.heads(&batch.states)?;
    let n = lit::<T>(batch.n_states() as f64);
    let (mut loglik, mut c_mu, mut c_sigma) = (T::zero(), T::zero(), T::zero());
    for (s, head) in heads.iter().enumerate() {
        for (a, &w) in batch.actions[s].iter().zip(&batch.values[s]) {
            loglik += w * head.log_prob(a)?;
        }
        let (m, c) = kl_terms(&batch.reference[s], head)?;
        c_mu += m;
        c_sigma += c;
    }
    let cov = if is_categorical(policy) {
        T::zero()
    } else {
        dual.eta_sigma * (dual.epsilon_sigma * n - c_sigma)
    };
    Ok((loglik + dual.eta_mu * (dual.epsilon_mu * n - c_mu) + cov) / n)
}

/// Mean decoupled KL `(C_μ, C_Σ)` of the policy from the batch's reference heads.
pub fn mean_kl<T: Scalar>(policy: &PolicyParams<T>, batch: &SampleBatch<T>) -> Result<(T, T)> {
    let heads = policy.heads(&batch.states)?;
    let n = lit::<T>(batch.n_states() as f64);
    let (mut m, mut c) = (T::zero(), T::zero());
    for (reference, head) in batch.reference.iter().zip(&heads) {
        let (a, b) = kl_terms(reference, head)?;
        m += a;
        c += b;
    }
    Ok((m / n, c / n))
}

/// Settings for [`alternate_mstep`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlternationConfig {
    /// Outer rounds, each optimizing θ with the multipliers fixed and then
    /// updating the multipliers with θ fixed.
    pub rounds: usize,
    /// Adam steps on θ per round.
    pub policy_steps: usize,
    pub policy_lr: f64,
    /// Gradient steps on the softplus-parameterized multipliers per round.
    pub multiplier_steps: usize,
    pub multiplier_lr: f64,
}

impl Default for AlternationConfig {
    fn default() -> Self {
        Self { rounds: 60, policy_steps: 100, policy_lr: 1e-2, multiplier_steps: 1, multiplier_lr: 1.0 }
    }
}

/// Solve `max_θ min_{η_μ, η_Σ ≥ 0} L` on a fixed batch by alternating between
/// the policy (multipliers fixed) and the multipliers (policy fixed).
///
/// Multipliers are updated in log-space with steps normalized by their bound,
/// `log η ← log η + lr·clip(C/ε − 1, −1, 1)`, so tight bounds such as
/// `ε_Σ = 1e-4` move at the same pace as loose ones.
pub fn alternate_mstep(
    policy: &PolicyParams<f64>,
    batch: &SampleBatch<f64>,
    dual: &DualState<f64>,
    config: &AlternationConfig,
) -> Result<(PolicyParams<f64>, DualState<f64>)> {
    dual.validate()?;
    let mut policy = policy.clone();
    let mut dual = *dual;
    let mut adam = AdamState::new(policy.net.num_params(), AdamConfig { lr: config.policy_lr, ..AdamConfig::default() })?;
    let mut neg = vec![0.0; policy.net.num_params()];
    for _ in 0..config.rounds {
        for _ in 0..config.policy_steps {
            let out = mstep_update(&policy, batch, &dual)?;
            for (n, g) in neg.iter_mut().zip(out.policy_grad.as_slice()) {
                *n = -g;
            }
            adam.step(policy.net.as_mut_slice(), &neg)?;
        }
        for _ in 0..config.multiplier_steps {
            let (c_mu, c_sigma) = mean_kl(&policy, batch)?;
            let step = |eta: f64, c: f64, eps: f64| (eta.max(1e-8).ln() + config.multiplier_lr * (c / eps - 1.0).clamp(-1.0, 1.0)).exp();
            dual.eta_mu = step(dual.eta_mu, c_mu, dual.epsilon_mu);
            if !is_categorical(&policy) {
                dual.eta_sigma = step(dual.eta_sigma, c_sigma, dual.epsilon_sigma);
            }
        }
        dual.validate()?;
    }
    Ok((policy, dual))
}

/// Multiplier value from its softplus parameter, and `dη/dρ`.
pub fn multiplier_from_raw<T: Scalar>(raw: T) -> (T, T) {
    (softplus(raw), sigmoid(raw))
}

/// Softplus parameter for a multiplier value.
pub fn multiplier_to_raw<T: Scalar>(value: T) -> T {
    softplus_inverse(value)
}
