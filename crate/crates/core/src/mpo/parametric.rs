use super::mstep::{DualState, MStepOutput, SampleBatch};
use crate::error::{Error, Result};
use crate::policy::{kl_categorical, kl_categorical_grad_old, kl_decoupled, kl_decoupled_grad_old, Head, HeadGrad, PolicyParams};
use crate::scalar::{lit, Scalar};

/// KL(q ‖ reference) terms, mean/covariance split for Gaussians.
fn kl_terms<T: Scalar>(q: &Head<T>, reference: &Head<T>) -> Result<(T, T)> {
    match (q, reference) {
        (Head::Gaussian(a), Head::Gaussian(b)) => kl_decoupled(a, b),
        (Head::Categorical(a), Head::Categorical(b)) => Ok((kl_categorical(a, b)?, T::zero())),
        _ => Err(Error::Domain("variational and reference heads differ in kind".into())),
    }
}

/// Gradient of the parametric E-step Lagrangian
/// `mean_s Σ_j [q_θ(a_j|s) / π_i(a_j|s)]·v_j + η_μ(ε_μ − C_μ) + η_Σ(ε_Σ − C_Σ)`
/// where the `C` terms split `KL(q_θ ‖ π_i)`.
///
/// The batch's actions come from the reference heads `π_i` and its values are
/// advantages already multiplied by their estimator weight (`A_j / M` for
/// samples, `π_i(a)·A(a)` for enumerated actions), so the importance-weighted
/// sum estimates `E_{q_θ}[A]`. The returned policy gradient is to be ascended.
pub fn parametric_estep_grad<T: Scalar>(
    var_policy: &PolicyParams<T>,
    batch: &SampleBatch<T>,
    dual: &DualState<T>,
) -> Result<MStepOutput<T>> {
    let fwd = var_policy.forward_batch(&batch.states)?;
    let n = lit::<T>(batch.n_states() as f64);
    let (mut surrogate, mut c_mu, mut c_sigma) = (T::zero(), T::zero(), T::zero());
    let mut head_grads = Vec::with_capacity(batch.n_states());
    for s in 0..batch.n_states() {
        let (head, reference) = (&fwd.heads[s], &batch.reference[s]);
        let mut g = HeadGrad::zeros_for(head);
        for (a, &v) in batch.actions[s].iter().zip(&batch.values[s]) {
            let (lq, lg) = head.log_prob_grad(a)?;
            let ratio = (lq - reference.log_prob(a)?).exp();
            surrogate += ratio * v;
            g.add_scaled(&lg, ratio * v);
        }
        match (head, reference) {
            (Head::Gaussian(q), Head::Gaussian(p)) => {
                let ((m, c), gm, gc) = kl_decoupled_grad_old(q, p)?;
                c_mu += m;
                c_sigma += c;
                g.add_scaled(&HeadGrad::Gaussian(gm), -dual.eta_mu);
                g.add_scaled(&HeadGrad::Gaussian(gc), -dual.eta_sigma);
            }
            (Head::Categorical(q), Head::Categorical(p)) => {
                let (k, gk) = kl_categorical_grad_old(q, p)?;
                c_mu += k;
                g.add_scaled(&HeadGrad::Categorical(gk), -dual.eta_mu);
            }
            _ => return Err(Error::Domain("variational and reference heads differ in kind".into())),
        }
        head_grads.push(g);
    }
    let inv_n = T::one() / n;
    head_grads.iter_mut().for_each(|g| g.scale(inv_n));
    let policy_grad = var_policy.backward_batch(&fwd, &head_grads)?;
    let categorical = matches!(var_policy.head, crate::policy::HeadKind::Categorical { .. });
    let (surrogate, c_mu, c_sigma) = (surrogate * inv_n, c_mu * inv_n, c_sigma * inv_n);
    let eta_sigma_grad = if categorical { T::zero() } else { dual.epsilon_sigma - c_sigma };
    let out = MStepOutput {
        policy_grad,
        eta_mu_grad: dual.epsilon_mu - c_mu,
        eta_sigma_grad,
        kl_mean: c_mu,
        kl_cov: c_sigma,
        log_likelihood: surrogate,
        lagrangian: surrogate + dual.eta_mu * (dual.epsilon_mu - c_mu) + dual.eta_sigma * eta_sigma_grad,
    };
    if !out.lagrangian.is_finite() || out.policy_grad.as_slice().iter().any(|g| !g.is_finite()) {
        return Err(Error::Numeric("non-finite parametric E-step gradient".into()));
    }
    Ok(out)
}

/// Value of the parametric E-step Lagrangian with the batch's samples held fixed.
pub fn parametric_lagrangian<T: Scalar>(var_policy: &PolicyParams<T>, batch: &SampleBatch<T>, dual: &DualState<T>) -> Result<T> {
    let heads = var_policy.heads(&batch.states)?;
    let n = lit::<T>(batch.n_states() as f64);
    let (mut surrogate, mut c_mu, mut c_sigma) = (T::zero(), T::zero(), T::zero());
    for (s, head) in heads.iter().enumerate() {
        let reference = &batch.reference[s];
        for (a, &v) in batch.actions[s].iter().zip(&batch.values[s]) {
            surrogate += (head.log_prob(a)? - reference.log_prob(a)?).exp() * v;
        }
        let (m, c) = kl_terms(head, reference)?;
        c_mu += m;
        c_sigma += c;
    }
    let cov = if matches!(var_policy.head, crate::policy::HeadKind::Categorical { .. }) {
        T::zero()
    } else {
        dual.eta_sigma * (dual.epsilon_sigma * n - c_sigma)
    };
    Ok((surrogate + dual.eta_mu * (dual.epsilon_mu * n - c_mu) + cov) / n)
}

/// Advantages `Q − mean(Q)` per state, scaled by the estimator weights
/// `exp(log_weights)` (the baseline is the weighted mean).
pub fn weighted_advantages<T: Scalar>(q_values: &[Vec<T>], log_weights: &[Vec<T>]) -> Vec<Vec<T>> {
    q_values
        .iter()
        .zip(log_weights)
        .map(|(q, lw)| {
            let w: Vec<T> = lw.iter().map(|l| l.exp()).collect();
            let baseline: T = q.iter().zip(&w).map(|(&a, &b)| a * b).sum();
            q.iter().zip(&w).map(|(&a, &b)| b * (a - baseline)).collect()
        })
        .collect()
}
