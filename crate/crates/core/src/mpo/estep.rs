use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Bounds on the E-step temperature.
pub const ETA_MIN: f64 = 1e-8;
pub const ETA_MAX: f64 = 1e6;

/// Critic values of actions scored at each state, with the log-probabilities of
/// the estimator that produced them (`−ln M` for `M` draws from the reference
/// policy, `log π(a|s)` for enumerated discrete actions).
#[derive(Debug, Clone, PartialEq)]
pub struct EStepBatch<T> {
    pub q_values: Vec<Vec<T>>,
    pub log_weights: Vec<Vec<T>>,
}

impl<T: Scalar> EStepBatch<T> {
    pub fn new(q_values: Vec<Vec<T>>, log_weights: Vec<Vec<T>>) -> Result<Self> {
        if q_values.is_empty() {
            return Err(Error::Empty("E-step batch"));
        }
        if q_values.len() != log_weights.len() {
            return Err(Error::dim("E-step batch (states)", q_values.len(), log_weights.len()));
        }
        for (q, w) in q_values.iter().zip(&log_weights) {
            if q.is_empty() {
                return Err(Error::Empty("E-step action set"));
            }
            if q.len() != w.len() {
                return Err(Error::dim("E-step batch (actions)", q.len(), w.len()));
            }
            if q.iter().any(|v| !v.is_finite()) || w.iter().any(|v| v.is_nan() || *v == T::infinity()) {
                return Err(Error::Numeric("non-finite E-step values".into()));
            }
        }
        Ok(Self { q_values, log_weights })
    }

    /// Equally weighted samples per state.
    pub fn from_samples(q_values: Vec<Vec<T>>) -> Result<Self> {
        let log_weights = q_values.iter().map(|q| vec![-lit::<T>(q.len() as f64).ln(); q.len()]).collect();
        Self::new(q_values, log_weights)
    }

    pub fn n_states(&self) -> usize {
        self.q_values.len()
    }

    /// States whose critic values are not all equal. A state with a single
    /// distinct value carries no information about the temperature.
    fn active_states(&self) -> Vec<usize> {
        let active: Vec<usize> = (0..self.n_states())
            .filter(|&s| {
                let q = &self.q_values[s];
                q.iter().any(|&v| v != q[0])
            })
            .collect();
        if active.is_empty() {
            (0..self.n_states()).collect()
        } else {
            active
        }
    }
}

/// Per-state pieces of the dual at `eta`: `η log Σ_j exp(lw_j + Q_j/η)` and the
/// KL of the induced weights from the estimator weights.
fn state_terms<T: Scalar>(eta: T, q: &[T], lw: &[T]) -> (T, T) {
    let max = q.iter().copied().fold(T::neg_infinity(), T::max);
    let logits: Vec<T> = q.iter().zip(lw).map(|(&v, &w)| w + (v - max) / eta).collect();
    let lse = crate::scalar::log_sum_exp(&logits);
    let mut kl = T::zero();
    for (&l, &w) in logits.iter().zip(lw) {
        let p = (l - lse).exp();
        if p > T::zero() {
            kl += p * (l - lse - w);
        }
    }
    (max + eta * lse, kl.max(T::zero()))
}

/// The temperature dual `g(η) = ηε + η·mean_s log Σ_j exp(lw_j + Q_j/η)` and its
/// derivative `ε − mean_s KL(q_s ‖ prior_s)`.
pub fn dual_value_and_grad<T: Scalar>(eta: T, batch: &EStepBatch<T>, epsilon: T) -> Result<(T, T)> {
    if !(eta > T::zero()) || !eta.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {eta}")));
    }
    let active = batch.active_states();
    let n = lit::<T>(active.len() as f64);
    let (mut value, mut kl) = (T::zero(), T::zero());
    for &s in &active {
        let (v, k) = state_terms(eta, &batch.q_values[s], &batch.log_weights[s]);
        value += v;
        kl += k;
    }
    Ok((eta * epsilon + value / n, epsilon - kl / n))
}

/// Mean over informative states of `KL(q_s ‖ prior_s)` for the weights at `eta`.
pub fn estep_kl<T: Scalar>(eta: T, batch: &EStepBatch<T>) -> T {
    let active = batch.active_states();
    let total: T = active
        .iter()
        .map(|&s| state_terms(eta, &batch.q_values[s], &batch.log_weights[s]).1)
        .sum();
    total / lit(active.len() as f64)
}

/// Minimizer of the dual over `[ETA_MIN, ETA_MAX]` by bisection on the sign of
/// the derivative in log-space. Boundary solutions are returned as is.
pub fn solve_eta<T: Scalar>(batch: &EStepBatch<T>, epsilon: T) -> Result<T> {
    if !(epsilon > T::zero()) {
        return Err(Error::Domain(format!("KL bound must be positive, got {epsilon}")));
    }
    let (lo, hi) = (lit::<T>(ETA_MIN), lit::<T>(ETA_MAX));
    if dual_value_and_grad(lo, batch, epsilon)?.1 >= T::zero() {
        return Ok(lo);
    }
    if dual_value_and_grad(hi, batch, epsilon)?.1 <= T::zero() {
        return Ok(hi);
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = lit::<T>(0.5) * (a + b);
        if dual_value_and_grad(mid.exp(), batch, epsilon)?.1 < T::zero() {
            a = mid;
        } else {
            b = mid;
        }
        if b - a < lit(1e-13) {
            break;
        }
    }
    Ok((lit::<T>(0.5) * (a + b)).exp())
}

/// Projected gradient step on the temperature: `η ← clip(η − lr·∂g/∂η)`.
pub fn eta_gradient_step<T: Scalar>(eta: T, batch: &EStepBatch<T>, epsilon: T, lr: T) -> Result<T> {
    let (_, grad) = dual_value_and_grad(eta, batch, epsilon)?;
    Ok((eta - lr * grad).max(lit(ETA_MIN)).min(lit(ETA_MAX)))
}

/// Normalized sample weights `softmax(lw + Q/η)` per state.
pub fn estep_weights<T: Scalar>(eta: T, batch: &EStepBatch<T>) -> Result<Vec<Vec<T>>> {
    if !(eta > T::zero()) {
        return Err(Error::Domain(format!("temperature must be positive, got {eta}")));
    }
    Ok(batch
        .q_values
        .iter()
        .zip(&batch.log_weights)
        .map(|(q, lw)| {
            let max = q.iter().copied().fold(T::neg_infinity(), T::max);
            let logits: Vec<T> = q.iter().zip(lw).map(|(&v, &w)| w + (v - max) / eta).collect();
            crate::scalar::softmax(&logits)
        })
        .collect())
}
