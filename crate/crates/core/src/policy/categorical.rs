use rand::Rng;

use crate::error::{ensure_dim, Error, Result};
use crate::scalar::{log_sum_exp, Scalar};

/// Softmax distribution over a finite action set.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalHead<T> {
    logits: Vec<T>,
    log_probs: Vec<T>,
}

impl<T: Scalar> CategoricalHead<T> {
    pub fn new(logits: Vec<T>) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Empty("categorical logits"));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::Numeric("categorical logits must be finite".into()));
        }
        let lse = log_sum_exp(&logits);
        let log_probs = logits.iter().map(|&l| l - lse).collect();
        Ok(CategoricalHead { logits, log_probs })
    }

    pub fn n_actions(&self) -> usize {
        self.logits.len()
    }

    pub fn logits(&self) -> &[T] {
        &self.logits
    }

    pub fn log_probs(&self) -> &[T] {
        &self.log_probs
    }

    pub fn probs(&self) -> Vec<T> {
        self.log_probs.iter().map(|l| l.exp()).collect()
    }

    pub fn log_prob(&self, action: usize) -> Result<T> {
        self.log_probs
            .get(action)
            .copied()
            .ok_or(Error::Index { index: action, limit: self.n_actions() })
    }

    /// Log-probability and its gradient with respect to the logits.
    pub fn log_prob_grad(&self, action: usize) -> Result<(T, Vec<T>)> {
        let lp = self.log_prob(action)?;
        let grad = self
            .log_probs
            .iter()
            .enumerate()
            .map(|(i, l)| if i == action { T::one() } else { T::zero() } - l.exp())
            .collect();
        Ok((lp, grad))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, T) {
        let u = T::uniform(rng, T::zero(), T::one());
        let mut acc = T::zero();
        for (i, l) in self.log_probs.iter().enumerate() {
            acc += l.exp();
            if u < acc {
                return (i, *l);
            }
        }
        let last = self.n_actions() - 1;
        (last, self.log_probs[last])
    }

    pub fn entropy(&self) -> T {
        -self.log_probs.iter().map(|&l| l.exp() * l).sum::<T>()
    }
}

/// KL(old ‖ new) between categorical heads.
pub fn kl_categorical<T: Scalar>(old: &CategoricalHead<T>, new: &CategoricalHead<T>) -> Result<T> {
    ensure_dim("kl_categorical", old.n_actions(), new.n_actions())?;
    let kl: T = old
        .log_probs
        .iter()
        .zip(&new.log_probs)
        .map(|(&lo, &ln)| {
            let p = lo.exp();
            if p == T::zero() {
                T::zero()
            } else {
                p * (lo - ln)
            }
        })
        .sum();
    Ok(kl.max(T::zero()))
}

/// KL(old ‖ new) and its gradient with respect to the new logits (`p_new − p_old`).
pub fn kl_categorical_grad_new<T: Scalar>(
    old: &CategoricalHead<T>,
    new: &CategoricalHead<T>,
) -> Result<(T, Vec<T>)> {
    let kl = kl_categorical(old, new)?;
    let grad = old
        .log_probs
        .iter()
        .zip(&new.log_probs)
        .map(|(&lo, &ln)| ln.exp() - lo.exp())
        .collect();
    Ok((kl, grad))
}

/// KL(old ‖ new) and its gradient with respect to the old logits.
pub fn kl_categorical_grad_old<T: Scalar>(
    old: &CategoricalHead<T>,
    new: &CategoricalHead<T>,
) -> Result<(T, Vec<T>)> {
    let kl = kl_categorical(old, new)?;
    let grad = old
        .log_probs
        .iter()
        .zip(&new.log_probs)
        .map(|(&lo, &ln)| lo.exp() * (lo - ln - kl))
        .collect();
    Ok((kl, grad))
}
