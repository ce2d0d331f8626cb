//! Parametric action distributions produced by an MLP: a full-covariance
//! Gaussian (mean plus Cholesky factor) or a categorical over discrete actions.

mod categorical;
mod gaussian;

pub use categorical::{kl_categorical, kl_categorical_grad_new, kl_categorical_grad_old, CategoricalHead};
pub use gaussian::{kl_decoupled, kl_decoupled_grad_new, kl_decoupled_grad_old, GaussianGrad, GaussianHead};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionSpace};
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{diag_transform, Activation, CholeskyFactor, Matrix, MlpCache, MlpParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Gaussian { action_dim: usize },
    Categorical { n_actions: usize },
}

impl HeadKind {
    pub fn for_space(space: ActionSpace) -> Self {
        match space {
            ActionSpace::Continuous { dim } => HeadKind::Gaussian { action_dim: dim },
            ActionSpace::Discrete { n } => HeadKind::Categorical { n_actions: n },
        }
    }

    /// Network outputs needed: mean, raw diagonal and strictly-lower entries
    /// for a Gaussian; one logit per action for a categorical.
    pub fn output_dim(self) -> usize {
        match self {
            HeadKind::Gaussian { action_dim: d } => 2 * d + d * (d - 1) / 2,
            HeadKind::Categorical { n_actions } => n_actions,
        }
    }

    /// Decodes raw network outputs into a distribution.
    pub fn decode<T: Scalar>(self, raw: &[T]) -> Result<Head<T>> {
        ensure_dim("policy head (raw outputs)", self.output_dim(), raw.len())?;
        match self {
            HeadKind::Gaussian { action_dim: d } => {
                let mean = raw[..d].to_vec();
                let mut lower = Matrix::zeros(d, d);
                for i in 0..d {
                    lower[(i, i)] = diag_transform(raw[d + i]).0;
                }
                let mut k = 2 * d;
                for r in 1..d {
                    for c in 0..r {
                        lower[(r, c)] = raw[k];
                        k += 1;
                    }
                }
                if mean.iter().chain(lower.as_slice()).any(|v| !v.is_finite()) {
                    return Err(Error::Numeric("policy head outputs must be finite".into()));
                }
                Ok(Head::Gaussian(GaussianHead::new(mean, CholeskyFactor::from_lower(lower)?)?))
            }
            HeadKind::Categorical { .. } => Ok(Head::Categorical(CategoricalHead::new(raw.to_vec())?)),
        }
    }

    /// Chains a head-level gradient back to the raw network outputs.
    pub fn raw_grad<T: Scalar>(self, raw: &[T], grad: &HeadGrad<T>, out: &mut [T]) -> Result<()> {
        ensure_dim("policy head (raw outputs)", self.output_dim(), raw.len())?;
        ensure_dim("policy head (raw grad)", self.output_dim(), out.len())?;
        match (self, grad) {
            (HeadKind::Gaussian { action_dim: d }, HeadGrad::Gaussian(g)) => {
                ensure_dim("policy head (gaussian grad)", d, g.mean.len())?;
                out[..d].copy_from_slice(&g.mean);
                for i in 0..d {
                    out[d + i] = g.lower[(i, i)] * diag_transform(raw[d + i]).1;
                }
                let mut k = 2 * d;
                for r in 1..d {
                    for c in 0..r {
                        out[k] = g.lower[(r, c)];
                        k += 1;
                    }
                }
                Ok(())
            }
            (HeadKind::Categorical { n_actions }, HeadGrad::Categorical(g)) => {
                ensure_dim("policy head (categorical grad)", n_actions, g.len())?;
                out.copy_from_slice(g);
                Ok(())
            }
            _ => Err(Error::Domain("head gradient kind does not match the policy head".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Head<T> {
    Gaussian(GaussianHead<T>),
    Categorical(CategoricalHead<T>),
}

/// Gradient of a scalar with respect to a head's natural parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadGrad<T> {
    Gaussian(GaussianGrad<T>),
    Categorical(Vec<T>),
}

impl<T: Scalar> HeadGrad<T> {
    pub fn zeros_for(head: &Head<T>) -> Self {
        match head {
            Head::Gaussian(g) => HeadGrad::Gaussian(GaussianGrad::zeros(g.dim())),
            Head::Categorical(c) => HeadGrad::Categorical(vec![T::zero(); c.n_actions()]),
        }
    }

    pub fn add_scaled(&mut self, other: &HeadGrad<T>, scale: T) {
        match (self, other) {
            (HeadGrad::Gaussian(a), HeadGrad::Gaussian(b)) => a.add_scaled(b, scale),
            (HeadGrad::Categorical(a), HeadGrad::Categorical(b)) => {
                for (x, &y) in a.iter_mut().zip(b) {
                    *x += scale * y;
                }
            }
            _ => panic!("mixing gaussian and categorical head gradients"),
        }
    }

    pub fn scale(&mut self, factor: T) {
        match self {
            HeadGrad::Gaussian(g) => g
                .mean
                .iter_mut()
                .chain(g.lower.as_mut_slice().iter_mut())
                .for_each(|x| *x *= factor),
            HeadGrad::Categorical(v) => v.iter_mut().for_each(|x| *x *= factor),
        }
    }
}

impl<T: Scalar> Head<T> {
    pub fn log_prob(&self, action: &Action<T>) -> Result<T> {
        match (self, action) {
            (Head::Gaussian(g), Action::Continuous(a)) => g.log_prob(a),
            (Head::Categorical(c), Action::Discrete(a)) => c.log_prob(*a),
            _ => Err(Error::Domain("action kind does not match the policy head".into())),
        }
    }

    pub fn log_prob_grad(&self, action: &Action<T>) -> Result<(T, HeadGrad<T>)> {
        match (self, action) {
            (Head::Gaussian(g), Action::Continuous(a)) => {
                let (lp, grad) = g.log_prob_grad(a)?;
                Ok((lp, HeadGrad::Gaussian(grad)))
            }
            (Head::Categorical(c), Action::Discrete(a)) => {
                let (lp, grad) = c.log_prob_grad(*a)?;
                Ok((lp, HeadGrad::Categorical(grad)))
            }
            _ => Err(Error::Domain("action kind does not match the policy head".into())),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Action<T>, T) {
        match self {
            Head::Gaussian(g) => {
                let (a, lp) = g.sample(rng);
                (Action::Continuous(a), lp)
            }
            Head::Categorical(c) => {
                let (a, lp) = c.sample(rng);
                (Action::Discrete(a), lp)
            }
        }
    }

    /// Most likely action: the mean, or the arg-max logit.
    pub fn mode(&self) -> Action<T> {
        match self {
            Head::Gaussian(g) => Action::Continuous(g.mean.clone()),
            Head::Categorical(c) => {
                let best = c
                    .log_probs()
                    .iter()
                    .enumerate()
                    .fold((0, T::neg_infinity()), |b, (i, &l)| if l > b.1 { (i, l) } else { b })
                    .0;
                Action::Discrete(best)
            }
        }
    }

    pub fn as_gaussian(&self) -> Option<&GaussianHead<T>> {
        match self {
            Head::Gaussian(g) => Some(g),
            Head::Categorical(_) => None,
        }
    }

    pub fn as_categorical(&self) -> Option<&CategoricalHead<T>> {
        match self {
            Head::Categorical(c) => Some(c),
            Head::Gaussian(_) => None,
        }
    }
}

/// Policy network and the head it feeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams<T> {
    pub net: MlpParams<T>,
    pub head: HeadKind,
}

/// Heads decoded from a batched forward pass, with what the backward pass needs.
#[derive(Debug, Clone)]
pub struct PolicyBatch<T> {
    pub heads: Vec<Head<T>>,
    raw: Matrix<T>,
    cache: MlpCache<T>,
}

impl<T: Scalar> PolicyParams<T> {
    pub fn new(net: MlpParams<T>, head: HeadKind) -> Result<Self> {
        ensure_dim("PolicyParams (net output)", head.output_dim(), net.output_dim())?;
        Ok(PolicyParams { net, head })
    }

    /// Glorot-initialised policy; the output layer is scaled by `output_scale`.
    pub fn init<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        head: HeadKind,
        activation: Activation,
        output_scale: T,
        rng: &mut R,
    ) -> Result<Self> {
        let mut sizes = vec![state_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(head.output_dim());
        Self::new(MlpParams::glorot(&sizes, activation, output_scale, rng)?, head)
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn head_at(&self, state: &[T]) -> Result<Head<T>> {
        let (raw, _) = self.net.forward(state)?;
        self.head.decode(&raw)
    }

    /// Heads for each row of `states`, without gradient bookkeeping.
    pub fn heads(&self, states: &Matrix<T>) -> Result<Vec<Head<T>>> {
        let raw = self.net.predict_batch(states)?;
        (0..raw.rows()).map(|r| self.head.decode(raw.row(r))).collect()
    }

    pub fn forward_batch(&self, states: &Matrix<T>) -> Result<PolicyBatch<T>> {
        let (raw, cache) = self.net.forward_batch(states)?;
        let heads = (0..raw.rows())
            .map(|r| self.head.decode(raw.row(r)))
            .collect::<Result<_>>()?;
        Ok(PolicyBatch { heads, raw, cache })
    }

    /// Back-propagates one head gradient per batch row into network gradients.
    pub fn backward_batch(&self, batch: &PolicyBatch<T>, head_grads: &[HeadGrad<T>]) -> Result<MlpParams<T>> {
        ensure_dim("policy backward (rows)", batch.heads.len(), head_grads.len())?;
        let mut g = Matrix::zeros(batch.raw.rows(), batch.raw.cols());
        for (r, hg) in head_grads.iter().enumerate() {
            let raw = batch.raw.row(r).to_vec();
            self.head.raw_grad(&raw, hg, g.row_mut(r))?;
        }
        let (grads, _) = self.net.backward_batch(&batch.cache, &g)?;
        Ok(grads)
    }
}
