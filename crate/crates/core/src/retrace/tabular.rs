use rand::Rng;

use super::critic::QFunction;
use super::targets::{trace_coefficient, PolicyHeads};
use crate::action::Action;
use crate::envs::{sample_index, TabularMdp, Transition};
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::Matrix;
use crate::policy::{CategoricalHead, Head};

/// One-hot encoding of tabular state `i` among `n`.
pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

fn state_index(state: &[f64]) -> Result<usize> {
    state
        .iter()
        .position(|x| *x == 1.0)
        .ok_or_else(|| Error::Domain("tabular state must be one-hot".into()))
}

/// A Q table read through one-hot states.
#[derive(Debug, Clone, Copy)]
pub struct TabularQ<'a>(pub &'a Matrix<f64>);

impl QFunction for TabularQ<'_> {
    fn q_values(&self, states: &[&[f64]], actions: &[&Action<f64>]) -> Result<Vec<f64>> {
        ensure_dim("tabular q batch", states.len(), actions.len())?;
        states
            .iter()
            .zip(actions)
            .map(|(s, a)| {
                let a = a.as_discrete().ok_or_else(|| Error::Domain("tabular Q needs discrete actions".into()))?;
                if a >= self.0.cols() {
                    return Err(Error::Index { index: a, limit: self.0.cols() });
                }
                Ok(self.0[(state_index(s)?, a)])
            })
            .collect()
    }
}

/// A policy table read through one-hot states. Entries must be positive.
#[derive(Debug, Clone, Copy)]
pub struct TabularPolicy<'a>(pub &'a Matrix<f64>);

impl PolicyHeads for TabularPolicy<'_> {
    fn policy_heads(&self, states: &[&[f64]]) -> Result<Vec<Head<f64>>> {
        states
            .iter()
            .map(|s| {
                let row = self.0.row(state_index(s)?);
                Ok(Head::Categorical(CategoricalHead::new(row.iter().map(|p| p.ln()).collect())?))
            })
            .collect()
    }
}

/// Roll out `len` steps from `(state, action)`, then following `behavior`,
/// recording one-hot states and behavior log-probabilities.
pub fn tabular_trajectory<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    behavior: &Matrix<f64>,
    state: usize,
    action: usize,
    len: usize,
    rng: &mut R,
) -> Result<Vec<Transition>> {
    let n = mdp.n_states();
    let (mut s, mut a) = (state, action);
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        let (next, reward, terminal) = mdp.step(s, a, rng)?;
        out.push(Transition {
            state: one_hot(n, s),
            action: Action::Discrete(a),
            sampled_action: Action::Discrete(a),
            reward,
            next_state: one_hot(n, next),
            behavior_log_prob: behavior[(s, a)].ln(),
            terminal,
        });
        s = next;
        a = sample_index(behavior.row(s), rng);
    }
    Ok(out)
}

/// Expected `steps`-step Retrace operator applied to `q`, with target policy
/// `pi` and behavior `b`, computed by dynamic programming over the MDP:
/// `(R Q)(x, a) = Q(x, a) + E_b[Σ_{j<steps} γ^j (Π_{k=1..j} c_k) δ_j]`.
pub fn exact_retrace_operator(
    mdp: &TabularMdp,
    q: &Matrix<f64>,
    pi: &Matrix<f64>,
    behavior: &Matrix<f64>,
    steps: usize,
) -> Result<Matrix<f64>> {
    mdp.check_policy(pi)?;
    mdp.check_policy(behavior)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    ensure_dim("retrace operator (q rows)", ns, q.rows())?;
    ensure_dim("retrace operator (q cols)", na, q.cols())?;
    if steps == 0 {
        return Err(Error::Domain("retrace needs at least one step".into()));
    }
    let v: Vec<f64> = (0..ns).map(|y| (0..na).map(|a| pi[(y, a)] * q[(y, a)]).sum()).collect();
    let next_v = mdp.expected_next(&v)?;
    let delta = Matrix::from_fn(ns, na, |x, a| mdp.reward(x, a) + mdp.gamma() * next_v[(x, a)] - q[(x, a)]);
    // weight b(a|y) c(y, a) applied when the trace continues through (y, a)
    let carry = Matrix::from_fn(ns, na, |y, a| {
        let (p, b) = (pi[(y, a)], behavior[(y, a)]);
        if b == 0.0 {
            0.0
        } else {
            b * trace_coefficient(p.ln() - b.ln())
        }
    });
    let mut acc = delta.clone();
    for _ in 1..steps {
        let cont: Vec<f64> = (0..ns).map(|y| (0..na).map(|a| carry[(y, a)] * acc[(y, a)]).sum()).collect();
        let next = mdp.expected_next(&cont)?;
        acc = Matrix::from_fn(ns, na, |x, a| delta[(x, a)] + mdp.gamma() * next[(x, a)]);
    }
    Ok(Matrix::from_fn(ns, na, |x, a| q[(x, a)] + acc[(x, a)]))
}
