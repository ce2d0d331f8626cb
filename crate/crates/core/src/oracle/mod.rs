//! Exact KL-regularized policy evaluation and improvement on tabular MDPs.
//!
//! Everything here is computed by linear solves, so these routines serve as
//! ground truth for the sampled estimators elsewhere in the crate.

use crate::envs::{tabular_exact_q, TabularMdp};
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{lu_solve, Matrix};
use crate::scalar::log_sum_exp;

/// An MDP together with a temperature, a reference policy `pi` and a
/// variational policy `q`, both as `n_states × n_actions` tables.
#[derive(Debug, Clone)]
pub struct RegularizedProblem<'a> {
    pub mdp: &'a TabularMdp,
    pub alpha: f64,
    pub pi: Matrix<f64>,
    pub q: Matrix<f64>,
}

impl<'a> RegularizedProblem<'a> {
    pub fn new(mdp: &'a TabularMdp, alpha: f64, pi: Matrix<f64>, q: Matrix<f64>) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Domain(format!("temperature must be positive, got {alpha}")));
        }
        mdp.check_policy(&pi)?;
        mdp.check_policy(&q)?;
        for s in 0..mdp.n_states() {
            for a in 0..mdp.n_actions() {
                if pi[(s, a)] > 0.0 && q[(s, a)] == 0.0 {
                    return Err(Error::Domain(format!("q vanishes where pi does not, at state {s}, action {a}")));
                }
            }
        }
        Ok(Self { mdp, alpha, pi, q })
    }

    /// `r(x, a) − α log(q(a|x) / π(a|x))`.
    pub fn regularized_reward(&self, x: usize, a: usize) -> Result<f64> {
        let (q, p) = (self.q[(x, a)], self.pi[(x, a)]);
        if q == 0.0 && p == 0.0 {
            return Ok(self.mdp.reward(x, a));
        }
        if q == 0.0 || p == 0.0 {
            return Err(Error::Domain(format!("log ratio undefined at state {x}, action {a}")));
        }
        Ok(self.mdp.reward(x, a) - self.alpha * (q / p).ln())
    }

    /// Expected regularized reward per state under `q`.
    fn expected_reward(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.mdp.n_states()];
        for (x, o) in out.iter_mut().enumerate() {
            for a in 0..self.mdp.n_actions() {
                if self.q[(x, a)] > 0.0 {
                    *o += self.q[(x, a)] * self.regularized_reward(x, a)?;
                }
            }
        }
        Ok(out)
    }

    /// Fixed point of [`Self::bellman_apply`], by direct linear solve.
    pub fn value(&self) -> Result<Vec<f64>> {
        let n = self.mdp.n_states();
        let p = self.mdp.policy_transition(&self.q)?;
        let system = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - self.mdp.gamma() * p[(i, j)]);
        lu_solve(&system, &self.expected_reward()?)
    }

    /// One application of the regularized Bellman operator
    /// `V ↦ E_{a∼q}[r̃(x, a) + γ E_y V(y)]`.
    pub fn bellman_apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite value table".into()));
        }
        let next = self.mdp.expected_next(v)?;
        let mut out = vec![0.0; self.mdp.n_states()];
        for (x, o) in out.iter_mut().enumerate() {
            for a in 0..self.mdp.n_actions() {
                if self.q[(x, a)] > 0.0 {
                    *o += self.q[(x, a)] * (self.regularized_reward(x, a)? + self.mdp.gamma() * next[(x, a)]);
                }
            }
        }
        Ok(out)
    }
}

/// Unregularized Bellman operator `T^q V(x) = E_{a∼q}[r(x, a) + γ E_y V(y)]`.
pub fn bellman_apply(mdp: &TabularMdp, policy: &Matrix<f64>, v: &[f64]) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value table".into()));
    }
    let next = mdp.expected_next(v)?;
    Ok((0..mdp.n_states())
        .map(|x| {
            (0..mdp.n_actions())
                .map(|a| policy[(x, a)] * (mdp.reward(x, a) + mdp.gamma() * next[(x, a)]))
                .sum()
        })
        .collect())
}

/// `q(a|x) ∝ π(a|x) exp(Q^π(x, a) / α)`, normalized with log-sum-exp.
pub fn soft_optimal_q(mdp: &TabularMdp, pi: &Matrix<f64>, alpha: f64) -> Result<Matrix<f64>> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("temperature must be positive, got {alpha}")));
    }
    let q_values = tabular_exact_q(mdp, pi)?;
    let (ns, na) = (mdp.n_states(), mdp.n_actions());
    let mut out = Matrix::zeros(ns, na);
    let mut logits = vec![0.0; na];
    for x in 0..ns {
        for a in 0..na {
            logits[a] = if pi[(x, a)] > 0.0 { pi[(x, a)].ln() + q_values[(x, a)] / alpha } else { f64::NEG_INFINITY };
        }
        let norm = log_sum_exp(&logits);
        for a in 0..na {
            out[(x, a)] = (logits[a] - norm).exp();
        }
    }
    Ok(out)
}

/// Discounted state occupancy `d = (I − γ P^πᵀ)⁻¹ d₀`.
pub fn occupancy(mdp: &TabularMdp, policy: &Matrix<f64>, initial: &[f64]) -> Result<Vec<f64>> {
    ensure_dim("initial distribution", mdp.n_states(), initial.len())?;
    let p = mdp.policy_transition(policy)?;
    let n = mdp.n_states();
    let system = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - mdp.gamma() * p[(j, i)]);
    lu_solve(&system, initial)
}

/// Tabular softmax policy with one logit per state-action pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularSoftmaxPolicy {
    pub theta: Matrix<f64>,
}

impl TabularSoftmaxPolicy {
    pub fn new(theta: Matrix<f64>) -> Result<Self> {
        if theta.as_slice().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite logits".into()));
        }
        Ok(Self { theta })
    }

    pub fn probs(&self) -> Matrix<f64> {
        let mut out = self.theta.clone();
        for x in 0..out.rows() {
            let norm = log_sum_exp(self.theta.row(x));
            out.row_mut(x).iter_mut().for_each(|v| *v = (*v - norm).exp());
        }
        out
    }

    /// Gradient in `theta` of `Σ_x d(x) KL(q(·|x) ‖ π_θ(·|x))`.
    pub fn weighted_kl_grad(&self, q: &Matrix<f64>, weights: &[f64]) -> Matrix<f64> {
        let p = self.probs();
        Matrix::from_fn(p.rows(), p.cols(), |x, a| weights[x] * (p[(x, a)] - q[(x, a)]))
    }
}

/// One recorded iterate of [`improvement_iteration`].
#[derive(Debug, Clone)]
pub struct ImprovementStep {
    pub theta: TabularSoftmaxPolicy,
    pub q: Matrix<f64>,
    /// `J_i = Σ_x d₀(x) V^{π_i, q_i}_α(x)`.
    pub objective: f64,
}

/// Alternate the exact soft-optimal E-step with a gradient step on the
/// occupancy-weighted KL. Returns `iters + 1` iterates, the first at `theta0`.
pub fn improvement_iteration(
    mdp: &TabularMdp,
    theta0: &TabularSoftmaxPolicy,
    alpha: f64,
    beta: f64,
    iters: usize,
) -> Result<Vec<ImprovementStep>> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!("step size must be positive, got {beta}")));
    }
    let mut theta = theta0.clone();
    let mut out = Vec::with_capacity(iters + 1);
    for i in 0..=iters {
        let pi = theta.probs();
        let q = soft_optimal_q(mdp, &pi, alpha)?;
        let problem = RegularizedProblem::new(mdp, alpha, pi.clone(), q.clone())?;
        let objective: f64 = problem.value()?.iter().zip(mdp.initial()).map(|(v, d)| v * d).sum();
        if !objective.is_finite() {
            return Err(Error::Numeric(format!("objective diverged at iteration {i}")));
        }
        out.push(ImprovementStep { theta: theta.clone(), q: q.clone(), objective });
        if i == iters {
            break;
        }
        let d = occupancy(mdp, &pi, mdp.initial())?;
        let grad = theta.weighted_kl_grad(&q, &d);
        let next = Matrix::from_fn(grad.rows(), grad.cols(), |x, a| theta.theta[(x, a)] - beta * grad[(x, a)]);
        theta = TabularSoftmaxPolicy::new(next)?;
    }
    Ok(out)
}

/// Smallest one-step change `min_i (J_{i+1} − J_i)` over a run.
pub fn min_improvement(steps: &[ImprovementStep]) -> f64 {
    steps.windows(2).map(|w| w[1].objective - w[0].objective).fold(f64::INFINITY, f64::min)
}

/// Halve the step size from `beta0` until a run of `iters` steps has every
/// `J_{i+1} − J_i ≥ −tolerance`, trying at most `max_halvings` times.
pub fn find_monotone_beta(
    mdp: &TabularMdp,
    theta0: &TabularSoftmaxPolicy,
    alpha: f64,
    beta0: f64,
    iters: usize,
    tolerance: f64,
    max_halvings: usize,
) -> Result<(f64, Vec<ImprovementStep>)> {
    let mut beta = beta0;
    for _ in 0..=max_halvings {
        if let Ok(steps) = improvement_iteration(mdp, theta0, alpha, beta, iters) {
            if min_improvement(&steps) >= -tolerance {
                return Ok((beta, steps));
            }
        }
        beta /= 2.0;
    }
    Err(Error::Numeric(format!("no monotone step size found down to {beta}")))
}
