use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{lu_solve, Matrix};

/// Finite MDP with explicit transition tensor `P[s][a][s']` and reward table `r[s][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    gamma: f64,
    initial: Vec<f64>,
}

const ROW_TOLERANCE: f64 = 1e-12;

impl TabularMdp {
    /// `transition` is laid out `[s][a][s']`, `reward` as `[s][a]`, `initial` is a
    /// distribution over states.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        gamma: f64,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::Empty("tabular MDP"));
        }
        ensure_dim("transition tensor", n_states * n_actions * n_states, transition.len())?;
        ensure_dim("reward table", n_states * n_actions, reward.len())?;
        ensure_dim("initial distribution", n_states, initial.len())?;
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Domain(format!("discount {gamma} outside [0, 1)")));
        }
        for (i, row) in transition.chunks(n_states).enumerate() {
            check_distribution(row).map_err(|m| {
                Error::Domain(format!("P[{}][{}] {m}", i / n_actions, i % n_actions))
            })?;
        }
        check_distribution(&initial).map_err(|m| Error::Domain(format!("initial distribution {m}")))?;
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Numeric("non-finite reward".into()));
        }
        Ok(Self { n_states, n_actions, transition, reward, gamma, initial })
    }

    /// Random instance with Dirichlet(1) transition rows, rewards uniform in [0, 1]
    /// and a uniform initial distribution.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, gamma: f64, rng: &mut R) -> Result<Self> {
        let gamma_dist = Gamma::new(1.0f64, 1.0).expect("valid gamma parameters");
        let mut transition = Vec::with_capacity(n_states * n_actions * n_states);
        for _ in 0..n_states * n_actions {
            let row: Vec<f64> = (0..n_states).map(|_| gamma_dist.sample(rng).max(1e-300)).collect();
            let total: f64 = row.iter().sum();
            transition.extend(row.iter().map(|x| x / total));
        }
        let reward = (0..n_states * n_actions).map(|_| rng.gen::<f64>()).collect();
        let initial = vec![1.0 / n_states as f64; n_states];
        Self::new(n_states, n_actions, transition, reward, gamma, initial)
    }

    /// Replace the initial distribution with a point mass on `state`.
    pub fn with_initial_state(mut self, state: usize) -> Result<Self> {
        if state >= self.n_states {
            return Err(Error::Index { index: state, limit: self.n_states });
        }
        self.initial = vec![0.0; self.n_states];
        self.initial[state] = 1.0;
        Ok(self)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    /// Reward table as an `n_states × n_actions` matrix.
    pub fn reward_table(&self) -> Matrix<f64> {
        Matrix::from_vec(self.n_states, self.n_actions, self.reward.clone()).expect("finite rewards")
    }

    /// Next-state distribution `P[s][a][·]`.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    /// Sample `(next_state, reward, terminal)`. Tabular MDPs never terminate.
    pub fn step<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> Result<(usize, f64, bool)> {
        if s >= self.n_states {
            return Err(Error::Index { index: s, limit: self.n_states });
        }
        if a >= self.n_actions {
            return Err(Error::Index { index: a, limit: self.n_actions });
        }
        Ok((sample_index(self.transition_row(s, a), rng), self.reward(s, a), false))
    }

    /// State-to-state transition matrix under `policy` (rows are states, entries
    /// `Σ_a π(a|s) P[s][a][s']`).
    pub fn policy_transition(&self, policy: &Matrix<f64>) -> Result<Matrix<f64>> {
        self.check_policy(policy)?;
        let mut out = Matrix::zeros(self.n_states, self.n_states);
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let p = policy[(s, a)];
                if p == 0.0 {
                    continue;
                }
                for (dst, t) in out.row_mut(s).iter_mut().zip(self.transition_row(s, a)) {
                    *dst += p * t;
                }
            }
        }
        Ok(out)
    }

    /// Expected next-state value `Σ_{s'} P[s][a][s'] v[s']` for every `(s, a)`.
    pub fn expected_next(&self, v: &[f64]) -> Result<Matrix<f64>> {
        ensure_dim("state values", self.n_states, v.len())?;
        Ok(Matrix::from_fn(self.n_states, self.n_actions, |s, a| {
            self.transition_row(s, a).iter().zip(v).map(|(p, x)| p * x).sum()
        }))
    }

    /// Check that `policy` is an `n_states × n_actions` table of distributions.
    pub fn check_policy(&self, policy: &Matrix<f64>) -> Result<()> {
        ensure_dim("policy rows", self.n_states, policy.rows())?;
        ensure_dim("policy columns", self.n_actions, policy.cols())?;
        for s in 0..self.n_states {
            check_distribution(policy.row(s))
                .map_err(|m| Error::Domain(format!("policy row {s} {m}")))?;
        }
        Ok(())
    }
}

fn check_distribution(row: &[f64]) -> std::result::Result<(), String> {
    if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err("has a negative or non-finite entry".into());
    }
    let total: f64 = row.iter().sum();
    if (total - 1.0).abs() > ROW_TOLERANCE * row.len().max(1) as f64 {
        return Err(format!("sums to {total}"));
    }
    Ok(())
}

/// Inverse-CDF draw from a discrete distribution.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// `V^π` by solving `(I − γ P^π) V = r^π`.
pub fn policy_value(mdp: &TabularMdp, policy: &Matrix<f64>) -> Result<Vec<f64>> {
    let p_pi = mdp.policy_transition(policy)?;
    let n = mdp.n_states();
    let system = Matrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - mdp.gamma() * p_pi[(i, j)]);
    let rhs: Vec<f64> = (0..n)
        .map(|s| (0..mdp.n_actions()).map(|a| policy[(s, a)] * mdp.reward(s, a)).sum())
        .collect();
    lu_solve(&system, &rhs)
}

/// Exact action values `Q^π = r + γ P V^π`.
pub fn tabular_exact_q(mdp: &TabularMdp, policy: &Matrix<f64>) -> Result<Matrix<f64>> {
    let v = policy_value(mdp, policy)?;
    let next = mdp.expected_next(&v)?;
    Ok(Matrix::from_fn(mdp.n_states(), mdp.n_actions(), |s, a| {
        mdp.reward(s, a) + mdp.gamma() * next[(s, a)]
    }))
}

/// `V(s) = Σ_a π(a|s) Q(s, a)`.
pub fn state_values(q: &Matrix<f64>, policy: &Matrix<f64>) -> Vec<f64> {
    (0..q.rows()).map(|s| q.row(s).iter().zip(policy.row(s)).map(|(x, p)| x * p).sum()).collect()
}
