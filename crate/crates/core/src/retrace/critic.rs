use serde::{Deserialize, Serialize};

use crate::action::{Action, ActionSpace};
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::{Matrix, MlpParams};

/// How `(state, action)` pairs are encoded as critic inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticInput {
    pub state_dim: usize,
    pub action_space: ActionSpace,
    /// Continuous actions are clipped to `±bound` before encoding.
    pub action_bound: Option<f64>,
}

impl CriticInput {
    pub fn width(&self) -> usize {
        self.state_dim + self.action_space.feature_dim()
    }

    pub fn encode(&self, state: &[f64], action: &Action<f64>, out: &mut Vec<f64>) -> Result<()> {
        ensure_dim("critic input (state)", self.state_dim, state.len())?;
        out.extend_from_slice(state);
        match (action, self.action_space) {
            (Action::Continuous(a), ActionSpace::Continuous { dim }) => {
                ensure_dim("critic input (action)", dim, a.len())?;
                match self.action_bound {
                    Some(b) => out.extend(a.iter().map(|x| x.clamp(-b, b))),
                    None => out.extend_from_slice(a),
                }
            }
            (Action::Discrete(i), ActionSpace::Discrete { n }) => {
                if *i >= n {
                    return Err(Error::Index { index: *i, limit: n });
                }
                action.write_features(n, out);
            }
            _ => return Err(Error::Domain("action kind does not match the critic's action space".into())),
        }
        Ok(())
    }

    /// Input matrix with one row per `(states[i], actions[i])`.
    pub fn encode_batch<'a, S, A>(&self, pairs: impl IntoIterator<Item = (S, A)>) -> Result<Matrix<f64>>
    where
        S: AsRef<[f64]>,
        A: std::borrow::Borrow<Action<f64>> + 'a,
    {
        let mut data = Vec::new();
        let mut rows = 0;
        for (s, a) in pairs {
            self.encode(s.as_ref(), a.borrow(), &mut data)?;
            rows += 1;
        }
        Matrix::from_vec(rows, self.width(), data)
    }
}

/// Anything that scores `(state, action)` pairs.
pub trait QFunction {
    fn q_values(&self, states: &[&[f64]], actions: &[&Action<f64>]) -> Result<Vec<f64>>;
}

/// A critic network viewed through its input encoding.
#[derive(Debug, Clone, Copy)]
pub struct CriticNet<'a> {
    pub net: &'a MlpParams<f64>,
    pub input: &'a CriticInput,
}

impl QFunction for CriticNet<'_> {
    fn q_values(&self, states: &[&[f64]], actions: &[&Action<f64>]) -> Result<Vec<f64>> {
        ensure_dim("critic batch", states.len(), actions.len())?;
        let x = self.input.encode_batch(states.iter().copied().zip(actions.iter().copied()))?;
        Ok(self.net.predict_batch(&x)?.into_vec())
    }
}

/// Online critic `φ` and its frozen target copy `φ′`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub online: MlpParams<f64>,
    pub target: MlpParams<f64>,
    pub input: CriticInput,
}

impl Critic {
    pub fn new(net: MlpParams<f64>, input: CriticInput) -> Result<Self> {
        ensure_dim("critic (input width)", input.width(), net.input_dim())?;
        ensure_dim("critic (output width)", 1, net.output_dim())?;
        Ok(Self { target: net.clone(), online: net, input })
    }

    pub fn online_q(&self) -> CriticNet<'_> {
        CriticNet { net: &self.online, input: &self.input }
    }

    pub fn target_q(&self) -> CriticNet<'_> {
        CriticNet { net: &self.target, input: &self.input }
    }

    /// `φ′ := φ`.
    pub fn sync_target(&mut self) {
        self.target.as_mut_slice().copy_from_slice(self.online.as_slice());
    }
}

/// Mean squared error between online predictions on the windows' taken actions
/// and fixed `targets`, with its gradient in the online parameters.
pub fn critic_update<'a>(
    critic: &Critic,
    pairs: impl IntoIterator<Item = (&'a [f64], &'a Action<f64>)>,
    targets: &[f64],
) -> Result<(f64, MlpParams<f64>)> {
    let x = critic.input.encode_batch(pairs)?;
    ensure_dim("critic update (targets)", x.rows(), targets.len())?;
    if targets.is_empty() {
        return Err(Error::Empty("critic batch"));
    }
    if targets.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numeric("non-finite critic target".into()));
    }
    let (pred, cache) = critic.online.forward_batch(&x)?;
    let n = targets.len() as f64;
    let mut loss = 0.0;
    let residual: Vec<f64> = pred
        .as_slice()
        .iter()
        .zip(targets)
        .map(|(p, y)| {
            loss += (p - y) * (p - y);
            2.0 * (p - y) / n
        })
        .collect();
    let (grads, _) = critic.online.backward_batch(&cache, &Matrix::from_vec(targets.len(), 1, residual)?)?;
    Ok((loss / n, grads))
}
