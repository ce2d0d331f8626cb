use rand::Rng;

use super::buffer::TrajectoryWindow;
use super::critic::QFunction;
use crate::action::Action;
use crate::error::{ensure_dim, Error, Result};
use crate::numerics::Matrix;
use crate::policy::{Head, PolicyParams};

/// Anything that maps states to action distributions.
pub trait PolicyHeads {
    fn policy_heads(&self, states: &[&[f64]]) -> Result<Vec<Head<f64>>>;
}

impl PolicyHeads for PolicyParams<f64> {
    fn policy_heads(&self, states: &[&[f64]]) -> Result<Vec<Head<f64>>> {
        let mut data = Vec::with_capacity(states.len() * self.state_dim());
        for s in states {
            ensure_dim("policy input", self.state_dim(), s.len())?;
            data.extend_from_slice(s);
        }
        self.heads(&Matrix::from_vec(states.len(), self.state_dim(), data)?)
    }
}

/// Actions scored at one state. `log_weights` are the log-probabilities of the
/// estimator: `−ln M` for `M` policy samples, `log π(a|s)` for enumerated
/// discrete actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    pub actions: Vec<Action<f64>>,
    pub log_weights: Vec<f64>,
    pub q: Vec<f64>,
}

impl ActionSet {
    /// Estimate of `E_{a∼π}[Q(s, a)]`.
    pub fn expected_q(&self) -> f64 {
        self.log_weights.iter().zip(&self.q).map(|(w, q)| w.exp() * q).sum()
    }
}

/// `M` draws from a Gaussian head, or every action of a categorical head.
pub fn candidate_actions<R: Rng + ?Sized>(head: &Head<f64>, samples: usize, rng: &mut R) -> (Vec<Action<f64>>, Vec<f64>) {
    match head {
        Head::Categorical(c) => ((0..c.n_actions()).map(Action::Discrete).collect(), c.log_probs().to_vec()),
        Head::Gaussian(_) => {
            let actions = (0..samples).map(|_| head.sample(rng).0).collect();
            (actions, vec![-(samples as f64).ln(); samples])
        }
    }
}

/// Rows of a [`WindowBatch`] belonging to one window: `len` transition states
/// followed by the bootstrap state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpan {
    pub row: usize,
    pub len: usize,
    pub terminal: bool,
}

/// Everything Retrace and the E-step need about a set of windows, evaluated
/// under one reference policy and one critic.
#[derive(Debug, Clone)]
pub struct WindowBatch {
    pub spans: Vec<WindowSpan>,
    pub states: Vec<Vec<f64>>,
    pub heads: Vec<Head<f64>>,
    pub candidates: Vec<ActionSet>,
    /// Per transition, in window order: rewards, critic value of the executed
    /// action, and `log π(a|s) − log b(a|s)` of the sampled action.
    pub rewards: Vec<f64>,
    pub q_taken: Vec<f64>,
    pub log_ratios: Vec<f64>,
    pub executed: Vec<Action<f64>>,
}

impl WindowBatch {
    pub fn evaluate<P, Q, R>(windows: &[TrajectoryWindow<'_>], policy: &P, critic: &Q, samples: usize, rng: &mut R) -> Result<Self>
    where
        P: PolicyHeads + ?Sized,
        Q: QFunction + ?Sized,
        R: Rng + ?Sized,
    {
        if samples == 0 {
            return Err(Error::Domain("at least one action sample per state is required".into()));
        }
        let mut spans = Vec::with_capacity(windows.len());
        let mut states: Vec<Vec<f64>> = Vec::new();
        let (mut rewards, mut executed, mut sampled, mut log_b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for w in windows {
            if w.is_empty() {
                return Err(Error::Empty("trajectory window"));
            }
            let last = w.transitions.last().expect("non-empty window");
            spans.push(WindowSpan { row: states.len(), len: w.len(), terminal: last.terminal });
            for t in w.transitions {
                if t.behavior_log_prob == f64::NEG_INFINITY || t.behavior_log_prob.is_nan() {
                    return Err(Error::Domain(format!("behavior log-prob {}", t.behavior_log_prob)));
                }
                states.push(t.state.clone());
                rewards.push(t.reward);
                executed.push(t.action.clone());
                sampled.push(&t.sampled_action);
                log_b.push(t.behavior_log_prob);
            }
            states.push(last.next_state.clone());
        }
        let state_refs: Vec<&[f64]> = states.iter().map(Vec::as_slice).collect();
        let heads = policy.policy_heads(&state_refs)?;
        ensure_dim("policy heads", states.len(), heads.len())?;

        let mut sets: Vec<(Vec<Action<f64>>, Vec<f64>)> = heads.iter().map(|h| candidate_actions(h, samples, rng)).collect();
        let mut q_states: Vec<&[f64]> = Vec::new();
        let mut q_actions: Vec<&Action<f64>> = Vec::new();
        for (row, (actions, _)) in sets.iter().enumerate() {
            for a in actions {
                q_states.push(state_refs[row]);
                q_actions.push(a);
            }
        }
        let mut log_ratios = Vec::with_capacity(rewards.len());
        let mut k = 0;
        for span in &spans {
            for t in 0..span.len {
                let row = span.row + t;
                q_states.push(state_refs[row]);
                q_actions.push(&executed[k]);
                log_ratios.push(heads[row].log_prob(sampled[k])? - log_b[k]);
                k += 1;
            }
        }
        let q_all = critic.q_values(&q_states, &q_actions)?;
        let n_candidates = q_all.len() - rewards.len();
        let mut q_iter = q_all[..n_candidates].iter();
        let candidates = sets
            .drain(..)
            .map(|(actions, log_weights)| {
                let q = q_iter.by_ref().take(actions.len()).copied().collect();
                ActionSet { actions, log_weights, q }
            })
            .collect();
        let q_taken = q_all[n_candidates..].to_vec();
        Ok(Self { spans, states, heads, candidates, rewards, q_taken, log_ratios, executed })
    }

    /// Number of transitions across all windows.
    pub fn n_transitions(&self) -> usize {
        self.rewards.len()
    }

    /// Batch rows holding transition states (excluding bootstrap states), in
    /// window order.
    pub fn transition_rows(&self) -> impl Iterator<Item = usize> + '_ {
        self.spans.iter().flat_map(|s| s.row..s.row + s.len)
    }

    /// `(state, executed action)` per transition, aligned with [`Self::targets`].
    pub fn taken_pairs(&self) -> impl Iterator<Item = (&[f64], &Action<f64>)> + '_ {
        self.transition_rows().zip(&self.executed).map(|(r, a)| (self.states[r].as_slice(), a))
    }

    /// Retrace targets for every transition, in window order.
    pub fn targets(&self, gamma: f64) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.n_transitions());
        let mut k = 0;
        for span in &self.spans {
            let n = span.len;
            let bootstrap: Vec<f64> = (1..=n)
                .map(|t| if t == n && span.terminal { 0.0 } else { self.candidates[span.row + t].expected_q() })
                .collect();
            out.extend(retrace_from_parts(
                &self.rewards[k..k + n],
                &self.q_taken[k..k + n],
                &bootstrap,
                &self.log_ratios[k..k + n],
                gamma,
            )?);
            k += n;
        }
        Ok(out)
    }
}

/// Truncated Retrace targets for one window.
///
/// `bootstrap[t]` is `E_π Q′(s_{t+1}, ·)` (zero after a terminal step) and
/// `log_ratios[t]` is `log π(a_t|s_t) − log b(a_t|s_t)`. The trace coefficient
/// `c = min(1, exp(log_ratio))` applies from the second step on.
pub fn retrace_from_parts(rewards: &[f64], q_taken: &[f64], bootstrap: &[f64], log_ratios: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = rewards.len();
    ensure_dim("retrace (q_taken)", n, q_taken.len())?;
    ensure_dim("retrace (bootstrap)", n, bootstrap.len())?;
    ensure_dim("retrace (log ratios)", n, log_ratios.len())?;
    if log_ratios.iter().any(|r| r.is_nan()) {
        return Err(Error::Numeric("NaN importance ratio".into()));
    }
    let mut out = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * bootstrap[t] - q_taken[t];
        acc = if t + 1 < n { delta + gamma * trace_coefficient(log_ratios[t + 1]) * acc } else { delta };
        out[t] = q_taken[t] + acc;
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite retrace target".into()));
    }
    Ok(out)
}

/// `min(1, exp(log_ratio))`.
pub fn trace_coefficient(log_ratio: f64) -> f64 {
    log_ratio.min(0.0).exp()
}

/// Retrace targets for a single window, bootstrapping with `samples` draws from
/// `policy` scored by `critic` (the target network).
pub fn retrace_targets<P, Q, R>(
    window: &TrajectoryWindow<'_>,
    critic: &Q,
    policy: &P,
    samples: usize,
    gamma: f64,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    P: PolicyHeads + ?Sized,
    Q: QFunction + ?Sized,
    R: Rng + ?Sized,
{
    WindowBatch::evaluate(std::slice::from_ref(window), policy, critic, samples, rng)?.targets(gamma)
}
