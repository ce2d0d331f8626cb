use serde::{Deserialize, Serialize};

use crate::envs::EnvId;
use crate::error::{Error, Result};
use crate::numerics::{Activation, AdamConfig};

/// How the variational distribution is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariationalMode {
    /// Per-sample weights over actions drawn from the reference policy.
    Nonparametric,
    /// A policy-shaped network fitted directly under the KL bounds.
    Parametric,
}

/// How the E-step temperature is obtained during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EtaSolver {
    /// One Adam step on `dg/dη` per update, like every other parameter.
    Gradient,
    /// Bisection to the dual minimizer on every mini-batch.
    Bisection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnvSection {
    pub id: EnvId,
    /// Multiplies rewards seen by the learner; reported returns are unscaled.
    pub reward_scale: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { id: EnvId::Pendulum, reward_scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: u64,
    /// Number of workers `G` whose gradients are averaged per update.
    pub workers: usize,
    /// Trajectories `L` collected by each worker per outer iteration.
    pub trajectories_per_iteration: usize,
    /// Chief updates between refreshes of `θ_i` and `φ′`.
    pub inner_steps: usize,
    /// Trajectory budget `L_max`.
    pub max_trajectories: usize,
    /// Replay capacity in transitions.
    pub replay_capacity: usize,
    /// Per-group gradient norm bound applied before each Adam step.
    pub grad_clip: f64,
    pub eval_episodes: usize,
    pub eval_seed: u64,
    /// Evaluate every this many outer iterations.
    pub eval_interval: usize,
    /// Stop once the evaluation return reaches this value.
    pub stop_return: Option<f64>,
    pub worker_timeout_secs: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            seed: 0,
            workers: 1,
            trajectories_per_iteration: 1,
            inner_steps: 1000,
            max_trajectories: 1000,
            replay_capacity: 1_000_000,
            grad_clip: 1.0,
            eval_episodes: 10,
            eval_seed: 99,
            eval_interval: 1,
            stop_return: None,
            worker_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MpoSection {
    pub mode: VariationalMode,
    pub epsilon: f64,
    pub epsilon_mu: f64,
    pub epsilon_sigma: f64,
    /// Actions `M` sampled per state to estimate integrals.
    pub action_samples: usize,
    pub eta_init: f64,
    pub eta_mu_init: f64,
    pub eta_sigma_init: f64,
    pub eta_solver: EtaSolver,
    /// Adam rate for the temperature and multipliers; the parameter rate when unset.
    pub dual_lr: Option<f64>,
}

impl Default for MpoSection {
    fn default() -> Self {
        Self {
            mode: VariationalMode::Nonparametric,
            epsilon: 0.1,
            epsilon_mu: 0.1,
            epsilon_sigma: 1e-4,
            action_samples: 20,
            eta_init: 1.0,
            eta_mu_init: 1.0,
            eta_sigma_init: 1.0,
            eta_solver: EtaSolver::Gradient,
            dual_lr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RetraceSection {
    /// Window length of the truncated Retrace sum.
    pub steps: usize,
    /// Windows per mini-batch.
    pub batch_windows: usize,
}

impl Default for RetraceSection {
    fn default() -> Self {
        Self { steps: 8, batch_windows: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimSection {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimSection {
    fn default() -> Self {
        let a = AdamConfig::default();
        Self { lr: a.lr, beta1: a.beta1, beta2: a.beta2, eps: a.eps }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetSection {
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub activation: Activation,
    /// Scale of the final policy layer at initialization.
    pub policy_output_scale: f64,
    /// Scale of the final critic layer at initialization.
    pub critic_output_scale: f64,
}

impl Default for NetSection {
    fn default() -> Self {
        Self {
            policy_hidden: vec![100, 100],
            critic_hidden: vec![200, 200],
            activation: Activation::Tanh,
            policy_output_scale: 0.01,
            critic_output_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    pub gamma: f64,
}

impl Default for RlSection {
    fn default() -> Self {
        Self { gamma: 0.99 }
    }
}

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub env: EnvSection,
    pub train: TrainSection,
    pub mpo: MpoSection,
    pub retrace: RetraceSection,
    pub optim: OptimSection,
    pub net: NetSection,
    pub rl: RlSection,
}

/// Numeric keys that are absent from the serialized defaults.
const OPTIONAL_NUMBER_KEYS: &[&str] = &["train.stop_return", "mpo.dual_lr"];

impl TrainConfig {
    /// Parses a TOML document; omitted keys keep their defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let doc: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
        let defaults = toml::Table::try_from(TrainConfig::default()).expect("defaults serialize");
        check_keys(&doc, &defaults, "")?;
        let config: TrainConfig = toml::Value::Table(doc)
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.optim.lr, beta1: self.optim.beta1, beta2: self.optim.beta2, eps: self.optim.eps }
    }

    pub fn dual_adam(&self) -> AdamConfig {
        AdamConfig { lr: self.mpo.dual_lr.unwrap_or(self.optim.lr), ..self.adam() }
    }

    /// Checks every invariant, naming the offending key.
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive and finite, got {v}")))
            }
        };
        let count = |key: &str, v: usize| if v > 0 { Ok(()) } else { Err(Error::config(key, "must be at least 1")) };

        positive("env.reward_scale", self.env.reward_scale)?;
        for (key, seed) in [("train.seed", self.train.seed), ("train.eval_seed", self.train.eval_seed)] {
            if i64::try_from(seed).is_err() {
                return Err(Error::config(key, "must fit in a signed 64-bit integer"));
            }
        }
        count("train.workers", self.train.workers)?;
        count("train.trajectories_per_iteration", self.train.trajectories_per_iteration)?;
        count("train.inner_steps", self.train.inner_steps)?;
        count("train.replay_capacity", self.train.replay_capacity)?;
        positive("train.grad_clip", self.train.grad_clip)?;
        count("train.eval_episodes", self.train.eval_episodes)?;
        count("train.eval_interval", self.train.eval_interval)?;
        count("train.worker_timeout_secs", self.train.worker_timeout_secs as usize)?;
        if let Some(r) = self.train.stop_return {
            if !r.is_finite() {
                return Err(Error::config("train.stop_return", "must be finite"));
            }
        }
        positive("mpo.epsilon", self.mpo.epsilon)?;
        positive("mpo.epsilon_mu", self.mpo.epsilon_mu)?;
        positive("mpo.epsilon_sigma", self.mpo.epsilon_sigma)?;
        count("mpo.action_samples", self.mpo.action_samples)?;
        positive("mpo.eta_init", self.mpo.eta_init)?;
        positive("mpo.eta_mu_init", self.mpo.eta_mu_init)?;
        positive("mpo.eta_sigma_init", self.mpo.eta_sigma_init)?;
        if let Some(lr) = self.mpo.dual_lr {
            positive("mpo.dual_lr", lr)?;
        }
        count("retrace.steps", self.retrace.steps)?;
        count("retrace.batch_windows", self.retrace.batch_windows)?;
        positive("optim.lr", self.optim.lr)?;
        positive("optim.eps", self.optim.eps)?;
        for (key, b) in [("optim.beta1", self.optim.beta1), ("optim.beta2", self.optim.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(key, format!("must lie in [0, 1), got {b}")));
            }
        }
        for (key, sizes) in [("net.policy_hidden", &self.net.policy_hidden), ("net.critic_hidden", &self.net.critic_hidden)] {
            if sizes.iter().any(|&s| s == 0) {
                return Err(Error::config(key, "layer widths must be at least 1"));
            }
        }
        positive("net.policy_output_scale", self.net.policy_output_scale)?;
        positive("net.critic_output_scale", self.net.critic_output_scale)?;
        if !(self.rl.gamma > 0.0 && self.rl.gamma < 1.0) {
            return Err(Error::config("rl.gamma", format!("must lie in (0, 1), got {}", self.rl.gamma)));
        }
        Ok(())
    }
}

/// Rejects keys absent from the defaults and values whose type differs from
/// the default's (integers are accepted where floats are expected).
fn check_keys(doc: &toml::Table, defaults: &toml::Table, prefix: &str) -> Result<()> {
    for (key, value) in doc {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        let expected = match defaults.get(key) {
            Some(v) => v,
            None if OPTIONAL_NUMBER_KEYS.contains(&path.as_str()) => {
                if value.is_float() || value.is_integer() {
                    continue;
                }
                return Err(Error::config(path, format!("expected a number, got {}", value.type_str())));
            }
            None => return Err(Error::config(path, "unknown key")),
        };
        match (expected, value) {
            (toml::Value::Table(d), toml::Value::Table(v)) => check_keys(v, d, &path)?,
            (toml::Value::Float(_), toml::Value::Integer(_)) => {}
            (e, v) if e.same_type(v) => {}
            (e, v) => return Err(Error::config(path, format!("expected {}, got {}", e.type_str(), v.type_str()))),
        }
    }
    Ok(())
}
