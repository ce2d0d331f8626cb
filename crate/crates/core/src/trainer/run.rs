use std::path::Path;
use std::sync::mpsc;
use std::time::Duration;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::chief::{Chief, GradientBundle, SharedParams};
use super::config::TrainConfig;
use super::metrics::{MetricsRow, MetricsWriter};
use super::rng::{stream_rng, Stream};
use super::worker::{worker_iteration, WorkerStats};
use crate::action::{Action, ActionSpace};
use crate::envs::{episode_return, evaluation_starts, ContinuousEnv, Transition};
use crate::error::{Error, Result};
use crate::numerics::MlpParams;
use crate::policy::{HeadKind, PolicyParams};
use crate::retrace::{Critic, CriticInput, ReplayBuffer};

/// Environment variable capping how many worker threads run at once.
pub const THREADS_ENV: &str = "MPO_LAB_THREADS";

/// Worker threads to use for `workers` workers: `MPO_LAB_THREADS` if set,
/// otherwise the available parallelism, never more than `workers`.
pub fn worker_threads(workers: usize) -> usize {
    let cap = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    cap.min(workers).max(1)
}

/// Builds the initial policy and critic for `config`'s environment.
pub fn initial_params(config: &TrainConfig, env: &ContinuousEnv) -> Result<SharedParams> {
    let mut rng = stream_rng(config.train.seed, Stream::Init, 0);
    let net = &config.net;
    let head = HeadKind::Gaussian { action_dim: env.action_dim() };
    let policy = PolicyParams::init(env.observation_dim(), &net.policy_hidden, head, net.activation, net.policy_output_scale, &mut rng)?;
    let input = CriticInput {
        state_dim: env.observation_dim(),
        action_space: ActionSpace::Continuous { dim: env.action_dim() },
        action_bound: Some(env.action_bound()),
    };
    let mut sizes = vec![input.width()];
    sizes.extend_from_slice(&net.critic_hidden);
    sizes.push(1);
    let critic = Critic::new(MlpParams::glorot(&sizes, net.activation, net.critic_output_scale, &mut rng)?, input)?;
    let mpo = &config.mpo;
    Ok(SharedParams::new(policy, critic, mpo.eta_init, mpo.eta_mu_init, mpo.eta_sigma_init))
}

/// Rolls out one episode with the stochastic policy, recording behavior
/// log-probabilities of the unclipped samples. Returns the transitions (with
/// scaled rewards) and the unscaled return.
pub fn collect_trajectory<R: Rng + ?Sized>(
    env: &ContinuousEnv,
    policy: &PolicyParams<f64>,
    reward_scale: f64,
    env_rng: &mut R,
    policy_rng: &mut R,
) -> Result<(Vec<Transition>, f64)> {
    let mut state = env.reset(env_rng);
    let mut obs = env.observe(&state);
    let mut out = Vec::with_capacity(env.horizon());
    let mut total = 0.0;
    for _ in 0..env.horizon() {
        let head = policy.head_at(&obs)?;
        let (sampled, log_prob) = head.sample(policy_rng);
        let raw = sampled.as_continuous().expect("gaussian policy").to_vec();
        let clipped = env.clip_action(&raw);
        let step = env.step(&state, &clipped)?;
        let next_obs = env.observe(&step.next_state);
        total += step.reward;
        out.push(Transition {
            state: obs,
            action: Action::Continuous(clipped),
            sampled_action: sampled,
            reward: reward_scale * step.reward,
            next_state: next_obs.clone(),
            behavior_log_prob: log_prob,
            terminal: step.terminal,
        });
        state = step.next_state;
        obs = next_obs;
        if step.terminal {
            break;
        }
    }
    Ok((out, total))
}

/// Mean return of the deterministic (mean) policy from `starts`.
pub fn evaluate_policy(env: &ContinuousEnv, policy: &PolicyParams<f64>, starts: &[Vec<f64>]) -> Result<f64> {
    let mut total = 0.0;
    for start in starts {
        total += episode_return(env, start, |obs| {
            let head = policy.head_at(obs)?;
            Ok(env.clip_action(head.mode().as_continuous().expect("gaussian policy")))
        })?;
    }
    Ok(total / starts.len() as f64)
}

/// Runs every worker on the same snapshot, in parallel on up to `threads`
/// threads, and returns the results ordered by worker id.
pub fn run_workers(
    params: &SharedParams,
    replay: &ReplayBuffer,
    config: &TrainConfig,
    rngs: &mut [ChaCha8Rng],
    threads: usize,
) -> Result<Vec<(GradientBundle, WorkerStats)>> {
    let workers = rngs.len();
    if threads <= 1 || workers == 1 {
        return rngs.iter_mut().enumerate().map(|(w, rng)| worker_iteration(w, params, replay, config, rng)).collect();
    }
    let timeout = Duration::from_secs(config.train.worker_timeout_secs);
    let mut slots: Vec<Vec<(usize, &mut ChaCha8Rng)>> = (0..threads).map(|_| Vec::new()).collect();
    for (w, rng) in rngs.iter_mut().enumerate() {
        slots[w % threads].push((w, rng));
    }
    std::thread::scope(|scope| {
        let (tx, rx) = mpsc::channel();
        for slot in slots {
            let tx = tx.clone();
            scope.spawn(move || {
                for (w, rng) in slot {
                    let result = worker_iteration(w, params, replay, config, rng);
                    if tx.send((w, result)).is_err() {
                        return;
                    }
                }
            });
        }
        drop(tx);
        let mut results: Vec<Option<(GradientBundle, WorkerStats)>> = (0..workers).map(|_| None).collect();
        for _ in 0..workers {
            let (w, result) = rx
                .recv_timeout(timeout)
                .map_err(|_| Error::Fault(format!("barrier timed out after {timeout:?} waiting for workers")))?;
            results[w] = Some(result?);
        }
        Ok(results.into_iter().map(|r| r.expect("every worker reported")).collect())
    })
}

fn mean_stats(stats: &[WorkerStats]) -> WorkerStats {
    let n = stats.len() as f64;
    let sum = |f: fn(&WorkerStats) -> f64| stats.iter().map(f).sum::<f64>() / n;
    WorkerStats {
        q_loss: sum(|s| s.q_loss),
        eta: sum(|s| s.eta),
        dual_value: sum(|s| s.dual_value),
        kl_mean: sum(|s| s.kl_mean),
        kl_cov: sum(|s| s.kl_cov),
    }
}

/// Training state: chief, replay, per-worker random streams and counters.
pub struct Trainer {
    pub config: TrainConfig,
    pub env: ContinuousEnv,
    pub chief: Chief,
    pub replay: ReplayBuffer,
    pub iteration: usize,
    pub episodes: usize,
    pub env_steps: usize,
    env_rngs: Vec<ChaCha8Rng>,
    policy_rngs: Vec<ChaCha8Rng>,
    update_rngs: Vec<ChaCha8Rng>,
    eval_starts: Vec<Vec<f64>>,
    threads: usize,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = ContinuousEnv::new(config.env.id);
        let params = initial_params(&config, &env)?;
        let t = &config.train;
        let chief = Chief::new(params, t.workers, t.grad_clip, config.adam(), config.dual_adam())?;
        let streams = |s: Stream| (0..t.workers).map(|w| stream_rng(t.seed, s, w)).collect::<Vec<_>>();
        Ok(Self {
            env_rngs: streams(Stream::Env),
            policy_rngs: streams(Stream::PolicySampling),
            update_rngs: streams(Stream::ReplaySampling),
            eval_starts: evaluation_starts(&env, t.eval_episodes, t.eval_seed),
            replay: ReplayBuffer::new(t.replay_capacity)?,
            threads: worker_threads(t.workers),
            iteration: 0,
            episodes: 0,
            env_steps: 0,
            env,
            chief,
            config,
        })
    }

    pub fn params(&self) -> &SharedParams {
        &self.chief.params
    }

    /// Each worker collects `L` trajectories with `θ_i` into the shared replay.
    /// Returns the mean unscaled training return.
    pub fn collect(&mut self) -> Result<f64> {
        let mut total = 0.0;
        let mut count = 0;
        for w in 0..self.config.train.workers {
            for _ in 0..self.config.train.trajectories_per_iteration {
                let (traj, ret) = collect_trajectory(
                    &self.env,
                    &self.chief.params.reference,
                    self.config.env.reward_scale,
                    &mut self.env_rngs[w],
                    &mut self.policy_rngs[w],
                )?;
                self.env_steps += traj.len();
                self.episodes += 1;
                self.replay.append(traj)?;
                total += ret;
                count += 1;
            }
        }
        Ok(total / count as f64)
    }

    /// One synchronous step: all workers on the current snapshot, then one chief update.
    pub fn update(&mut self) -> Result<WorkerStats> {
        let results = run_workers(&self.chief.params, &self.replay, &self.config, &mut self.update_rngs, self.threads)?;
        let (bundles, stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
        self.chief.aggregate(&bundles)?;
        Ok(mean_stats(&stats))
    }

    pub fn evaluate(&self) -> Result<f64> {
        evaluate_policy(&self.env, &self.chief.params.policy, &self.eval_starts)
    }

    /// Collect, run `inner_steps` updates, refresh `θ_i` and `φ′`, and report.
    pub fn outer_iteration(&mut self) -> Result<MetricsRow> {
        self.collect()?;
        let mut stats = Vec::with_capacity(self.config.train.inner_steps);
        for _ in 0..self.config.train.inner_steps {
            stats.push(self.update()?);
        }
        self.chief.params.refresh_reference();
        self.iteration += 1;
        let mean_return = if self.iteration % self.config.train.eval_interval == 0 || self.budget_exhausted() {
            self.evaluate()?
        } else {
            f64::NAN
        };
        let s = mean_stats(&stats);
        let p = &self.chief.params;
        Ok(MetricsRow {
            iteration: self.iteration,
            env_steps: self.env_steps,
            episodes: self.episodes,
            mean_return,
            q_loss: s.q_loss,
            eta: s.eta,
            eta_mu: p.eta_mu(),
            eta_sigma: p.eta_sigma(),
            kl_mean: s.kl_mean,
            kl_cov: s.kl_cov,
            dual_value: s.dual_value,
        })
    }

    pub fn budget_exhausted(&self) -> bool {
        self.episodes >= self.config.train.max_trajectories
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            env: self.env.id(),
            params: self.chief.params.clone(),
            iteration: self.iteration,
            episodes: self.episodes,
            env_steps: self.env_steps,
        }
    }
}

/// What a finished run reports.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub metrics: Vec<MetricsRow>,
    /// Episodes collected when the evaluation return first reached
    /// `train.stop_return`, if it did.
    pub episodes_to_threshold: Option<usize>,
    pub checkpoint: Checkpoint,
}

/// Runs outer iterations until the trajectory budget is spent (or the stop
/// return is reached). With `out`, writes `metrics.csv` and a checkpoint
/// there; on a fault the checkpoint is written before the error is returned.
pub fn train(config: TrainConfig, out: Option<&Path>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config)?;
    let mut writer = match out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Some(MetricsWriter::create(dir.join("metrics.csv"))?)
        }
        None => None,
    };
    let mut metrics = Vec::new();
    let mut reached = None;
    let result = (|| -> Result<()> {
        while !trainer.budget_exhausted() {
            let row = trainer.outer_iteration()?;
            if let Some(w) = writer.as_mut() {
                w.append(&row)?;
            }
            metrics.push(row);
            if let Some(target) = trainer.config.train.stop_return {
                if row.mean_return >= target {
                    reached = Some(row.episodes);
                    break;
                }
            }
        }
        Ok(())
    })();
    let checkpoint = trainer.checkpoint();
    if let Some(dir) = out {
        checkpoint.save(dir)?;
    }
    result?;
    Ok(TrainOutcome { metrics, episodes_to_threshold: reached, checkpoint })
}
