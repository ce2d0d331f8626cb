mod common;

use common::*;
use mpo_lab::envs::EnvId;
use mpo_lab::trainer::*;
use rand::{Rng, RngCore};

fn tiny_config() -> TrainConfig {
    TrainConfig::from_toml_str(
        r#"
        [env]
        id = "point_mass"
        [train]
        inner_steps = 3
        max_trajectories = 2
        eval_episodes = 2
        [retrace]
        steps = 3
        batch_windows = 4
        [mpo]
        action_samples = 5
        [net]
        policy_hidden = [8]
        critic_hidden = [8]
        "#,
    )
    .unwrap()
}

fn config_error_key(text: &str) -> String {
    match TrainConfig::from_toml_str(text) {
        Err(mpo_lab::Error::Config { key, .. }) => key,
        other => panic!("expected a config error, got {other:?}"),
    }
}

#[test]
fn empty_config_gives_published_defaults() {
    let c = TrainConfig::from_toml_str("").unwrap();
    assert_eq!(c, TrainConfig::default());
    assert_eq!(c.mpo.epsilon, 0.1);
    assert_eq!(c.mpo.epsilon_mu, 0.1);
    assert_eq!(c.mpo.epsilon_sigma, 1e-4);
    assert_eq!(c.rl.gamma, 0.99);
    assert_eq!(c.optim.lr, 5e-4);
    assert_eq!(c.net.policy_hidden, vec![100, 100]);
    assert_eq!(c.net.critic_hidden, vec![200, 200]);
    assert_eq!(c.mpo.mode, VariationalMode::Nonparametric);
    assert_eq!(c.train.inner_steps, 1000);
    assert_eq!(c.mpo.action_samples, 20);
}

#[test]
fn config_errors_name_the_key() {
    assert_eq!(config_error_key("[rl]\ngamma = 1.5"), "rl.gamma");
    assert_eq!(config_error_key("[mpo]\nbogus = 1"), "mpo.bogus");
    assert_eq!(config_error_key("nonsense = true"), "nonsense");
    assert_eq!(config_error_key("[mpo]\nepsilon = \"big\""), "mpo.epsilon");
    assert_eq!(config_error_key("[train]\nstop_return = \"x\""), "train.stop_return");
    assert_eq!(config_error_key("[train]\nworkers = 0"), "train.workers");
    assert_eq!(config_error_key("[mpo]\nepsilon_sigma = -1.0"), "mpo.epsilon_sigma");
    assert_eq!(config_error_key("[mpo]\nmode = \"other\""), "<document>");
}

#[test]
fn dotted_keys_and_integer_floats_parse() {
    let c = TrainConfig::from_toml_str("mpo.epsilon = 1\nenv.id = \"point_mass\"\ntrain.stop_return = -20").unwrap();
    assert_eq!(c.mpo.epsilon, 1.0);
    assert_eq!(c.env.id, EnvId::PointMass);
    assert_eq!(c.train.stop_return, Some(-20.0));
}

#[test]
fn config_round_trips_through_toml() {
    let mut r = rng(1);
    for _ in 0..20 {
        let mut c = TrainConfig::default();
        c.mpo.epsilon = r.gen_range(1e-3..1.0);
        c.mpo.epsilon_sigma = r.gen_range(1e-6..1e-3);
        c.optim.lr = r.gen::<f64>() * 1e-2 + 1e-9;
        c.train.seed = r.gen_range(0..=i64::MAX as u64);
        c.train.stop_return = if r.gen() { Some(-r.gen::<f64>() * 100.0) } else { None };
        c.mpo.dual_lr = if r.gen() { Some(r.gen_range(1e-4..1e-1)) } else { None };
        c.mpo.mode = if r.gen() { VariationalMode::Parametric } else { VariationalMode::Nonparametric };
        c.net.critic_hidden = vec![r.gen_range(1..300); r.gen_range(1..4)];
        let back = TrainConfig::from_toml_str(&c.to_toml_string()).unwrap();
        assert_eq!(back, c);
    }
}

#[test]
fn rng_streams_are_independent_and_reproducible() {
    let draw = |s, w| stream_rng(7, s, w).next_u64();
    assert_eq!(draw(Stream::Env, 0), draw(Stream::Env, 0));
    assert_ne!(draw(Stream::Env, 0), draw(Stream::Env, 1));
    assert_ne!(draw(Stream::Env, 0), draw(Stream::PolicySampling, 0));
    assert_ne!(stream_rng(7, Stream::Init, 0).next_u64(), stream_rng(8, Stream::Init, 0).next_u64());
}

fn random_bundle(worker_id: usize, params: &SharedParams, r: &mut rand_chacha::ChaCha8Rng) -> GradientBundle {
    GradientBundle {
        worker_id,
        version: params.version,
        critic: random_vec(params.critic.online.num_params(), 1e-2, r),
        policy: random_vec(params.policy.net.num_params(), 1e-2, r),
        eta: r.gen_range(-1e-2..1e-2),
        eta_mu: r.gen_range(-1e-2..1e-2),
        eta_sigma: r.gen_range(-1e-2..1e-2),
    }
}

fn chief_for(config: &TrainConfig, workers: usize) -> Chief {
    let env = mpo_lab::envs::ContinuousEnv::new(config.env.id);
    let params = initial_params(config, &env).unwrap();
    Chief::new(params, workers, 1.0, config.adam(), config.dual_adam()).unwrap()
}

fn assert_close_params(a: &SharedParams, b: &SharedParams, tol: f64) {
    assert_eq!(a.version, b.version);
    let flat = |p: &SharedParams| {
        let mut v = Vec::new();
        for d in [&p.policy.net.as_slice(), &p.reference.net.as_slice(), &p.critic.online.as_slice(), &p.critic.target.as_slice()] {
            v.extend_from_slice(d);
        }
        v.extend([p.eta_raw, p.eta_mu_raw, p.eta_sigma_raw]);
        v
    };
    for (x, y) in flat(a).iter().zip(&flat(b)) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn averaged_update_equals_update_from_precomputed_mean() {
    let config = tiny_config();
    let mut r = rng(2);
    let mut chief = chief_for(&config, 4);
    let mut single = chief.clone();
    for _ in 0..5 {
        let bundles: Vec<GradientBundle> = (0..4).rev().map(|w| random_bundle(w, &chief.params, &mut r)).collect();
        let mean = mean_bundle(&bundles).unwrap();
        let manual: Vec<f64> = (0..mean.policy.len()).map(|i| bundles.iter().map(|b| b.policy[i]).sum::<f64>() / 4.0).collect();
        for (a, b) in mean.policy.iter().zip(&manual) {
            assert!((a - b).abs() <= 1e-15);
        }
        chief.aggregate(&bundles).unwrap();
        single.apply(&mean).unwrap();
        assert_eq!(chief.params, single.params);
    }
}

#[test]
fn identical_bundles_match_single_worker_and_opposites_cancel() {
    let config = tiny_config();
    let mut r = rng(3);
    let mut many = chief_for(&config, 3);
    let mut one = chief_for(&config, 1);
    let g = random_bundle(0, &many.params, &mut r);
    let bundles: Vec<GradientBundle> = (0..3).map(|w| GradientBundle { worker_id: w, ..g.clone() }).collect();
    many.aggregate(&bundles).unwrap();
    one.aggregate(std::slice::from_ref(&g)).unwrap();
    assert_close_params(&many.params, &one.params, 1e-15);

    let mut pair = chief_for(&config, 2);
    let before = pair.params.clone();
    let neg = GradientBundle {
        worker_id: 1,
        critic: g.critic.iter().map(|x| -x).collect(),
        policy: g.policy.iter().map(|x| -x).collect(),
        eta: -g.eta,
        eta_mu: -g.eta_mu,
        eta_sigma: -g.eta_sigma,
        ..g.clone()
    };
    pair.aggregate(&[g, neg]).unwrap();
    assert_eq!(pair.params.policy, before.policy);
    assert_eq!(pair.params.critic, before.critic);
    assert_eq!(pair.params.eta_raw, before.eta_raw);
}

#[test]
fn barrier_rejects_missing_stale_and_non_finite_bundles() {
    let config = tiny_config();
    let mut r = rng(4);
    let mut chief = chief_for(&config, 2);
    let a = random_bundle(0, &chief.params, &mut r);
    let b = random_bundle(1, &chief.params, &mut r);
    let fault = |res: mpo_lab::Result<()>| matches!(res, Err(mpo_lab::Error::Fault(_)));
    assert!(fault(chief.aggregate(std::slice::from_ref(&a))));
    assert!(fault(chief.aggregate(&[a.clone(), GradientBundle { worker_id: 0, ..b.clone() }])));
    assert!(fault(chief.aggregate(&[a.clone(), GradientBundle { version: 9, ..b.clone() }])));
    let mut bad = b.clone();
    bad.policy[0] = f64::NAN;
    assert!(fault(chief.aggregate(&[a.clone(), bad])));
    assert_eq!(chief.params.version, 0);
    chief.aggregate(&[a, b]).unwrap();
    assert_eq!(chief.params.version, 1);
}

#[test]
fn clipping_bounds_the_norm() {
    let mut g = vec![3.0, 4.0];
    clip_norm(&mut g, 1.0);
    assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
    let mut small = vec![0.1, -0.2];
    clip_norm(&mut small, 1.0);
    assert_eq!(small, vec![0.1, -0.2]);
}

#[test]
fn workers_are_deterministic_and_need_data() {
    let mut trainer = Trainer::new(tiny_config()).unwrap();
    let params = trainer.params().clone();
    let empty = mpo_lab::retrace::ReplayBuffer::new(100).unwrap();
    assert!(worker_iteration(0, &params, &empty, &trainer.config, &mut rng(0)).is_err());

    trainer.collect().unwrap();
    let a = worker_iteration(0, &params, &trainer.replay, &trainer.config, &mut stream_rng(5, Stream::ReplaySampling, 0)).unwrap();
    let b = worker_iteration(0, &params, &trainer.replay, &trainer.config, &mut stream_rng(5, Stream::ReplaySampling, 0)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.0.critic.len(), params.critic.online.num_params());
    assert_eq!(a.0.policy.len(), params.policy.net.num_params());
    assert!(a.0.is_finite());
}

#[test]
fn threaded_workers_match_sequential_workers() {
    let mut config = tiny_config();
    config.train.workers = 3;
    let mut trainer = Trainer::new(config.clone()).unwrap();
    trainer.collect().unwrap();
    let mut rngs_a: Vec<_> = (0..3).map(|w| stream_rng(1, Stream::ReplaySampling, w)).collect();
    let mut rngs_b = rngs_a.clone();
    let seq = run_workers(trainer.params(), &trainer.replay, &config, &mut rngs_a, 1).unwrap();
    let par = run_workers(trainer.params(), &trainer.replay, &config, &mut rngs_b, 3).unwrap();
    assert_eq!(seq, par);
    assert_eq!(seq.iter().map(|(b, _)| b.worker_id).collect::<Vec<_>>(), vec![0, 1, 2]);
}

#[test]
fn reference_policy_only_moves_at_iteration_boundaries() {
    let mut trainer = Trainer::new(tiny_config()).unwrap();
    trainer.collect().unwrap();
    let reference = trainer.params().reference.clone();
    let target = trainer.params().critic.target.clone();
    for _ in 0..3 {
        trainer.update().unwrap();
    }
    assert_eq!(trainer.params().reference, reference);
    assert_eq!(trainer.params().critic.target, target);
    assert_ne!(trainer.params().policy, reference);
    trainer.outer_iteration().unwrap();
    assert_eq!(trainer.params().reference, trainer.params().policy);
    assert_eq!(trainer.params().critic.target, trainer.params().critic.online);
}

#[test]
fn zero_budget_writes_only_the_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_config();
    config.train.max_trajectories = 0;
    let outcome = train(config.clone(), Some(dir.path())).unwrap();
    assert!(outcome.metrics.is_empty());
    let loaded = Checkpoint::load(dir.path()).unwrap();
    let env = mpo_lab::envs::ContinuousEnv::new(config.env.id);
    assert_eq!(loaded.params, initial_params(&config, &env).unwrap());
    assert_eq!(loaded.episodes, 0);
    assert!(read_metrics(dir.path().join("metrics.csv")).unwrap().is_empty());
}

#[test]
fn seeded_runs_write_identical_metrics() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut config = tiny_config();
    config.train.workers = 2;
    train(config.clone(), Some(a.path())).unwrap();
    train(config.clone(), Some(b.path())).unwrap();
    let bytes_a = std::fs::read(a.path().join("metrics.csv")).unwrap();
    assert_eq!(bytes_a, std::fs::read(b.path().join("metrics.csv")).unwrap());
    let rows = read_metrics(a.path().join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].episodes, 2);
    assert!(rows[0].mean_return.is_finite());

    config.train.seed = 1;
    let c = tempfile::tempdir().unwrap();
    train(config, Some(c.path())).unwrap();
    assert_ne!(bytes_a, std::fs::read(c.path().join("metrics.csv")).unwrap());
}

#[test]
fn metrics_csv_has_the_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let mut w = MetricsWriter::create(&path).unwrap();
    let row = MetricsRow {
        iteration: 1,
        env_steps: 200,
        episodes: 1,
        mean_return: -12.5,
        q_loss: 0.25,
        eta: f64::NAN,
        eta_mu: 1.0,
        eta_sigma: 2.0,
        kl_mean: 1e-3,
        kl_cov: 1e-5,
        dual_value: 0.5,
    };
    w.append(&row).unwrap();
    w.append(&MetricsRow { iteration: 2, ..row }).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], METRICS_COLUMNS.join(","));
    assert!(lines.iter().all(|l| l.split(',').count() == 11));
    let back = read_metrics(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert!(back[0].eta.is_nan());
    assert_eq!(back[1].mean_return, -12.5);
}

#[test]
fn checkpoints_round_trip_bitwise() {
    let mut trainer = Trainer::new(tiny_config()).unwrap();
    trainer.outer_iteration().unwrap();
    let ckpt = trainer.checkpoint();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ckpt.save(a.path()).unwrap();
    let loaded = Checkpoint::load(a.path()).unwrap();
    assert_eq!(loaded, ckpt);
    for (x, y) in loaded.params.policy.net.as_slice().iter().zip(ckpt.params.policy.net.as_slice()) {
        assert_eq!(x.to_bits(), y.to_bits());
    }
    loaded.save(b.path()).unwrap();
    for f in [MANIFEST_FILE, BLOB_FILE] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap());
    }
    let manifest: CheckpointManifest = serde_json::from_str(&std::fs::read_to_string(a.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest.tensors[0].name, "policy.layer0.weight");
    assert_eq!(manifest.tensors[0].shape, vec![8, 4]);

    let blob = std::fs::read(a.path().join(BLOB_FILE)).unwrap();
    std::fs::write(a.path().join(BLOB_FILE), &blob[..blob.len() - 8]).unwrap();
    assert!(matches!(Checkpoint::load(a.path()), Err(mpo_lab::Error::Checkpoint(_))));
}

#[test]
fn parametric_mode_trains() {
    let mut config = tiny_config();
    config.mpo.mode = VariationalMode::Parametric;
    let outcome = train(config, None).unwrap();
    assert_eq!(outcome.metrics.len(), 2);
    assert!(outcome.metrics[0].eta.is_nan());
    assert!(outcome.metrics[0].q_loss.is_finite());
}

#[test]
fn stop_return_ends_the_run_early() {
    let mut config = tiny_config();
    config.train.max_trajectories = 10;
    config.train.stop_return = Some(-1e9);
    let outcome = train(config, None).unwrap();
    assert_eq!(outcome.metrics.len(), 1);
    assert_eq!(outcome.episodes_to_threshold, Some(1));
}
