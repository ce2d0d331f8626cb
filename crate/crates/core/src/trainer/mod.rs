//! The training loop: data collection, synchronous chief/worker gradient
//! averaging, reference refreshes, metrics and checkpoints.

mod checkpoint;
mod chief;
mod config;
mod metrics;
mod rng;
mod run;
mod worker;

pub use checkpoint::{Checkpoint, CheckpointManifest, TensorEntry, BLOB_FILE, MANIFEST_FILE};
pub use chief::{clip_norm, mean_bundle, Chief, GradientBundle, SharedParams};
pub use config::{
    EnvSection, EtaSolver, MpoSection, NetSection, OptimSection, RetraceSection, RlSection, TrainConfig, TrainSection,
    VariationalMode,
};
pub use metrics::{read_metrics, MetricsRow, MetricsWriter, METRICS_COLUMNS};
pub use rng::{stream_rng, Stream};
pub use run::{
    collect_trajectory, evaluate_policy, initial_params, run_workers, train, worker_threads, TrainOutcome, Trainer, THREADS_ENV,
};
pub use worker::{worker_iteration, WorkerStats};
