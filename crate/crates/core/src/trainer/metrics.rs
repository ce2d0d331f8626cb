use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// One row per outer iteration. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    /// Mean evaluation return of the deterministic policy (NaN when not evaluated).
    pub mean_return: f64,
    pub q_loss: f64,
    pub eta: f64,
    pub eta_mu: f64,
    pub eta_sigma: f64,
    pub kl_mean: f64,
    pub kl_cov: f64,
    pub dual_value: f64,
}

pub const METRICS_COLUMNS: [&str; 11] = [
    "iteration",
    "env_steps",
    "episodes",
    "mean_return",
    "q_loss",
    "eta",
    "eta_mu",
    "eta_sigma",
    "kl_mean",
    "kl_cov",
    "dual_value",
];

/// Appends rows to a CSV file, header first.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(File::create(path)?);
        inner.write_record(METRICS_COLUMNS)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn append(&mut self, row: &MetricsRow) -> Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<Vec<MetricsRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    Ok(reader.deserialize().collect::<std::result::Result<_, _>>()?)
}
