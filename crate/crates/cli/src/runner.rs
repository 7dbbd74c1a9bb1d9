use anyhow::{anyhow, Result};
use fsar_core::metrics::{self, MetricVector};
use fsar_core::sim::{run_scenario, RunResult};
use rayon::prelude::*;

use crate::plan::PlannedRun;

/// Environment variable that caps the worker pool.
pub const WORKERS_ENV: &str = "FSAR_WORKERS";

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub id: String,
    pub metrics: MetricVector,
    pub result: RunResult,
}

pub fn workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn run_one(run: &PlannedRun) -> Result<RunRecord> {
    let result = run_scenario(&run.config)
        .map_err(|e| anyhow!("run {} failed: {e}\nconfig: {}", run.id, run.config.to_json()))?;
    Ok(RunRecord {
        id: run.id.clone(),
        metrics: metrics::compute(&result),
        result,
    })
}

/// Executes every run on a worker pool; results keep plan order.
pub fn execute(runs: &[PlannedRun], workers: usize) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| runs.par_iter().map(run_one).collect())
}
