//! Deterministic parallel Monte Carlo drivers.
//!
//! Work is split along the fixed path blocks of the core estimators; block
//! sums are collected in block order and combined exactly as the serial
//! reduction does, so the worker count changes wall time only, never a bit
//! of the output.

use cee_core::mc::{self, McConfig, McEstimate, ProblemSpec};
use cee_core::spatial::Point;
use cee_core::Result;
use rayon::prelude::*;

/// Worker count: explicit setting, else `CEE_WORKERS`, else the machine.
pub fn resolve_workers(requested: Option<usize>) -> usize {
    requested
        .or_else(|| {
            std::env::var("CEE_WORKERS")
                .ok()
                .and_then(|v| v.parse().ok())
        })
        .filter(|w| *w > 0)
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

pub fn pool(workers: usize) -> rayon::ThreadPool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
}

/// Parallel twin of [`mc::estimate_point`]; bit-identical output.
pub fn estimate_point_par(
    problem: &ProblemSpec,
    t: f64,
    x: &Point,
    cfg: &McConfig,
    pool: &rayon::ThreadPool,
) -> Result<McEstimate> {
    let blocks: Result<Vec<_>> = pool.install(|| {
        (0..mc::n_blocks(cfg.n_paths))
            .into_par_iter()
            .map(|b| mc::block_sum(problem, t, x, cfg, b))
            .collect()
    });
    Ok(mc::assemble(blocks?, cfg))
}

/// Parallel twin of [`mc::estimate_field`].
pub fn estimate_field_par(
    problem: &ProblemSpec,
    grid: &[(f64, Point)],
    cfg: &McConfig,
    pool: &rayon::ThreadPool,
) -> Result<Vec<McEstimate>> {
    grid.iter()
        .enumerate()
        .map(|(i, (t, x))| {
            let point_cfg = cfg.clone().with_stream(cfg.stream + i as u64);
            estimate_point_par(problem, *t, x, &point_cfg, pool)
        })
        .collect()
}
