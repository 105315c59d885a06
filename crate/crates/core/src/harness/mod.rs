//! Configuration-driven studies behind the command line tool.

pub mod config;
pub mod problem;
pub mod study;
pub mod tables;

use crate::error::{Error, Result};

pub use config::{CalibrationConfig, Mode, ModelConfig, Overrides, RootChoice, RunConfig, TablesConfig};
pub use problem::{build_problem, Metric, Problem};
pub use study::{
    aggregate, cmd_compare, ensure_parent, cmd_plan, cmd_run, write_compare, write_study, CompareResult, CompareRow, PlanReport, Row,
    StudyResult, Summary,
};
pub use tables::{cmd_tables, self_test, CellCheck, TableCell};

/// Environment variable holding the number of worker threads.
pub const WORKERS_ENV: &str = "ML2RGODIC_WORKERS";

/// Worker count from [`WORKERS_ENV`], defaulting to the available parallelism.
pub fn worker_count() -> Result<usize> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::Config(format!("{WORKERS_ENV}: expected a positive integer, got '{v}'"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn worker_pool() -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count()?)
        .build()
        .map_err(|e| Error::Config(format!("{WORKERS_ENV}: {e}")))
}
