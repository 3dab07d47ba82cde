//! Scenario files, end-to-end runs with retries, artifacts, the benchmark
//! suite and offline monitoring. The `stlddp` binary is a thin wrapper.

mod bench;
mod monitor;
mod run;
mod scenario;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use thiserror::Error;

pub use bench::{riccati_cost, run_benchmark_suite, write_benchmark, BenchOptions, BenchRow, BenchRun, BenchSummary, LqrCheck, Solver};
pub use monitor::{monitor, read_signal_csv, MonitorReport, MonitorSpec};
pub use run::{run_scenario, run_scenario_file, write_artifacts, Artifacts, AttemptKind, AttemptSummary, RunOptions, RunOutcome, RunReport};
pub use scenario::{bundled_names, bundled_scenario, random_controls, InitPolicy, ModelSpec, PredicateSpec, Problem, RetryPolicy, Scenario};

use crate::costgen::CostError;
use crate::ddp::SolveError;
use crate::dynamics::DynamicsError;
use crate::stl::StlError;

/// Process exit code for a certified run.
pub const EXIT_SATISFIED: i32 = 0;
/// Process exit code for any error.
pub const EXIT_ERROR: i32 = 1;
/// Process exit code when no attempt could be certified.
pub const EXIT_NOT_CERTIFIED: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}, row {row}: {message}", .path.display())]
    Parse { path: PathBuf, row: usize, message: String },
    #[error("solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error("soundness violation: {0}")]
    Unsound(String),
}

impl CliError {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Config { path: path.into(), message: message.into() }
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, row: usize, message: impl Into<String>) -> Self {
        CliError::Parse { path: path.to_path_buf(), row, message: message.into() }
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        kind => CliError::parse(path, row, format!("{kind:?}")),
    }
}

/// Controls stored in the `u_*` columns of a trajectory CSV.
pub fn read_trajectory_controls(path: &Path) -> Result<Vec<DVector<f64>>, CliError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let cols: Vec<usize> = headers.iter().enumerate().filter(|(_, h)| h.starts_with("u_")).map(|(i, _)| i).collect();
    if cols.is_empty() {
        return Err(CliError::parse(path, 1, "no `u_*` columns in header"));
    }
    let mut controls = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2;
        let record = record.map_err(|e| csv_error(path, e))?;
        let u = cols
            .iter()
            .map(|&c| record.get(c).unwrap_or("").trim().parse::<f64>().map_err(|e| CliError::parse(path, row, format!("column {}: {e}", &headers[c]))))
            .collect::<Result<Vec<_>, _>>()?;
        controls.push(DVector::from_vec(u));
    }
    Ok(controls)
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}
