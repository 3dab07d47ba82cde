use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::scenario::{ModelSpec, PredicateSpec};
use super::{csv_error, CliError};
use crate::costgen::{check_soundness, compile_with, CertificateVerdict, CompileOptions};
use crate::smoothing::SmoothParams;
use crate::stl::{parse_spec, PredicateTable, Signal, Verdict};

/// Specification file for offline monitoring. Scenario files are accepted
/// as well; their other fields are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSpec {
    pub predicates: Vec<PredicateSpec>,
    pub specification: String,
    #[serde(default)]
    pub smoothing: SmoothParams,
    /// Only needed to resolve `ik_ball` predicates.
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub switching: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    pub specification: String,
    pub samples: usize,
    pub exact_robustness: f64,
    pub verdict: Verdict,
    pub certificate: CertificateVerdict,
    pub running_costs: Vec<Option<f64>>,
    pub first_violation: Option<usize>,
}

/// Reads a numeric CSV with one column per output dimension. A header row
/// is recognised by a non-numeric first field and skipped.
pub fn read_signal_csv(path: &Path, dt: f64) -> Result<Signal, CliError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_path(path).map_err(|e| csv_error(path, e))?;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| csv_error(path, e))?;
        if i == 0 && record.get(0).is_some_and(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        let values = record
            .iter()
            .enumerate()
            .map(|(c, f)| f.parse::<f64>().map_err(|e| CliError::parse(path, row, format!("column {}: {e}", c + 1))))
            .collect::<Result<Vec<_>, _>>()?;
        if let Some(first) = samples.first().map(Vec::len) {
            if values.len() != first {
                return Err(CliError::parse(path, row, format!("expected {first} columns, found {}", values.len())));
            }
        }
        samples.push(values);
    }
    if samples.is_empty() {
        return Err(CliError::parse(path, 0, "signal has no rows"));
    }
    Ok(Signal::new(samples, dt)?)
}

/// Exact robustness and certificate of a recorded signal. The horizon is the
/// last sample index.
pub fn monitor(signal_csv: &Path, spec_file: &Path) -> Result<MonitorReport, CliError> {
    let text = std::fs::read_to_string(spec_file).map_err(|e| CliError::io(spec_file, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let spec: MonitorSpec = serde_path_to_error::deserialize(de).map_err(|e| CliError::config(e.path().to_string(), e.inner().to_string()))?;
    let dt = match &spec.model {
        Some(ModelSpec::SingleIntegrator { dt } | ModelSpec::DoubleIntegrator { dt, .. } | ModelSpec::PlanarArm { dt, .. }) => *dt,
        None => 1.0,
    };
    let signal = read_signal_csv(signal_csv, dt)?;
    let arm = spec.model.as_ref().and_then(ModelSpec::arm_params);
    let mut predicates = PredicateTable::new();
    for p in &spec.predicates {
        let pred = p.resolve(arm.as_ref())?;
        if pred.dim() != signal.dim() {
            return Err(CliError::config(
                format!("predicates.{}", p.name()),
                format!("predicate dimension {} does not match the {} signal columns", pred.dim(), signal.dim()),
            ));
        }
        predicates.insert(pred);
    }
    let parsed = parse_spec(&spec.specification, signal.horizon(), &predicates).map_err(|e| CliError::config("specification", e.to_string()))?;
    let table = compile_with(&parsed, &CompileOptions { switching: spec.switching.clone() }).map_err(|e| CliError::config("switching", e.to_string()))?;
    let params = SmoothParams::new(spec.smoothing.k1, spec.smoothing.k2).map_err(|e| CliError::config("smoothing", e.to_string()))?;
    let cert = check_soundness(&table, &signal, &params)?;
    Ok(MonitorReport {
        specification: parsed.to_string(),
        samples: signal.len(),
        exact_robustness: cert.exact_robustness,
        verdict: cert.exact_verdict,
        certificate: cert.verdict,
        running_costs: cert.running_costs,
        first_violation: cert.first_violation,
    })
}
