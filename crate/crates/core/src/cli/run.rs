use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DVector;
use serde::Serialize;

use super::scenario::{random_controls, InitPolicy, Problem, Scenario};
use super::{write_file, CliError};
use crate::costgen::{diagnostics, CertificateVerdict, TimestepDiagnostic};
use crate::ddp::{solve, SolveResult, SolverConfig, StopReason};
use crate::smoothing::SmoothParams;
use crate::stl::{PredicateKind, Verdict};

/// Command-line overrides applied on top of a scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub max_iterations: Option<usize>,
    pub retries: Option<usize>,
}

impl RunOptions {
    pub fn apply(&self, scenario: &mut Scenario) -> Result<(), CliError> {
        if let Some(seed) = self.seed {
            scenario.set_seed(seed);
        }
        let k1 = self.k1.unwrap_or(scenario.smoothing.k1);
        let k2 = self.k2.unwrap_or(scenario.smoothing.k2);
        scenario.smoothing = SmoothParams::new(k1, k2).map_err(|e| CliError::config("smoothing", e.to_string()))?;
        if let Some(n) = self.max_iterations {
            scenario.solver.max_iterations = n;
            scenario.baseline.max_iterations = n;
        }
        if let Some(r) = self.retries {
            scenario.retry.budget = r;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptKind {
    Initial,
    /// `k1`, `k2` multiplied by the escalation factor, warm-started from the
    /// previous attempt's controls.
    Sharpened,
    FreshInit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptSummary {
    pub index: usize,
    pub kind: AttemptKind,
    pub k1: f64,
    pub k2: f64,
    pub seed: Option<u64>,
    pub iterations: usize,
    pub wall_clock_ms: f64,
    pub verdict: Option<CertificateVerdict>,
    pub exact_robustness: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub model: String,
    pub specification: String,
    pub horizon: usize,
    pub verdict: CertificateVerdict,
    pub exact_robustness: f64,
    pub exact_verdict: Verdict,
    /// `l_t` per timestep, `None` where no term applies.
    pub running_costs: Vec<Option<f64>>,
    /// Largest individual weighted term per timestep.
    pub term_margins: Vec<Option<f64>>,
    pub first_violation: Option<usize>,
    /// Iterations of the reported attempt.
    pub iterations: usize,
    pub total_iterations: usize,
    pub retries_used: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub wall_clock_ms: f64,
    pub cost_history: Vec<f64>,
    pub k1: f64,
    pub k2: f64,
    pub seed: Option<u64>,
    pub solver: SolverConfig,
    pub attempts: Vec<AttemptSummary>,
    pub notes: Vec<String>,
    pub diagnostics: Vec<TimestepDiagnostic>,
}

pub struct RunOutcome {
    pub report: RunReport,
    pub result: SolveResult,
    pub problem: Problem,
    /// Smoothing parameters of the reported attempt.
    pub params: SmoothParams,
}

impl RunOutcome {
    pub fn is_satisfied(&self) -> bool {
        self.report.verdict == CertificateVerdict::Satisfied
    }
}

fn ms(d: std::time::Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn attempt_summary(
    index: usize,
    kind: AttemptKind,
    params: &SmoothParams,
    seed: Option<u64>,
    outcome: &Result<SolveResult, CliError>,
    elapsed: f64,
) -> AttemptSummary {
    let (iterations, verdict, exact_robustness, error) = match outcome {
        Ok(r) => (r.iterations, Some(r.certificate.verdict), Some(r.certificate.exact_robustness), None),
        Err(e) => (0, None, None, Some(e.to_string())),
    };
    AttemptSummary { index, kind, k1: params.k1, k2: params.k2, seed, iterations, wall_clock_ms: elapsed, verdict, exact_robustness, error }
}

/// Compiles, solves and certifies a scenario, retrying while not certified.
///
/// Retries alternate between sharpening (`k1`, `k2` scaled up, warm-started
/// from the last solution) and, for random initializations with
/// `fresh_init`, a new random draw at the original sharpness.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let problem = scenario.build()?;
    let base = scenario.smoothing;
    let mut params = base;
    let mut seed = scenario.seed();
    let mut controls = scenario.initial_controls(&problem)?;
    let solve_with = |controls: &[DVector<f64>], params: &SmoothParams| -> Result<SolveResult, CliError> {
        Ok(solve(problem.model.as_ref(), &problem.table, &problem.x0, controls, &scenario.solver, params)?)
    };

    let t0 = Instant::now();
    let first = solve_with(&controls, &params);
    let mut attempts = vec![attempt_summary(0, AttemptKind::Initial, &params, seed, &first, ms(t0.elapsed()))];
    let mut best = first?;
    let mut best_params = params;
    let mut best_seed = seed;
    let mut total_iterations = best.iterations;
    let mut retries_used = 0;
    let mut last_controls = best.trajectory.controls.clone();

    for i in 1..=scenario.retry.budget {
        if best.certificate.is_satisfied() {
            break;
        }
        retries_used = i;
        let fresh = scenario.retry.fresh_init && scenario.init.is_random() && i % 2 == 0;
        let kind = if fresh {
            if let InitPolicy::RandomUniform { lo, hi, seed: s0 } = scenario.init {
                let s = s0.wrapping_add(1000 * i as u64);
                seed = Some(s);
                controls = random_controls(problem.model.control_dim(), scenario.horizon + 1, lo, hi, s);
            }
            params = base;
            AttemptKind::FreshInit
        } else {
            params = params.scaled(scenario.retry.k_escalation).map_err(|e| CliError::config("retry.k_escalation", e.to_string()))?;
            controls = last_controls.clone();
            AttemptKind::Sharpened
        };
        let t0 = Instant::now();
        let outcome = solve_with(&controls, &params);
        attempts.push(attempt_summary(i, kind, &params, seed, &outcome, ms(t0.elapsed())));
        if let Ok(r) = outcome {
            total_iterations += r.iterations;
            last_controls = r.trajectory.controls.clone();
            let better = r.certificate.is_satisfied() || r.certificate.exact_robustness > best.certificate.exact_robustness;
            if better {
                best = r;
                best_params = params;
                best_seed = seed;
            }
        }
    }

    let cert = &best.certificate;
    let report = RunReport {
        scenario: scenario.name.clone(),
        model: problem.model.name().to_string(),
        specification: problem.spec.to_string(),
        horizon: scenario.horizon,
        verdict: cert.verdict,
        exact_robustness: cert.exact_robustness,
        exact_verdict: cert.exact_verdict,
        running_costs: cert.running_costs.clone(),
        term_margins: cert.term_margins.clone(),
        first_violation: cert.first_violation,
        iterations: best.iterations,
        total_iterations,
        retries_used,
        converged: best.converged,
        stop_reason: best.stop_reason,
        wall_clock_ms: ms(start.elapsed()),
        cost_history: best.cost_history.clone(),
        k1: best_params.k1,
        k2: best_params.k2,
        seed: best_seed,
        solver: scenario.solver.clone(),
        attempts,
        notes: report_notes(scenario),
        diagnostics: diagnostics(&problem.table, &best.trajectory.output_signal(problem.model.dt()), &best_params)?,
    };
    check_report(&report)?;
    Ok(RunOutcome { report, result: best, problem, params: best_params })
}

fn report_notes(scenario: &Scenario) -> Vec<String> {
    let mut notes = vec![
        "eventually and until targets are weighted by max(1, t2 - t1) so zero-length intervals keep an incentive".to_string(),
        "the certificate requires every individual weighted term, not only the merged l_t, to be strictly negative".to_string(),
        "the solver is iterative LQR: dynamics second derivatives are dropped".to_string(),
    ];
    if scenario.solver.control_weight > 0.0 {
        notes.push(format!("the optimized objective adds 0.5 * {} * |u_t|^2; this term is excluded from the certificate", scenario.solver.control_weight));
    }
    notes
}

/// A satisfied report must carry positive robustness and negative margins.
fn check_report(report: &RunReport) -> Result<(), CliError> {
    if report.verdict != CertificateVerdict::Satisfied {
        return Ok(());
    }
    if !(report.exact_robustness > 0.0) {
        return Err(CliError::Unsound(format!("certified trajectory has exact robustness {}", report.exact_robustness)));
    }
    if let Some(t) = report.running_costs.iter().position(|l| matches!(l, Some(v) if !(*v < 0.0))) {
        return Err(CliError::Unsound(format!("certified trajectory has non-negative running cost at t = {t}")));
    }
    Ok(())
}

/// Paths of the files written for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifacts {
    pub trajectory_csv: PathBuf,
    pub report_json: PathBuf,
    pub plot_csv: PathBuf,
}

/// Writes `<name>_trajectory.csv`, `<name>_report.json` and `<name>_plot.csv`.
pub fn write_artifacts(outcome: &RunOutcome, scenario: &Scenario, out_dir: &Path) -> Result<Artifacts, CliError> {
    let name = &scenario.name;
    let artifacts = Artifacts {
        trajectory_csv: out_dir.join(format!("{name}_trajectory.csv")),
        report_json: out_dir.join(format!("{name}_report.json")),
        plot_csv: out_dir.join(format!("{name}_plot.csv")),
    };
    write_file(&artifacts.trajectory_csv, trajectory_csv(outcome).as_bytes())?;
    let mut json = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
    json.push('\n');
    write_file(&artifacts.report_json, json.as_bytes())?;
    write_file(&artifacts.plot_csv, plot_csv(outcome, scenario).as_bytes())?;
    Ok(artifacts)
}

/// Loads a scenario (a file path or a bundled name), applies overrides, runs
/// it and writes the artifacts.
pub fn run_scenario_file(scenario: &str, options: &RunOptions, out_dir: &Path) -> Result<(RunOutcome, Artifacts), CliError> {
    let path = Path::new(scenario);
    let mut s = if path.exists() {
        Scenario::load(path)?
    } else {
        super::bundled_scenario(scenario)
            .ok_or_else(|| CliError::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or bundled scenario")))?
    };
    options.apply(&mut s)?;
    let outcome = run_scenario(&s)?;
    let artifacts = write_artifacts(&outcome, &s, out_dir)?;
    Ok((outcome, artifacts))
}

fn csv_text(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::WriterBuilder::new().flexible(false).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

fn trajectory_csv(outcome: &RunOutcome) -> String {
    let traj = &outcome.result.trajectory;
    let (n, m, p) = (traj.states[0].len(), traj.controls[0].len(), traj.outputs[0].len());
    let mut header = vec!["t".to_string()];
    header.extend((0..n).map(|i| format!("x_{i}")));
    header.extend((0..m).map(|i| format!("u_{i}")));
    header.extend((0..p).map(|i| format!("y_{i}")));
    header.push("margin".into());
    let mut rows = vec![header];
    for t in 0..traj.states.len() {
        let mut row = vec![t.to_string()];
        row.extend(traj.states[t].iter().chain(traj.controls[t].iter()).chain(traj.outputs[t].iter()).map(|v| v.to_string()));
        row.push(outcome.report.running_costs[t].map(|l| l.to_string()).unwrap_or_default());
        rows.push(row);
    }
    csv_text(rows)
}

fn plot_csv(outcome: &RunOutcome, scenario: &Scenario) -> String {
    let traj = &outcome.result.trajectory;
    let p = traj.outputs[0].len();
    let width = p.max(2);
    let pad = |mut v: Vec<String>| {
        v.resize(3 + width, String::new());
        v
    };
    let mut header = vec!["series".to_string(), "label".into(), "t".into()];
    header.extend((0..width).map(|i| format!("c{i}")));
    let mut rows = vec![header];
    for (t, y) in traj.outputs.iter().enumerate() {
        let mut row = vec!["trajectory".into(), String::new(), t.to_string()];
        row.extend(y.iter().map(|v| v.to_string()));
        rows.push(pad(row));
    }
    let arm = scenario.model.arm_params();
    if let Some(arm) = &arm {
        for (t, x) in traj.states.iter().enumerate() {
            let e = arm.forward_kinematics(&x.as_slice()[..3]);
            rows.push(pad(vec!["end_effector".into(), String::new(), t.to_string(), e[0].to_string(), e[1].to_string()]));
        }
    }
    for pred in outcome.problem.predicates.iter() {
        let label = pred.name.clone();
        match &pred.kind {
            PredicateKind::Box { bounds } if bounds.len() == 2 => {
                if let (Some((x0, x1)), Some((y0, y1))) = (bounds[0], bounds[1]) {
                    for (x, y) in [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)] {
                        rows.push(pad(vec!["region".into(), label.clone(), String::new(), x.to_string(), y.to_string()]));
                    }
                }
            }
            PredicateKind::Ball { center, radius, .. } if center.len() == 2 => {
                for k in 0..=64 {
                    let a = std::f64::consts::TAU * k as f64 / 64.0;
                    let (x, y) = (center[0] + radius * a.cos(), center[1] + radius * a.sin());
                    rows.push(pad(vec!["region".into(), label.clone(), String::new(), x.to_string(), y.to_string()]));
                }
            }
            PredicateKind::Ball { center, .. } => {
                let mut row = vec!["center".into(), label.clone(), String::new()];
                row.extend(center.iter().map(|v| v.to_string()));
                rows.push(pad(row));
                if let Some(arm) = &arm {
                    let e = arm.forward_kinematics(center);
                    rows.push(pad(vec!["end_effector_target".into(), label.clone(), String::new(), e[0].to_string(), e[1].to_string()]));
                }
            }
            _ => {}
        }
    }
    csv_text(rows)
}
