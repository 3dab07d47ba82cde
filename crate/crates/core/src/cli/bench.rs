use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::scenario::{bundled_names, bundled_scenario, Scenario};
use super::{median, write_file, CliError};
use crate::ddp::{first_order_baseline, first_order_baseline_objective, optimize, solve, BaselineConfig, QuadraticObjective, SolveResult, SolverConfig};
use crate::dynamics::{double_integrator, DynamicsModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Ddp,
    Baseline,
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Ddp => "ddp",
            Solver::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchOptions {
    /// Seeds for scenarios with random initialization; deterministic
    /// initializations run once.
    pub seeds: Vec<u64>,
    pub scenarios: Vec<String>,
    pub solvers: Vec<Solver>,
    pub include_lqr: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        BenchOptions {
            seeds: (0..20).collect(),
            scenarios: bundled_names().map(String::from).collect(),
            solvers: vec![Solver::Ddp, Solver::Baseline],
            include_lqr: true,
        }
    }
}

/// One solve in the suite. Single attempt, no retries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRun {
    pub scenario: String,
    pub solver: Solver,
    pub seed: Option<u64>,
    pub satisfied: bool,
    pub exact_robustness: Option<f64>,
    pub wall_clock_ms: Option<f64>,
    pub iterations: Option<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub scenario: String,
    pub solver: Solver,
    pub runs: usize,
    pub successes: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub median_wall_clock_ms: Option<f64>,
    pub median_iterations: Option<f64>,
}

/// Both optimizers on a linear-quadratic problem against the Riccati cost.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LqrCheck {
    pub riccati_cost: f64,
    pub ddp_cost: f64,
    pub ddp_iterations: usize,
    pub baseline_cost: f64,
    pub baseline_iterations: usize,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub rows: Vec<BenchRow>,
    pub runs: Vec<BenchRun>,
    pub lqr: Option<LqrCheck>,
}

impl BenchSummary {
    pub fn row(&self, scenario: &str, solver: Solver) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.scenario == scenario && r.solver == solver)
    }

    /// Markdown comparison table.
    pub fn table(&self) -> String {
        let mut s =
            String::from("| scenario | solver | runs | success rate | median wall-clock (ms) | median iterations | errors |\n|---|---|---|---|---|---|---|\n");
        let opt = |v: Option<f64>, prec: usize| v.map(|v| format!("{v:.prec$}")).unwrap_or_else(|| "-".into());
        for r in &self.rows {
            let _ = writeln!(
                s,
                "| {} | {} | {} | {:.2} | {} | {} | {} |",
                r.scenario,
                r.solver.name(),
                r.runs,
                r.success_rate,
                opt(r.median_wall_clock_ms, 1),
                opt(r.median_iterations, 1),
                r.errors
            );
        }
        if let Some(l) = &self.lqr {
            let _ = writeln!(
                s,
                "\nLQR validation: Riccati cost {:.9}, ddp {:.9} ({} it), baseline {:.9} ({} it), tolerance {:e}: {}",
                l.riccati_cost,
                l.ddp_cost,
                l.ddp_iterations,
                l.baseline_cost,
                l.baseline_iterations,
                l.tolerance,
                if l.passed { "pass" } else { "FAIL" }
            );
        }
        s
    }
}

fn run_once(scenario: &Scenario, solver: Solver) -> Result<SolveResult, CliError> {
    let problem = scenario.build()?;
    let controls = scenario.initial_controls(&problem)?;
    let model = problem.model.as_ref();
    Ok(match solver {
        Solver::Ddp => solve(model, &problem.table, &problem.x0, &controls, &scenario.solver, &scenario.smoothing)?,
        Solver::Baseline => {
            let config = BaselineConfig { control_weight: scenario.solver.control_weight, ..scenario.baseline.clone() };
            first_order_baseline(model, &problem.table, &problem.x0, &controls, &config, &scenario.smoothing)?
        }
    })
}

/// Runs every selected scenario with every selected solver. A failing run is
/// recorded and the suite continues.
pub fn run_benchmark_suite(options: &BenchOptions) -> Result<BenchSummary, CliError> {
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for name in &options.scenarios {
        let base = bundled_scenario(name).ok_or_else(|| CliError::config("bench.scenarios", format!("unknown bundled scenario `{name}`")))?;
        let seeds: Vec<Option<u64>> = if base.init.is_random() { options.seeds.iter().copied().map(Some).collect() } else { vec![None] };
        for &solver in &options.solvers {
            let mut cell = Vec::new();
            for &seed in &seeds {
                let mut s = base.clone();
                if let Some(seed) = seed {
                    s.set_seed(seed);
                }
                let run = match run_once(&s, solver) {
                    Ok(r) => BenchRun {
                        scenario: name.clone(),
                        solver,
                        seed,
                        satisfied: r.certificate.is_satisfied(),
                        exact_robustness: Some(r.certificate.exact_robustness),
                        wall_clock_ms: Some(r.elapsed.as_secs_f64() * 1e3),
                        iterations: Some(r.iterations),
                        error: None,
                    },
                    Err(e) => BenchRun {
                        scenario: name.clone(),
                        solver,
                        seed,
                        satisfied: false,
                        exact_robustness: None,
                        wall_clock_ms: None,
                        iterations: None,
                        error: Some(e.to_string()),
                    },
                };
                cell.push(run);
            }
            rows.push(summarize(name, solver, &cell));
            runs.extend(cell);
        }
    }
    let lqr = if options.include_lqr { Some(lqr_check()?) } else { None };
    Ok(BenchSummary { rows, runs, lqr })
}

fn summarize(name: &str, solver: Solver, cell: &[BenchRun]) -> BenchRow {
    let successes = cell.iter().filter(|r| r.satisfied).count();
    let errors = cell.iter().filter(|r| r.error.is_some()).count();
    let mut times: Vec<f64> = cell.iter().filter_map(|r| r.wall_clock_ms).collect();
    let mut iters: Vec<f64> = cell.iter().filter_map(|r| r.iterations.map(|i| i as f64)).collect();
    BenchRow {
        scenario: name.to_string(),
        solver,
        runs: cell.len(),
        successes,
        errors,
        success_rate: if cell.is_empty() { 0.0 } else { successes as f64 / cell.len() as f64 },
        median_wall_clock_ms: median(&mut times),
        median_iterations: median(&mut iters),
    }
}

/// Optimal cost `0.5 x0' P_0 x0` of `sum_{t<T} 0.5 (x'Qx + u'Ru) + 0.5 x_T' Qf x_T`
/// under `x' = A x + B u`, by the backward Riccati recursion.
pub fn riccati_cost(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, qf: &DMatrix<f64>, horizon: usize, x0: &DVector<f64>) -> f64 {
    let mut p = qf.clone();
    for _ in 0..horizon {
        let btp = b.transpose() * &p;
        let k = (r + &btp * b).lu().solve(&(&btp * a)).expect("R + B'PB is invertible");
        p = q + a.transpose() * &p * (a - b * k);
        p = (&p + p.transpose()) * 0.5;
    }
    0.5 * x0.dot(&(&p * x0))
}

fn lqr_check() -> Result<LqrCheck, CliError> {
    const TOL: f64 = 1e-4;
    let model = double_integrator(0.1, 2)?;
    let horizon = 30;
    let (n, m) = (model.state_dim(), model.control_dim());
    let obj = QuadraticObjective { q: DMatrix::identity(n, n), r: DMatrix::identity(m, m) * 0.1, qf: DMatrix::identity(n, n) * 10.0, horizon };
    let x0 = DVector::from_vec(vec![1.0, -0.5, 0.3, 0.2]);
    let jac = model.jacobians(&x0, &DVector::zeros(m)).expect("linear model");
    let riccati = riccati_cost(&jac.fx, &jac.fu, &obj.q, &obj.r, &obj.qf, horizon, &x0);
    let init = vec![DVector::zeros(m); horizon + 1];
    let ddp = optimize(&model, &obj, &x0, &init, &SolverConfig::default())?;
    let base = first_order_baseline_objective(&model, &obj, &x0, &init, &BaselineConfig { max_iterations: 20000, ..BaselineConfig::default() })?;
    let close = |c: f64| (c - riccati).abs() <= TOL * riccati.abs().max(1.0);
    Ok(LqrCheck {
        riccati_cost: riccati,
        ddp_cost: ddp.trajectory.cost,
        ddp_iterations: ddp.iterations,
        baseline_cost: base.trajectory.cost,
        baseline_iterations: base.iterations,
        tolerance: TOL,
        passed: close(ddp.trajectory.cost) && close(base.trajectory.cost),
    })
}

/// Writes `bench_runs.csv`, `bench_summary.csv` and `bench_summary.md`.
pub fn write_benchmark(summary: &BenchSummary, out_dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let runs_path = out_dir.join("bench_runs.csv");
    let summary_path = out_dir.join("bench_summary.csv");
    let md_path = out_dir.join("bench_summary.md");
    write_file(&runs_path, &serialize_rows(&summary.runs))?;
    write_file(&summary_path, &serialize_rows(&summary.rows))?;
    write_file(&md_path, summary.table().as_bytes())?;
    Ok(vec![runs_path, summary_path, md_path])
}

fn serialize_rows<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}
