use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stlddp::cli::{
    bundled_names, bundled_scenario, monitor, run_benchmark_suite, run_scenario_file, write_benchmark, BenchOptions, CliError, RunOptions, Solver, EXIT_ERROR,
    EXIT_NOT_CERTIFIED, EXIT_SATISFIED,
};
use stlddp::stl::Verdict;

#[derive(Parser)]
#[command(name = "stlddp", version, about = "Trajectory synthesis for Signal Temporal Logic specifications")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutDir {
    /// Output directory.
    #[arg(long, env = "STLDDP_OUT_DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario file (or bundled scenario name) and write its artifacts.
    Run {
        scenario: String,
        /// Seed of a random initialization.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        k1: Option<f64>,
        #[arg(long)]
        k2: Option<f64>,
        #[arg(long)]
        max_iters: Option<usize>,
        /// Retry budget after the first attempt.
        #[arg(long)]
        retries: Option<usize>,
        #[command(flatten)]
        out: OutDir,
    },
    /// Run the bundled scenarios with both optimizers over a seed set.
    Bench {
        /// Output directory; overrides --out.
        out_dir: Option<PathBuf>,
        /// Number of seeds (0..N) for randomly initialized scenarios.
        #[arg(long, default_value_t = 20)]
        seeds: u64,
        /// Restrict to these bundled scenarios.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
        /// Skip the first-order baseline.
        #[arg(long)]
        ddp_only: bool,
        #[command(flatten)]
        out: OutDir,
    },
    /// Evaluate a recorded signal against a specification file.
    Monitor {
        signal_csv: PathBuf,
        /// JSON file with `predicates` and `specification` (scenario files work).
        #[arg(long)]
        spec: PathBuf,
        /// Print the full report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// List the bundled scenarios, optionally exporting them as JSON files.
    Scenarios {
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}

fn execute(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Run { scenario, seed, k1, k2, max_iters, retries, out } => {
            let options = RunOptions { seed, k1, k2, max_iterations: max_iters, retries };
            let (outcome, artifacts) = run_scenario_file(&scenario, &options, &out.out)?;
            let r = &outcome.report;
            println!("scenario: {}", r.scenario);
            println!("specification: {}", r.specification);
            println!("verdict: {:?}", r.verdict);
            println!("exact robustness: {}", r.exact_robustness);
            println!("iterations: {} (total {}, retries {})", r.iterations, r.total_iterations, r.retries_used);
            println!("k1 = {}, k2 = {}", r.k1, r.k2);
            println!("wall clock: {:.1} ms", r.wall_clock_ms);
            for p in [&artifacts.trajectory_csv, &artifacts.report_json, &artifacts.plot_csv] {
                println!("wrote {}", p.display());
            }
            Ok(if outcome.is_satisfied() { EXIT_SATISFIED } else { EXIT_NOT_CERTIFIED })
        }
        Command::Bench { out_dir, seeds, scenarios, ddp_only, out } => {
            let mut options = BenchOptions { seeds: (0..seeds).collect(), ..BenchOptions::default() };
            if !scenarios.is_empty() {
                options.scenarios = scenarios;
            }
            if ddp_only {
                options.solvers = vec![Solver::Ddp];
            }
            let summary = run_benchmark_suite(&options)?;
            print!("{}", summary.table());
            for p in write_benchmark(&summary, &out_dir.unwrap_or(out.out))? {
                println!("wrote {}", p.display());
            }
            Ok(EXIT_SATISFIED)
        }
        Command::Monitor { signal_csv, spec, json } => {
            let report = monitor(&signal_csv, &spec)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("specification: {}", report.specification);
                println!("exact robustness: {}", report.exact_robustness);
                println!("verdict: {:?}", report.verdict);
                println!("certificate: {:?}", report.certificate);
                println!("t,running_cost");
                for (t, l) in report.running_costs.iter().enumerate() {
                    println!("{t},{}", l.map(|v| v.to_string()).unwrap_or_default());
                }
            }
            Ok(if report.verdict == Verdict::Satisfied { EXIT_SATISFIED } else { EXIT_NOT_CERTIFIED })
        }
        Command::Scenarios { export } => {
            for name in bundled_names() {
                let s = bundled_scenario(name).expect("bundled");
                println!("{name}: {}", s.description.as_deref().unwrap_or(""));
                if let Some(dir) = &export {
                    let path = dir.join(format!("{name}.json"));
                    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
                    std::fs::write(&path, s.to_json() + "\n").map_err(|e| CliError::io(&path, e))?;
                }
            }
            Ok(EXIT_SATISFIED)
        }
    }
}
