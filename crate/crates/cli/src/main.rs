//! `upen`: generate problems, run the multi-penalty solvers, sweep
//! configurations, verify the closed-form oracles and emit plot data.

mod config;
mod report;
mod run;
mod sweep;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use upen::oracle::{run_oracle_suite, OracleSettings};

use config::{read_config_file, RunConfig, Settings, DEFAULT_OUTPUT_DIR, OUTPUT_DIR_ENV};

/// Invalid flags, configuration values or combinations; exit code 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser)]
#[command(name = "upen", version, about = "Uniform multi-penalty regularization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a test problem (operator, u*, y, b, manifest) to a directory.
    Gen(RunArgs),
    /// Run one algorithm and write solution, parameters, trace and summary.
    Solve(RunArgs),
    /// Run the cartesian product of `--vary` axes in parallel.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Axis `key=v1,v2,...`; integer ranges `a..b` are expanded.
        #[arg(long = "vary", value_name = "KEY=VALUES")]
        vary: Vec<String>,
    },
    /// Run the oracle suite over randomized instances.
    Verify {
        #[arg(long, default_value_t = OracleSettings::default().trials)]
        trials: usize,
        #[arg(long, default_value_t = OracleSettings::default().max_p)]
        max_p: usize,
        #[arg(long, default_value_t = OracleSettings::default().seed)]
        seed: u64,
        /// Directory for `oracle_report.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot-data files and a markdown table from solve output directories.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags shared by `gen`, `solve` and `sweep`; each overrides the same key
/// in `--config`.
#[derive(Args, Default)]
struct RunArgs {
    /// Flat `key = value` file with any of the keys below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// t1, t2, t3 or nmr2d.
    #[arg(long)]
    problem: Option<String>,
    /// Directory written by `gen`; replaces the generated problem.
    #[arg(long)]
    problem_dir: Option<String>,
    #[arg(long)]
    n1: Option<String>,
    #[arg(long)]
    n2: Option<String>,
    #[arg(long)]
    m1: Option<String>,
    #[arg(long)]
    m2: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// upenmm, gupenmm, tikhonov-sweep or bp.
    #[arg(long)]
    algorithm: Option<String>,
    /// none or nonneg.
    #[arg(long)]
    constraint: Option<String>,
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    tol_lambda: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    #[arg(long)]
    epsilon_backtrack: Option<String>,
    #[arg(long)]
    eps_psi: Option<String>,
    /// true or false; defaults to true on 2D grids.
    #[arg(long)]
    l1: Option<String>,
    /// squared or half.
    #[arg(long)]
    numerator: Option<String>,
    /// standard or full.
    #[arg(long)]
    trace: Option<String>,
    /// Output directory; falls back to the environment variable, then a default.
    #[arg(long)]
    out: Option<String>,
}

impl RunArgs {
    fn settings(&self) -> Result<Settings, UsageError> {
        let mut s = match &self.config {
            Some(path) => read_config_file(path)?,
            None => Settings::new(),
        };
        let flags = [
            ("problem", &self.problem),
            ("problem_dir", &self.problem_dir),
            ("n1", &self.n1),
            ("n2", &self.n2),
            ("m1", &self.m1),
            ("m2", &self.m2),
            ("delta", &self.delta),
            ("seed", &self.seed),
            ("algorithm", &self.algorithm),
            ("constraint", &self.constraint),
            ("gamma", &self.gamma),
            ("tol_lambda", &self.tol_lambda),
            ("k_max", &self.k_max),
            ("epsilon_backtrack", &self.epsilon_backtrack),
            ("eps_psi", &self.eps_psi),
            ("l1", &self.l1),
            ("numerator", &self.numerator),
            ("trace", &self.trace),
            ("out", &self.out),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                s.insert(key.to_string(), v.clone());
            }
        }
        Ok(s)
    }

    fn resolve(&self) -> Result<RunConfig, UsageError> {
        RunConfig::from_settings(&self.settings()?)
    }
}

fn default_out() -> PathBuf {
    std::env::var(OUTPUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|_| PathBuf::from(DEFAULT_OUTPUT_DIR))
}

enum Failure {
    Usage(String),
    Run(anyhow::Error),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<UsageError>() {
            Ok(u) => Failure::Usage(u.0),
            Err(e) => Failure::Run(e),
        }
    }
}

impl From<upen::Error> for Failure {
    fn from(e: upen::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn execute(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen(args) => {
            let config = args.resolve()?;
            let dir = run::cmd_gen(&config)?;
            println!("wrote {}", dir.display());
        }
        Command::Solve(args) => {
            let config = args.resolve()?;
            let problem = run::load_problem(&config)?;
            let penalty = run::penalty_for(&problem, &config)?;
            let s = run::cmd_solve(&config, &problem, &penalty)?;
            println!(
                "{} {} ({}): relative error {:.6e}, residual {:.6e} (noise {:.6e}), outer {}, inner {}, {:.3}s",
                s.problem,
                s.algorithm,
                s.constraint,
                s.relative_error,
                s.residual_norm,
                s.noise_norm,
                s.outer_iterations.map_or("-".into(), |v| v.to_string()),
                s.total_inner_iterations.map_or("-".into(), |v| v.to_string()),
                s.wall_time_seconds
            );
            if let Some(l) = s.optimal_lambda {
                println!("optimal lambda {l:.6e}");
            }
            println!("wrote {}", config.out.display());
        }
        Command::Sweep { run, vary } => {
            let base = run.settings()?;
            let root = RunConfig::from_settings(&base)?.out;
            let axes = vary
                .iter()
                .map(|v| sweep::parse_axis(v))
                .collect::<Result<Vec<_>, _>>()?;
            let runs = sweep::expand(&base, &axes, &root)?;
            std::fs::create_dir_all(&root).map_err(|e| Failure::Run(e.into()))?;
            let outcomes = sweep::run_sweep(&runs);
            sweep::write_sweep_csv(&root.join(sweep::SWEEP_FILE), &outcomes)?;
            let failed: Vec<&sweep::SweepOutcome> = outcomes.iter().filter(|o| o.result.is_err()).collect();
            println!(
                "{} runs, {} failed; wrote {}",
                outcomes.len(),
                failed.len(),
                root.join(sweep::SWEEP_FILE).display()
            );
            if let Some(first) = failed.first() {
                let e = first.result.as_ref().unwrap_err();
                return Err(Failure::Run(anyhow::anyhow!("{}: {e:#}", first.label)));
            }
        }
        Command::Verify {
            trials,
            max_p,
            seed,
            out,
        } => {
            if trials == 0 || max_p < 2 {
                return Err(Failure::Usage("verify needs --trials >= 1 and --max-p >= 2".into()));
            }
            let settings = OracleSettings {
                seed,
                trials,
                max_p,
                max_p_system: OracleSettings::default().max_p_system.min(max_p),
                ..OracleSettings::default()
            };
            let report = run_oracle_suite(&settings)?;
            println!(
                "{:<32} {:>7} {:>12} {:>12}  result",
                "check", "trials", "deviation", "tolerance"
            );
            for c in &report.checks {
                println!(
                    "{:<32} {:>7} {:>12.3e} {:>12.3e}  {}",
                    c.name,
                    c.trials,
                    c.max_deviation,
                    c.tolerance,
                    if c.passed { "pass" } else { "FAIL" }
                );
            }
            let dir = out.unwrap_or_else(default_out);
            std::fs::create_dir_all(&dir).map_err(|e| Failure::Run(e.into()))?;
            let path = dir.join("oracle_report.json");
            std::fs::write(&path, report.to_json()? + "\n").map_err(|e| Failure::Run(e.into()))?;
            println!("seed {seed}, {:.2}s; wrote {}", report.elapsed_seconds, path.display());
            if !report.passed() {
                return Err(Failure::Run(anyhow::anyhow!("oracle suite failed")));
            }
        }
        Command::Report { runs, out } => {
            let dir = out.unwrap_or_else(default_out);
            let files = report::cmd_report(&runs, &dir)?;
            println!("wrote {} files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
