//! Problem generation and single runs.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use upen::io::{read_problem_dir, write_json, write_problem_dir, write_trace_csv, write_vector_csv};
use upen::mm::{run_balancing, run_gupenmm, run_upenmm, StopReason};
use upen::solvers::InnerSettings;
use upen::testproblems::{make_nmr2d, make_t1, make_t2, make_t3};
use upen::tikhonov::default_tikhonov_sweep;
use upen::{Constraint, GridShape, InverseProblem, MMConfig, PenaltyModel};

use crate::config::{constraint_name, Algorithm, ProblemKind, RunConfig, TraceVerbosity};
use crate::UsageError;

pub const SOLUTION_FILE: &str = "solution.csv";
pub const LAMBDA_FILE: &str = "lambda.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const TRACE_JSON_FILE: &str = "trace.json";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIKHONOV_FILE: &str = "tikhonov.csv";

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub problem: String,
    pub algorithm: String,
    pub constraint: String,
    pub delta: f64,
    pub seed: u64,
    pub n: usize,
    pub m: usize,
    pub gamma: Option<f64>,
    pub tol_lambda: f64,
    pub eps_psi: f64,
    pub relative_error: f64,
    pub outer_iterations: Option<usize>,
    pub total_inner_iterations: Option<usize>,
    /// Outer loop only; excluded from reproducibility comparisons.
    pub wall_time_seconds: f64,
    pub residual_norm: f64,
    pub noise_norm: f64,
    pub stop_reason: Option<StopReason>,
    pub optimal_lambda: Option<f64>,
}

pub fn generate(config: &RunConfig) -> Result<InverseProblem> {
    let problem = match config.problem {
        ProblemKind::T1 => make_t1(config.delta, config.seed),
        ProblemKind::T2 => make_t2(config.delta, config.seed),
        ProblemKind::T3 => make_t3(config.delta, config.seed),
        ProblemKind::Nmr2d => make_nmr2d(config.shape, config.delta, config.seed),
    }
    .with_context(|| format!("generating {}", config.problem))?;
    Ok(match config.constraint {
        Some(c) => problem.with_constraint(c),
        None => problem,
    })
}

/// Generated problem, or the one stored in `problem_dir`.
pub fn load_problem(config: &RunConfig) -> Result<InverseProblem> {
    let problem = match &config.problem_dir {
        Some(dir) => read_problem_dir(dir).with_context(|| format!("reading problem {}", dir.display()))?,
        None => return generate(config),
    };
    Ok(match config.constraint {
        Some(c) => problem.with_constraint(c),
        None => problem,
    })
}

pub fn penalty_for(problem: &InverseProblem, config: &RunConfig) -> Result<PenaltyModel, UsageError> {
    let l1 = config.l1.unwrap_or(matches!(problem.grid, GridShape::Grid { .. }));
    if l1 && problem.constraint == Constraint::Unconstrained {
        return Err(UsageError(
            "the L1 term needs the nonnegative constraint (set constraint = nonneg or l1 = false)".into(),
        ));
    }
    PenaltyModel::new(problem.grid, config.eps_psi, l1).map_err(|e| UsageError(e.to_string()))
}

pub fn cmd_gen(config: &RunConfig) -> Result<PathBuf> {
    let problem = generate(config)?;
    write_problem_dir(&problem, &config.out)?;
    Ok(config.out.clone())
}

fn mm_config(config: &RunConfig) -> MMConfig {
    let base = match config.algorithm {
        Algorithm::Gupenmm => MMConfig::gupenmm(config.tol_lambda),
        _ => MMConfig::upenmm(config.tol_lambda),
    };
    MMConfig {
        gamma: config.gamma,
        k_max: config.k_max,
        epsilon_backtrack: config.epsilon_backtrack,
        numerator_convention: config.numerator,
        store_lambdas: config.trace == TraceVerbosity::Full,
        ..base
    }
}

/// Runs the configured algorithm and writes its artifacts into `config.out`.
pub fn cmd_solve(config: &RunConfig, problem: &InverseProblem, penalty: &PenaltyModel) -> Result<Summary> {
    let out = &config.out;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut summary = Summary {
        problem: problem.name.clone(),
        algorithm: config.algorithm.to_string(),
        constraint: constraint_name(problem.constraint).into(),
        delta: problem.delta,
        seed: problem.seed,
        n: problem.n(),
        m: problem.m(),
        gamma: config.gamma,
        tol_lambda: config.tol_lambda,
        eps_psi: config.eps_psi,
        relative_error: f64::NAN,
        outer_iterations: None,
        total_inner_iterations: None,
        wall_time_seconds: 0.0,
        residual_norm: f64::NAN,
        noise_norm: problem.noise_norm(),
        stop_reason: None,
        optimal_lambda: None,
    };
    let u = if config.algorithm == Algorithm::TikhonovSweep {
        let start = std::time::Instant::now();
        let sweep = default_tikhonov_sweep(problem, penalty, &InnerSettings::default())?;
        summary.wall_time_seconds = start.elapsed().as_secs_f64();
        summary.optimal_lambda = Some(sweep.optimal_lambda);
        write_tikhonov_csv(&out.join(TIKHONOV_FILE), &sweep.lambdas, &sweep.relative_errors)?;
        let lambda = nalgebra::DVector::from_element(1, sweep.optimal_lambda);
        write_vector_csv(&out.join(LAMBDA_FILE), &lambda)?;
        sweep.optimal_u
    } else {
        let mm = mm_config(config);
        let result = match config.algorithm {
            Algorithm::Upenmm => run_upenmm(problem, penalty, &mm),
            Algorithm::Gupenmm => run_gupenmm(problem, penalty, &mm),
            Algorithm::Bp => run_balancing(problem, penalty, config.gamma.unwrap_or(penalty.p() as f64), &mm),
            Algorithm::TikhonovSweep => unreachable!(),
        }?;
        let trace = &result.trace;
        summary.outer_iterations = Some(trace.outer_iterations());
        summary.total_inner_iterations = Some(trace.total_inner_iterations());
        summary.wall_time_seconds = trace.elapsed_seconds;
        summary.stop_reason = Some(trace.stop_reason);
        write_trace_csv(&out.join(TRACE_FILE), trace)?;
        if config.trace == TraceVerbosity::Full {
            write_json(&out.join(TRACE_JSON_FILE), trace)?;
        }
        write_vector_csv(&out.join(LAMBDA_FILE), &result.lambda.to_dvector())?;
        result.u
    };
    summary.relative_error = problem.relative_error(&u);
    summary.residual_norm = problem.residual(&u)?.norm();
    write_vector_csv(&out.join(SOLUTION_FILE), &u)?;
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn write_tikhonov_csv(path: &Path, lambdas: &[f64], errors: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["lambda", "relative_error"])?;
    for (l, e) in lambdas.iter().zip(errors) {
        w.write_record([l.to_string(), e.to_string()])?;
    }
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
