//! Single-parameter Tikhonov baseline with an oracle-chosen parameter.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::penalties::PenaltyModel;
use crate::solvers::{solve_tikhonov, Gram, InnerSettings};
use crate::testproblems::{logspace, InverseProblem};

pub const SWEEP_LAMBDA_MIN: f64 = 1e-8;
pub const SWEEP_LAMBDA_MAX: f64 = 1e2;
pub const SWEEP_POINTS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TikhonovSweepResult {
    pub lambdas: Vec<f64>,
    pub relative_errors: Vec<f64>,
    pub optimal_lambda: f64,
    pub optimal_error: f64,
    #[serde(skip)]
    pub optimal_u: DVector<f64>,
}

/// Logarithmic parameter grid of the sweep.
pub fn sweep_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo) || points < 2 {
        return Err(invalid(
            "grid",
            format!("need 0 < lo < hi and >= 2 points, got [{lo}, {hi}] x {points}"),
        ));
    }
    Ok(logspace(lo, hi, points))
}

/// Solves `min ||Au-b||^2/2 + lambda ||Lu||^2` over the feasible set of the
/// problem for every grid value and keeps the one closest to the ground truth.
///
/// Any L1 term of `penalty` is ignored.
pub fn tikhonov_sweep(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    grid: &[f64],
    settings: &InnerSettings,
) -> Result<TikhonovSweepResult> {
    if grid.is_empty() {
        return Err(invalid("grid", "empty parameter grid"));
    }
    let smooth = PenaltyModel::new(penalty.grid(), penalty.eps_psi(), false)?;
    let gram = Gram::new(&problem.operator, &problem.b)?;
    let mut errors = Vec::with_capacity(grid.len());
    let mut best: Option<(usize, DVector<f64>)> = None;
    for (i, &lambda) in grid.iter().enumerate() {
        let res = solve_tikhonov(
            &problem.operator,
            &problem.b,
            &smooth,
            lambda,
            problem.constraint,
            Some(&gram),
            settings,
        )?;
        let err = problem.relative_error(&res.u);
        if best.as_ref().is_none_or(|(j, _)| err < errors[*j]) {
            best = Some((i, res.u));
        }
        errors.push(err);
    }
    let (index, optimal_u) = best.expect("grid is nonempty");
    Ok(TikhonovSweepResult {
        lambdas: grid.to_vec(),
        optimal_lambda: grid[index],
        optimal_error: errors[index],
        relative_errors: errors,
        optimal_u,
    })
}

/// The sweep on the default grid.
pub fn default_tikhonov_sweep(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    settings: &InnerSettings,
) -> Result<TikhonovSweepResult> {
    let grid = sweep_grid(SWEEP_LAMBDA_MIN, SWEEP_LAMBDA_MAX, SWEEP_POINTS)?;
    tikhonov_sweep(problem, penalty, &grid, settings)
}
