//! Outer majorization-minimization loops over the regularization parameters.

use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::mm::lambda::{
    balancing_from_psi, check_stopping, initial_iterate, initial_lambda, tilde_from_parts, LambdaVector,
    NumeratorConvention, TildeDenominator,
};
use crate::mm::surrogate::SurrogateValue;
use crate::penalties::PenaltyModel;
use crate::solvers::{solve, Gram, InnerSettings, SubproblemSpec};
use crate::testproblems::InverseProblem;

/// Residuals below this squared norm end the iteration.
pub const EXACT_FIT_THRESHOLD: f64 = 1e-30;

/// Source of the penalty values behind the heuristic parameter `lambda~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TildeRule {
    /// Neighbourhood maximum filter.
    #[default]
    MaxFilter,
    /// The plain penalties; the generalized loop then reduces to the plain one.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MMConfig {
    /// Balancing constant; `None` means `p`.
    pub gamma: Option<f64>,
    pub tol_lambda: f64,
    pub k_max: usize,
    pub epsilon_backtrack: f64,
    pub use_generalized: bool,
    pub numerator_convention: NumeratorConvention,
    pub tilde_denominator: TildeDenominator,
    pub tilde_rule: TildeRule,
    pub backtrack_cap: usize,
    /// Absolute slack, in scaled-log units, tolerated by the descent check.
    pub descent_slack: f64,
    pub store_lambdas: bool,
    pub inner: InnerSettings,
}

impl Default for MMConfig {
    fn default() -> Self {
        Self {
            gamma: None,
            tol_lambda: 1e-2,
            k_max: 1000,
            epsilon_backtrack: 0.9,
            use_generalized: false,
            numerator_convention: NumeratorConvention::default(),
            tilde_denominator: TildeDenominator::default(),
            tilde_rule: TildeRule::default(),
            backtrack_cap: 60,
            descent_slack: 1e-10,
            store_lambdas: false,
            inner: InnerSettings::default(),
        }
    }
}

impl MMConfig {
    pub fn upenmm(tol_lambda: f64) -> Self {
        Self {
            tol_lambda,
            ..Self::default()
        }
    }

    pub fn gupenmm(tol_lambda: f64) -> Self {
        Self {
            tol_lambda,
            use_generalized: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol_lambda > 0.0 && self.tol_lambda < 1.0) {
            return Err(invalid(
                "tol_lambda",
                format!("must lie in (0, 1), got {}", self.tol_lambda),
            ));
        }
        if !(self.epsilon_backtrack > 0.0 && self.epsilon_backtrack < 1.0) {
            return Err(invalid(
                "epsilon_backtrack",
                format!("must lie in (0, 1), got {}", self.epsilon_backtrack),
            ));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid("gamma", format!("must be positive, got {g}")));
            }
        }
        if self.k_max == 0 {
            return Err(invalid("k_max", "at least one outer iteration is required"));
        }
        if !(self.descent_slack >= 0.0) {
            return Err(invalid("descent_slack", "must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Relative parameter change below `tol_lambda`.
    Converged,
    MaxIterations,
    /// Residual vanished; the parameters would all be zero.
    ExactFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub relative_error: f64,
    pub residual_norm: f64,
    /// `ln Q(lambda^(k+1), lambda^(k)) / p`.
    pub surrogate: f64,
    /// `ln Q(lambda^(k), lambda^(k)) / p`.
    pub surrogate_reference: f64,
    pub inner_iterations: usize,
    pub inner_converged: bool,
    pub backtracks: usize,
    /// The backtracking cap was hit and `lambda^` was taken instead.
    pub fallback: bool,
    /// `||lambda^(k+1) - lambda^(k)|| / ||lambda^(k)||`.
    pub lambda_change: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub stop_reason: StopReason,
    pub noise_norm: f64,
    /// Wall time of the outer loop.
    pub elapsed_seconds: f64,
}

impl ConvergenceTrace {
    pub fn outer_iterations(&self) -> usize {
        self.records.len()
    }

    pub fn total_inner_iterations(&self) -> usize {
        self.records.iter().map(|r| r.inner_iterations).sum()
    }

    pub fn surrogate_values(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.surrogate).collect()
    }

    /// Largest increase between consecutive surrogate values.
    pub fn max_surrogate_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| w[1].surrogate - w[0].surrogate)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_descending(&self, slack: f64) -> bool {
        self.records.len() < 2 || self.max_surrogate_increase() <= slack
    }

    pub fn final_relative_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.relative_error)
    }

    pub fn final_residual_norm(&self) -> Option<f64> {
        self.records.last().map(|r| r.residual_norm)
    }
}

#[derive(Debug, Clone)]
pub struct MMResult {
    pub u: DVector<f64>,
    pub lambda: LambdaVector,
    pub trace: ConvergenceTrace,
}

/// Uniform-penalty MM loop.
pub fn run_upenmm(problem: &InverseProblem, penalty: &PenaltyModel, config: &MMConfig) -> Result<MMResult> {
    let config = MMConfig {
        use_generalized: false,
        ..config.clone()
    };
    run_mm(problem, penalty, &config)
}

/// Generalized MM loop: tries the max-filtered `lambda~` and backtracks
/// towards the exact surrogate minimizer `lambda^` until the surrogate
/// decreases.
pub fn run_gupenmm(problem: &InverseProblem, penalty: &PenaltyModel, config: &MMConfig) -> Result<MMResult> {
    if !config.use_generalized {
        return Err(invalid(
            "use_generalized",
            "the generalized loop needs use_generalized = true",
        ));
    }
    run_mm(problem, penalty, config)
}

/// Balancing-principle loop with an explicit `gamma`.
pub fn run_balancing(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    gamma: f64,
    config: &MMConfig,
) -> Result<MMResult> {
    let config = MMConfig {
        gamma: Some(gamma),
        use_generalized: false,
        ..config.clone()
    };
    run_mm(problem, penalty, &config)
}

struct LoopState<'a> {
    problem: &'a InverseProblem,
    penalty: &'a PenaltyModel,
    config: &'a MMConfig,
}

impl LoopState<'_> {
    fn tilde(&self, u: &DVector<f64>, numerator: f64) -> Result<LambdaVector> {
        let n = self.penalty.n();
        let psi_tilde = match self.config.tilde_rule {
            TildeRule::MaxFilter => self.penalty.eval_psi_tilde(u)?,
            TildeRule::Identity => self.penalty.eval_psi(u)?.rows(0, n).into_owned(),
        };
        let l1 = self.penalty.l1_enabled().then(|| u.lp_norm(1));
        Ok(tilde_from_parts(
            numerator,
            &psi_tilde,
            l1,
            self.penalty.eps_psi(),
            self.config.tilde_denominator,
        ))
    }

    fn initial(&self) -> Result<LambdaVector> {
        if self.config.use_generalized && self.config.tilde_rule == TildeRule::Identity {
            let u0 = initial_iterate(self.problem)?;
            let r2 = self.problem.residual(&u0)?.norm_squared();
            if r2 == 0.0 {
                return Err(Error::Degenerate(
                    "initial residual is zero; parameters are undefined".into(),
                ));
            }
            let lambda = self.tilde(&u0, NumeratorConvention::SquaredNorm.numerator(r2))?;
            return LambdaVector::new(lambda.as_slice().to_vec());
        }
        initial_lambda(
            self.problem,
            self.penalty,
            self.config.use_generalized,
            self.config.tilde_denominator,
        )
    }
}

fn run_mm(problem: &InverseProblem, penalty: &PenaltyModel, config: &MMConfig) -> Result<MMResult> {
    config.validate()?;
    check_len("penalty size", problem.n(), penalty.n())?;
    let state = LoopState {
        problem,
        penalty,
        config,
    };
    let p = penalty.p() as f64;
    let gamma = config.gamma.unwrap_or(p);
    // exponent of the surrogate whose exact minimizer is the update below
    let gamma_surrogate = config.numerator_convention.effective_gamma(gamma);

    let start = Instant::now();
    let gram = Gram::new(&problem.operator, &problem.b)?;
    let mut lambda = state.initial()?;
    let mut warm: Option<DVector<f64>> = None;
    let mut records = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;

    for k in 0..config.k_max {
        let at = |e: Error| Error::Iteration {
            iteration: k,
            source: Box::new(e),
        };
        let mut spec =
            SubproblemSpec::new(&problem.operator, &problem.b, &lambda, penalty, problem.constraint).map_err(at)?;
        spec = spec.with_gram(&gram);
        if let Some(w) = warm.as_ref() {
            spec = spec.with_warm_start(w);
        }
        let solved = solve(&spec, &config.inner).map_err(at)?;
        let u = solved.u;

        let r2 = problem.residual(&u).map_err(at)?.norm_squared();
        let psi = penalty.penalty_vector(&u).map_err(at)?;
        let phi = 0.5 * r2;
        let scaled = |l: &LambdaVector| -> Result<f64> {
            Ok(SurrogateValue::new(phi + l.dot(&psi), l)?.scaled_log_with_gamma(gamma_surrogate))
        };
        let reference = scaled(&lambda).map_err(at)?;
        let mut record = TraceRecord {
            iteration: k,
            relative_error: problem.relative_error(&u),
            residual_norm: r2.sqrt(),
            surrogate: reference,
            surrogate_reference: reference,
            inner_iterations: solved.inner_iterations,
            inner_converged: solved.converged,
            backtracks: 0,
            fallback: false,
            lambda_change: 0.0,
            lambda: None,
        };

        if r2 < EXACT_FIT_THRESHOLD {
            if config.store_lambdas {
                record.lambda = Some(lambda.as_slice().to_vec());
            }
            records.push(record);
            warm = Some(u);
            stop_reason = StopReason::ExactFit;
            break;
        }

        let numerator = config.numerator_convention.numerator(r2);
        let hat = balancing_from_psi(numerator, &psi, gamma).map_err(at)?;
        let next = if config.use_generalized {
            let tilde = state.tilde(&u, numerator).map_err(at)?;
            let mut candidate = tilde.clone();
            let mut j = 0;
            let mut weight = 1.0;
            loop {
                if candidate.is_strictly_positive() && scaled(&candidate).map_err(at)? <= reference {
                    break;
                }
                j += 1;
                if j > config.backtrack_cap {
                    record.fallback = true;
                    candidate = hat.clone();
                    j = config.backtrack_cap;
                    break;
                }
                weight *= config.epsilon_backtrack;
                candidate = tilde.blend(&hat, weight);
            }
            record.backtracks = j;
            candidate
        } else {
            hat
        };
        record.surrogate = scaled(&next).map_err(at)?;
        record.lambda_change = next.distance(&lambda) / lambda.norm();
        if config.store_lambdas {
            record.lambda = Some(next.as_slice().to_vec());
        }
        records.push(record);

        let done = check_stopping(&next, &lambda, config.tol_lambda);
        lambda = next;
        warm = Some(u);
        if done {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    let u = warm.ok_or_else(|| Error::Degenerate("no outer iteration was performed".into()))?;
    Ok(MMResult {
        u,
        lambda,
        trace: ConvergenceTrace {
            records,
            stop_reason,
            noise_norm: problem.noise_norm(),
            elapsed_seconds: start.elapsed().as_secs_f64(),
        },
    })
}
