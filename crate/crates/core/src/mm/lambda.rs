use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::operators::LinearOperator;
use crate::penalties::PenaltyModel;
use crate::testproblems::InverseProblem;

/// Regularization parameters `(lambda_1, ..., lambda_p)`.
///
/// Entries are finite and nonnegative; every parameter vector handed to a
/// subproblem solver must be strictly positive, which the updates guarantee
/// whenever the residual is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LambdaVector {
    values: Vec<f64>,
}

impl LambdaVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("lambda", "empty parameter vector"));
        }
        if let Some(bad) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(invalid(
                "lambda",
                format!("entries must be positive and finite, found {bad}"),
            ));
        }
        Ok(Self { values })
    }

    /// Accepts zeros; used for the exact-fit update.
    pub(crate) fn nonnegative(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| *v >= 0.0));
        Self { values }
    }

    pub fn uniform(p: usize, value: f64) -> Result<Self> {
        Self::new(vec![value; p])
    }

    pub fn p(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn to_dvector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.values.iter().all(|v| *v > 0.0 && v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `sum_i ln lambda_i`.
    pub fn log_product(&self) -> f64 {
        self.values.iter().map(|v| v.ln()).sum()
    }

    pub fn dot(&self, psi: &DVector<f64>) -> f64 {
        self.values.iter().zip(psi.iter()).map(|(l, p)| l * p).sum()
    }

    /// `w * self + (1 - w) * other`.
    pub fn blend(&self, other: &LambdaVector, w: f64) -> LambdaVector {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        LambdaVector { values }
    }

    pub fn scaled(&self, factor: f64) -> LambdaVector {
        LambdaVector {
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn distance(&self, other: &LambdaVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Which residual quantity sits in the numerator of the parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumeratorConvention {
    /// `||Au - b||^2`, as in the UPenMM pseudocode.
    #[default]
    SquaredNorm,
    /// `phi(u) = ||Au - b||^2 / 2`, the exact minimizer of the surrogate.
    HalfSquaredNorm,
}

impl NumeratorConvention {
    pub fn numerator(self, residual_sq: f64) -> f64 {
        match self {
            NumeratorConvention::SquaredNorm => residual_sq,
            NumeratorConvention::HalfSquaredNorm => 0.5 * residual_sq,
        }
    }

    /// The `gamma'` for which `numerator / (gamma psi_i) = phi / (gamma' psi_i)`.
    pub fn effective_gamma(self, gamma: f64) -> f64 {
        match self {
            NumeratorConvention::SquaredNorm => 0.5 * gamma,
            NumeratorConvention::HalfSquaredNorm => gamma,
        }
    }
}

/// Denominators used by the max-filtered parameter `lambda~`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TildeDenominator {
    /// `r^2 / (N psi~_i)` for the point-wise terms and `r^2 / (||u||_1 + eps)`
    /// for the L1 term.
    #[default]
    Literal,
    /// `r^2 / (p psi~_i)` everywhere, the L1 term using `p (||u||_1 + eps)`.
    Uniform,
}

/// `lambda_i = numerator / (gamma psi_i)` for an arbitrary positive penalty vector.
pub fn balancing_from_psi(numerator: f64, psi: &DVector<f64>, gamma: f64) -> Result<LambdaVector> {
    if !(gamma > 0.0) {
        return Err(invalid("gamma", format!("must be positive, got {gamma}")));
    }
    if let Some(bad) = psi.iter().find(|v| !(**v > 0.0)) {
        return Err(invalid("psi", format!("penalties must be positive, found {bad}")));
    }
    Ok(LambdaVector::nonnegative(
        psi.iter().map(|p| numerator / (gamma * p)).collect(),
    ))
}

/// Balancing-principle update `lambda_i = r^2 / (gamma psi_i(u))` (or
/// `phi(u) / (gamma psi_i(u))` under the half-norm convention).
pub fn balancing_update(
    u: &DVector<f64>,
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    gamma: f64,
    convention: NumeratorConvention,
) -> Result<LambdaVector> {
    let r2 = problem.residual(u)?.norm_squared();
    let psi = penalty.penalty_vector(u)?;
    balancing_from_psi(convention.numerator(r2), &psi, gamma)
}

/// Uniform-penalty update: the balancing update with `gamma = p`.
pub fn ups_update(
    u: &DVector<f64>,
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    convention: NumeratorConvention,
) -> Result<LambdaVector> {
    balancing_update(u, problem, penalty, penalty.p() as f64, convention)
}

/// Max-filtered parameter `lambda~` from precomputed pieces.
pub fn tilde_from_parts(
    numerator: f64,
    psi_tilde: &DVector<f64>,
    l1_norm: Option<f64>,
    eps_psi: f64,
    denominators: TildeDenominator,
) -> LambdaVector {
    let n = psi_tilde.len();
    let p = n + usize::from(l1_norm.is_some());
    let point_divisor = match denominators {
        TildeDenominator::Literal => n as f64,
        TildeDenominator::Uniform => p as f64,
    };
    let mut values: Vec<f64> = psi_tilde.iter().map(|t| numerator / (point_divisor * t)).collect();
    if let Some(l1) = l1_norm {
        let divisor = match denominators {
            TildeDenominator::Literal => 1.0,
            TildeDenominator::Uniform => p as f64,
        };
        values.push(numerator / (divisor * (l1 + eps_psi)));
    }
    LambdaVector::nonnegative(values)
}

/// `lambda~` at `u`, using the geometry-appropriate max filter.
pub fn tilde_update(
    u: &DVector<f64>,
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    convention: NumeratorConvention,
    denominators: TildeDenominator,
) -> Result<LambdaVector> {
    let r2 = problem.residual(u)?.norm_squared();
    let psi_tilde = penalty.eval_psi_tilde(u)?;
    let l1 = penalty.l1_enabled().then(|| u.lp_norm(1));
    Ok(tilde_from_parts(
        convention.numerator(r2),
        &psi_tilde,
        l1,
        penalty.eps_psi(),
        denominators,
    ))
}

/// Starting point used to seed the parameters.
///
/// For square operators this is the data `b` itself. Otherwise it is the
/// least-squares scaled back-projection `c Aᵀb` with
/// `c = ||Aᵀb||^2 / ||AAᵀb||^2`.
pub fn initial_iterate(problem: &InverseProblem) -> Result<DVector<f64>> {
    if problem.operator.is_square() {
        return Ok(problem.b.clone());
    }
    let atb = problem.operator.adjoint(&problem.b)?;
    let a_atb = problem.operator.apply(&atb)?;
    let denom = a_atb.norm_squared();
    if denom == 0.0 {
        return Err(Error::Degenerate("Aᵀb is in the null space of A".into()));
    }
    let scale = atb.norm_squared() / denom;
    Ok(atb * scale)
}

/// `lambda_i^(0) = ||A u0 - b||^2 / (p psi_i(u0))`, with `psi~` in place of
/// `psi` for the generalized algorithm.
pub fn initial_lambda(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    generalized: bool,
    denominators: TildeDenominator,
) -> Result<LambdaVector> {
    check_len("initial_lambda", penalty.n(), problem.n())?;
    let u0 = initial_iterate(problem)?;
    let r2 = problem.residual(&u0)?.norm_squared();
    if r2 == 0.0 {
        return Err(Error::Degenerate(
            "initial residual is zero; parameters are undefined".into(),
        ));
    }
    let lambda = if generalized {
        tilde_update(&u0, problem, penalty, NumeratorConvention::SquaredNorm, denominators)?
    } else {
        ups_update(&u0, problem, penalty, NumeratorConvention::SquaredNorm)?
    };
    LambdaVector::new(lambda.values)
}

/// `||lambda_new - lambda_old|| <= ||lambda_old|| * tol`.
pub fn check_stopping(lambda_new: &LambdaVector, lambda_old: &LambdaVector, tol_lambda: f64) -> bool {
    lambda_new.distance(lambda_old) <= lambda_old.norm() * tol_lambda
}
