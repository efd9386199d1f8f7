//! Independent numerical checks of the closed-form results behind the
//! parameter updates.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::mm::{phi_gamma_log, run_balancing, LambdaVector, MMConfig, NumeratorConvention};
use crate::operators::{DenseOperator, Operator};
use crate::penalties::{GridShape, PenaltyModel};
use crate::solvers::{solve, InnerSettings, SubproblemSpec};
use crate::testproblems::{Constraint, InverseProblem};

pub const BP_TOLERANCE: f64 = 1e-10;
pub const CHOLESKY_TOLERANCE: f64 = 1e-10;
pub const RECURRENCE_TOLERANCE: f64 = 1e-10;
pub const GRADIENT_TOLERANCE: f64 = 1e-4;
pub const CONCAVITY_SLACK: f64 = 1e-10;
pub const STATIONARITY_TOLERANCE: f64 = 1e-12;
pub const CRITICAL_POINT_TOLERANCE: f64 = 1e-5;

/// `(D - 1ψᵀ)` with `D = diag((gamma + p) psi)`.
pub fn bp_matrix(psi: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
    let p = psi.len();
    let scale = gamma + p as f64;
    DMatrix::from_fn(p, p, |i, j| {
        let diag = if i == j { scale * psi[i] } else { 0.0 };
        diag - psi[j]
    })
}

/// Explicit inverse of [`bp_matrix`] from the Sherman–Morrison formula:
/// `(1/(p+gamma)) (diag(1/psi) + (1/gamma) (1/psi) 1ᵀ)`.
pub fn bp_inverse(psi: &DVector<f64>, gamma: f64) -> DMatrix<f64> {
    let p = psi.len();
    let scale = 1.0 / (gamma + p as f64);
    DMatrix::from_fn(p, p, |i, j| {
        let diag = if i == j { 1.0 / psi[i] } else { 0.0 };
        scale * (diag + 1.0 / (gamma * psi[i]))
    })
}

/// Solves `(D - 1ψᵀ) lambda = phi 1` through the explicit inverse and checks
/// the result against a dense LU solve.
pub fn solve_bp_system(psi: &DVector<f64>, phi: f64, gamma: f64) -> Result<LambdaVector> {
    let (lambda, deviation) = bp_system_with_deviation(psi, phi, gamma)?;
    if deviation > BP_TOLERANCE {
        return Err(Error::OracleMismatch {
            check: "sherman_morrison",
            deviation,
            tolerance: BP_TOLERANCE,
        });
    }
    Ok(lambda)
}

fn bp_system_with_deviation(psi: &DVector<f64>, phi: f64, gamma: f64) -> Result<(LambdaVector, f64)> {
    if psi.is_empty() || psi.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("psi", "entries must be positive"));
    }
    if !(gamma > 0.0) || !(phi > 0.0) {
        return Err(invalid("gamma", "gamma and phi must be positive"));
    }
    let rhs = DVector::from_element(psi.len(), phi);
    let explicit = bp_inverse(psi, gamma) * &rhs;
    let dense = bp_matrix(psi, gamma)
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Degenerate("balancing system is singular".into()))?;
    let deviation = linalg::relative_deviation(&explicit, &dense);
    Ok((LambdaVector::new(explicit.iter().copied().collect())?, deviation))
}

/// `H_jl = -psi_j psi_l` off the diagonal and `(2p - 1) psi_l^2` on it.
pub fn build_surrogate_hessian(psi: &DVector<f64>) -> DMatrix<f64> {
    let p = psi.len();
    let d = 2.0 * p as f64 - 1.0;
    DMatrix::from_fn(p, p, |j, l| if j == l { d * psi[l] * psi[l] } else { -psi[j] * psi[l] })
}

/// `(sigma_k, z_k)` for `k = 1..=p`.
pub fn factor_coefficients(p: usize) -> (Vec<f64>, Vec<f64>) {
    let d = 2.0 * p as f64 - 1.0;
    let two_p = 2.0 * p as f64;
    let mut sigma = Vec::with_capacity(p);
    let mut z = Vec::with_capacity(p);
    for k in 1..=p {
        let shift = k as f64 - 2.0;
        let denom = d - shift;
        let s = ((d * d - shift * d - (k as f64 - 1.0)) / denom).sqrt();
        sigma.push(s);
        z.push(-two_p / (denom * s));
    }
    (sigma, z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateHessianFactor {
    pub p: usize,
    pub psi: Vec<f64>,
    #[serde(skip)]
    pub l_factor: DMatrix<f64>,
    pub sigma: Vec<f64>,
    pub z: Vec<f64>,
    /// `||LLᵀ - H||_inf / ||H||_inf`.
    pub deviation: f64,
}

/// Explicit lower-triangular factor with row `i` equal to
/// `psi_i (z_1, ..., z_{i-1}, sigma_i, 0, ..., 0)`.
pub fn cholesky_surrogate(psi: &DVector<f64>) -> Result<SurrogateHessianFactor> {
    let p = psi.len();
    if p == 0 || psi.iter().any(|v| !(*v > 0.0)) {
        return Err(invalid("psi", "need p >= 1 positive entries"));
    }
    let (sigma, z) = factor_coefficients(p);
    let l = DMatrix::from_fn(p, p, |i, k| match k.cmp(&i) {
        std::cmp::Ordering::Less => psi[i] * z[k],
        std::cmp::Ordering::Equal => psi[i] * sigma[i],
        std::cmp::Ordering::Greater => 0.0,
    });
    let h = build_surrogate_hessian(psi);
    let deviation = inf_norm(&(&l * l.transpose() - &h)) / inf_norm(&h);
    if deviation > CHOLESKY_TOLERANCE {
        return Err(Error::OracleMismatch {
            check: "surrogate_cholesky",
            deviation,
            tolerance: CHOLESKY_TOLERANCE,
        });
    }
    if (0..p).any(|k| !(l[(k, k)] > 0.0)) {
        return Err(Error::Degenerate("explicit factor has a nonpositive diagonal".into()));
    }
    Ok(SurrogateHessianFactor {
        p,
        psi: psi.iter().copied().collect(),
        l_factor: l,
        sigma,
        z,
        deviation,
    })
}

fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Largest absolute violation of `sigma_i^2 + sum_{l<i} z_l^2 = 2p - 1` and
/// `sum_{l<i} z_l^2 + z_i sigma_i = -1`.
pub fn recurrence_residual(p: usize) -> f64 {
    let (sigma, z) = factor_coefficients(p);
    let target = 2.0 * p as f64 - 1.0;
    let mut prefix = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..p {
        worst = worst.max((sigma[i] * sigma[i] + prefix - target).abs());
        worst = worst.max((prefix + z[i] * sigma[i] + 1.0).abs());
        prefix += z[i] * z[i];
    }
    worst
}

/// Gradient of `Q(., lambda')` for the exponent `2p`, up to the positive
/// factor `(phi + lambdaᵀpsi)^(2p-1) / prod lambda`.
pub fn surrogate_gradient_core(lambda: &LambdaVector, phi: f64, psi: &DVector<f64>) -> DVector<f64> {
    let p = lambda.p() as f64;
    let f = phi + lambda.dot(psi);
    DVector::from_fn(lambda.p(), |j, _| 2.0 * p * psi[j] - f / lambda.as_slice()[j])
}

/// Value function `F(lambda) = min_u phi(u) + lambdaᵀpsi(u)` and its minimizer.
pub fn value_function(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    lambda: &LambdaVector,
    settings: &InnerSettings,
) -> Result<(f64, DVector<f64>)> {
    let spec = SubproblemSpec::new(&problem.operator, &problem.b, lambda, penalty, problem.constraint)?;
    let res = solve(&spec, settings)?;
    Ok((res.objective, res.u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientCoordinate {
    pub index: usize,
    pub finite_difference: f64,
    pub analytic: f64,
    pub relative_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    pub coordinates: Vec<GradientCoordinate>,
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Central differences of `F` at randomly chosen coordinates with step
/// `h * lambda_j`, compared with `psi_j(u_lambda)`.
pub fn value_function_gradient_check(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    lambda: &LambdaVector,
    h: f64,
    coordinates: usize,
    rng: &mut impl Rng,
) -> Result<GradientReport> {
    check_len("gradient check", penalty.p(), lambda.p())?;
    if !(h > 0.0) {
        return Err(invalid("h", "step must be positive"));
    }
    let settings = InnerSettings::default();
    let (_, u) = value_function(problem, penalty, lambda, &settings)?;
    let psi = penalty.penalty_vector(&u)?;
    let mut picked = Vec::new();
    while picked.len() < coordinates.min(lambda.p()) {
        let j = rng.random_range(0..lambda.p());
        if !picked.contains(&j) {
            picked.push(j);
        }
    }
    let mut out = Vec::new();
    for j in picked {
        let step = h * lambda.as_slice()[j];
        let shifted = |delta: f64| -> Result<f64> {
            let mut values = lambda.as_slice().to_vec();
            values[j] += delta;
            Ok(value_function(problem, penalty, &LambdaVector::new(values)?, &settings)?.0)
        };
        let fd = (shifted(step)? - shifted(-step)?) / (2.0 * step);
        let relative_error = (fd - psi[j]).abs() / psi[j].abs();
        out.push(GradientCoordinate {
            index: j,
            finite_difference: fd,
            analytic: psi[j],
            relative_error,
            passed: relative_error <= GRADIENT_TOLERANCE,
        });
    }
    let max_relative_error = out.iter().map(|c| c.relative_error).fold(0.0, f64::max);
    Ok(GradientReport {
        passed: out.iter().all(|c| c.passed),
        coordinates: out,
        max_relative_error,
    })
}

/// `F(mid) - (F(a) + F(b)) / 2`; nonnegative for a concave value function.
pub fn concavity_gap(
    problem: &InverseProblem,
    penalty: &PenaltyModel,
    a: &LambdaVector,
    b: &LambdaVector,
) -> Result<f64> {
    let settings = InnerSettings::default();
    let mid = a.blend(b, 0.5);
    let fa = value_function(problem, penalty, a, &settings)?.0;
    let fb = value_function(problem, penalty, b, &settings)?.0;
    let fm = value_function(problem, penalty, &mid, &settings)?.0;
    Ok(fm - 0.5 * (fa + fb))
}

/// Runs the balancing iteration with `lambda_j = phi / (gamma psi_j)` to its
/// fixed point and returns the largest central-difference derivative of
/// `ln Phi_gamma` with respect to `ln lambda_j` there.
pub fn gamma_critical_point_residual(problem: &InverseProblem, penalty: &PenaltyModel, gamma: f64) -> Result<f64> {
    if penalty.p() > 8 {
        return Err(invalid("penalty", "critical point check runs at p <= 8"));
    }
    let config = MMConfig {
        tol_lambda: 1e-14,
        k_max: 20_000,
        numerator_convention: NumeratorConvention::HalfSquaredNorm,
        ..MMConfig::default()
    };
    let fixed = run_balancing(problem, penalty, gamma, &config)?;
    let settings = InnerSettings::default();
    let log_phi = |l: &LambdaVector| -> Result<f64> {
        let (f, _) = value_function(problem, penalty, l, &settings)?;
        phi_gamma_log(f, l, gamma)
    };
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..fixed.lambda.p() {
        let at = |t: f64| -> Result<f64> {
            let mut values = fixed.lambda.as_slice().to_vec();
            values[j] *= t.exp();
            log_phi(&LambdaVector::new(values)?)
        };
        worst = worst.max(((at(h)? - at(-h)?) / (2.0 * h)).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub trials: usize,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl OracleCheck {
    fn new(name: &str, trials: usize, max_deviation: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            trials,
            max_deviation,
            tolerance,
            passed: max_deviation.is_finite() && max_deviation <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub seed: u64,
    pub checks: Vec<OracleCheck>,
    pub elapsed_seconds: f64,
}

impl OracleReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleSettings {
    pub seed: u64,
    pub trials: usize,
    /// Largest `p` for the balancing-system trials.
    pub max_p_system: usize,
    /// Largest `p` for the factorization and recurrence trials.
    pub max_p: usize,
    /// Unknowns of the value-function instances.
    pub gradient_n: usize,
    pub gradient_instances: usize,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            seed: 20240917,
            trials: 50,
            max_p_system: 50,
            max_p: 100,
            gradient_n: 10,
            gradient_instances: 5,
        }
    }
}

fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Small well-conditioned instance with a random dense operator.
pub fn random_instance(n: usize, extra_rows: usize, seed: u64) -> Result<(InverseProblem, PenaltyModel)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = n + extra_rows;
    let a = DMatrix::from_fn(m, n, |i, j| {
        let base = if i == j { 1.5 } else { 0.0 };
        base + rng.random_range(-0.25..0.25)
    });
    let u = DVector::from_fn(n, |i, _| (0.7 * i as f64).sin() + 0.3 * rng.random_range(-1.0..1.0));
    let op: Operator = DenseOperator::new(a)?.into();
    let problem = InverseProblem::from_ground_truth("random", op, u, GridShape::Line(n), 0.05, seed)?
        .with_constraint(Constraint::Unconstrained);
    let penalty = PenaltyModel::line(n, 1e-5)?;
    Ok((problem, penalty))
}

/// The full randomized oracle suite.
pub fn run_oracle_suite(settings: &OracleSettings) -> Result<OracleReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut checks = Vec::new();

    // balancing system: explicit inverse against a dense solve, and the
    // closed form phi / (gamma psi_j)
    let mut worst_system: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut worst_sm_denominator: f64 = 0.0;
    for _ in 0..settings.trials {
        let p = rng.random_range(1..=settings.max_p_system.max(1));
        let psi = DVector::from_fn(p, |_, _| log_uniform(&mut rng, 1e-2, 1e2));
        let gamma = log_uniform(&mut rng, 0.1, 10.0 * p as f64);
        let phi = log_uniform(&mut rng, 1e-3, 1e3);
        let (lambda, deviation) = bp_system_with_deviation(&psi, phi, gamma)?;
        worst_system = worst_system.max(deviation);
        let closed = DVector::from_fn(p, |j, _| phi / (gamma * psi[j]));
        worst_closed = worst_closed.max(linalg::relative_deviation(&lambda.to_dvector(), &closed));
        // 1 + 1ᵀD⁻¹(-psi) = gamma / (p + gamma)
        let d_inv_psi: f64 = psi.iter().map(|v| v / ((gamma + p as f64) * v)).sum();
        let expected = gamma / (p as f64 + gamma);
        worst_sm_denominator = worst_sm_denominator.max(((1.0 - d_inv_psi) - expected).abs() / expected);
    }
    checks.push(OracleCheck::new(
        "sherman_morrison_vs_dense",
        settings.trials,
        worst_system,
        BP_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "sherman_morrison_closed_form",
        settings.trials,
        worst_closed,
        BP_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "sherman_morrison_denominator",
        settings.trials,
        worst_sm_denominator,
        BP_TOLERANCE,
    ));

    // explicit Cholesky factor of the surrogate Hessian
    let mut worst_factor: f64 = 0.0;
    let mut worst_generic: f64 = 0.0;
    let mut worst_recurrence: f64 = 0.0;
    let mut sigma_bound_ok = true;
    for _ in 0..settings.trials {
        let p = rng.random_range(1..=settings.max_p.max(1));
        let psi = DVector::from_fn(p, |_, _| log_uniform(&mut rng, 1e-1, 1e1));
        let factor = match cholesky_surrogate(&psi) {
            Ok(f) => f,
            Err(Error::OracleMismatch { deviation, .. }) => {
                worst_factor = worst_factor.max(deviation);
                continue;
            }
            Err(e) => return Err(e),
        };
        worst_factor = worst_factor.max(factor.deviation);
        let generic = linalg::cholesky(build_surrogate_hessian(&psi))?.l();
        // the Cholesky factor with a positive diagonal is unique
        let scale = generic.amax();
        worst_generic = worst_generic.max((&generic - &factor.l_factor).amax() / scale);
        worst_recurrence = worst_recurrence.max(recurrence_residual(p));
        let sqrt_p = (p as f64).sqrt();
        sigma_bound_ok &= (factor.sigma[0] - (2.0 * p as f64 - 1.0).sqrt()).abs() <= 1e-12 * factor.sigma[0];
        sigma_bound_ok &= factor.sigma.iter().skip(2).all(|s| *s >= sqrt_p * (1.0 - 1e-14));
    }
    checks.push(OracleCheck::new(
        "surrogate_cholesky_explicit",
        settings.trials,
        worst_factor,
        CHOLESKY_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "surrogate_cholesky_vs_generic",
        settings.trials,
        worst_generic,
        CHOLESKY_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "recurrence_identities",
        settings.trials,
        worst_recurrence,
        RECURRENCE_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "sigma_bounds",
        settings.trials,
        if sigma_bound_ok { 0.0 } else { f64::INFINITY },
        0.0,
    ));

    // stationarity of the surrogate at phi / (p psi)
    let mut worst_stationary: f64 = 0.0;
    for _ in 0..settings.trials {
        let p = rng.random_range(1..=6);
        let psi = DVector::from_fn(p, |_, _| log_uniform(&mut rng, 1e-2, 1e2));
        let phi = log_uniform(&mut rng, 1e-2, 1e2);
        let lambda = LambdaVector::new(psi.iter().map(|v| phi / (p as f64 * v)).collect())?;
        let g = surrogate_gradient_core(&lambda, phi, &psi);
        let scale = psi.amax() * 2.0 * p as f64;
        worst_stationary = worst_stationary.max(g.amax() / scale);
    }
    checks.push(OracleCheck::new(
        "surrogate_stationarity",
        settings.trials,
        worst_stationary,
        STATIONARITY_TOLERANCE,
    ));

    // value function: gradient, concavity, coercivity
    let mut worst_gradient: f64 = 0.0;
    let mut worst_concavity: f64 = 0.0;
    let mut coercive = true;
    for k in 0..settings.gradient_instances {
        let (problem, penalty) = random_instance(settings.gradient_n, 4, settings.seed.wrapping_add(k as u64))?;
        let lambda = LambdaVector::new((0..penalty.p()).map(|_| log_uniform(&mut rng, 1e-2, 1.0)).collect())?;
        let report = value_function_gradient_check(&problem, &penalty, &lambda, 1e-6, 5, &mut rng)?;
        worst_gradient = worst_gradient.max(report.max_relative_error);
        let other = LambdaVector::new((0..penalty.p()).map(|_| log_uniform(&mut rng, 1e-2, 1.0)).collect())?;
        let gap = concavity_gap(&problem, &penalty, &lambda, &other)?;
        worst_concavity = worst_concavity.max(-gap);

        let (small, small_penalty) = random_instance(5, 2, settings.seed.wrapping_add(100 + k as u64))?;
        let base = LambdaVector::new((0..5).map(|_| log_uniform(&mut rng, 1e-1, 1.0)).collect())?;
        let inner = InnerSettings::default();
        let f0 = value_function(&small, &small_penalty, &base, &inner)?.0;
        let phi0 = phi_gamma_log(f0, &base, 5.0)?;
        for j in 0..5 {
            for factor in [1e12, 1e-12] {
                let mut values = base.as_slice().to_vec();
                values[j] *= factor;
                let moved = LambdaVector::new(values)?;
                let f1 = value_function(&small, &small_penalty, &moved, &inner)?.0;
                coercive &= phi_gamma_log(f1, &moved, 5.0)? > phi0;
            }
        }
    }
    checks.push(OracleCheck::new(
        "value_function_gradient",
        settings.gradient_instances * 5,
        worst_gradient,
        GRADIENT_TOLERANCE,
    ));
    checks.push(OracleCheck::new(
        "value_function_concavity",
        settings.gradient_instances,
        worst_concavity.max(0.0),
        CONCAVITY_SLACK,
    ));
    checks.push(OracleCheck::new(
        "coercivity",
        settings.gradient_instances * 10,
        if coercive { 0.0 } else { f64::INFINITY },
        0.0,
    ));

    // critical point of Phi_gamma at the balancing fixed point
    let mut worst_critical: f64 = 0.0;
    let critical_trials = 3;
    for k in 0..critical_trials {
        let n = 3 + k % 2;
        let (problem, penalty) = random_instance(n, 3, settings.seed.wrapping_add(200 + k as u64))?;
        let gamma = [n as f64, 0.5 * n as f64, 2.0 * n as f64][k % 3];
        worst_critical = worst_critical.max(gamma_critical_point_residual(&problem, &penalty, gamma)?);
    }
    checks.push(OracleCheck::new(
        "gamma_critical_point",
        critical_trials,
        worst_critical,
        CRITICAL_POINT_TOLERANCE,
    ));

    Ok(OracleReport {
        seed: settings.seed,
        checks,
        elapsed_seconds: start.elapsed().as_secs_f64(),
    })
}
