//! Inner subproblem `min_{u in Omega} ||Au - b||^2 / 2 + sum_i lambda_i psi_i(u)`
//! for fixed parameters.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::linalg;
use crate::mm::LambdaVector;
use crate::operators::{LinearOperator, Operator};
use crate::penalties::PenaltyModel;
use crate::testproblems::Constraint;

/// Normal-equation data `AᵀA`, `Aᵀb`, cached across outer iterations.
#[derive(Debug, Clone)]
pub struct Gram {
    pub ata: DMatrix<f64>,
    pub atb: DVector<f64>,
}

impl Gram {
    pub fn new(operator: &Operator, b: &DVector<f64>) -> Result<Self> {
        Ok(Self {
            ata: operator.gram(),
            atb: operator.adjoint(b)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct SubproblemSpec<'a> {
    pub operator: &'a Operator,
    pub b: &'a DVector<f64>,
    pub lambda: &'a LambdaVector,
    pub penalty: &'a PenaltyModel,
    pub constraint: Constraint,
    pub warm_start: Option<&'a DVector<f64>>,
    pub gram: Option<&'a Gram>,
}

impl<'a> SubproblemSpec<'a> {
    pub fn new(
        operator: &'a Operator,
        b: &'a DVector<f64>,
        lambda: &'a LambdaVector,
        penalty: &'a PenaltyModel,
        constraint: Constraint,
    ) -> Result<Self> {
        check_len("SubproblemSpec data", operator.rows(), b.len())?;
        check_len("SubproblemSpec penalty", operator.cols(), penalty.n())?;
        check_len("SubproblemSpec lambda", penalty.p(), lambda.p())?;
        if !lambda.is_strictly_positive() {
            return Err(invalid("lambda", "subproblems need strictly positive parameters"));
        }
        Ok(Self {
            operator,
            b,
            lambda,
            penalty,
            constraint,
            warm_start: None,
            gram: None,
        })
    }

    pub fn with_warm_start(mut self, u: &'a DVector<f64>) -> Self {
        self.warm_start = Some(u);
        self
    }

    pub fn with_gram(mut self, gram: &'a Gram) -> Self {
        self.gram = Some(gram);
        self
    }

    fn gram(&self) -> Result<Cow<'a, Gram>> {
        match self.gram {
            Some(g) => Ok(Cow::Borrowed(g)),
            None => Ok(Cow::Owned(Gram::new(self.operator, self.b)?)),
        }
    }

    fn l1_weight(&self) -> Option<f64> {
        self.penalty
            .l1_enabled()
            .then(|| self.lambda.as_slice()[self.penalty.n()])
    }

    /// Objective recomputed from scratch through the operator.
    pub fn objective(&self, u: &DVector<f64>) -> Result<f64> {
        let r = self.operator.apply(u)? - self.b;
        Ok(0.5 * r.norm_squared() + self.penalty.weighted_value(u, self.lambda.as_slice())?)
    }

    /// Hessian of the smooth part, `AᵀA + 2 Lᵀ diag(lambda) L`.
    fn hessian(&self, gram: &Gram) -> Result<DMatrix<f64>> {
        Ok(&gram.ata + self.penalty.smooth_hessian(self.lambda.as_slice())?)
    }

    fn initial_point(&self, n: usize, project: bool) -> Result<DVector<f64>> {
        let u = match self.warm_start {
            Some(w) => {
                check_len("warm start", n, w.len())?;
                w.clone()
            }
            None => DVector::zeros(n),
        };
        Ok(if project { u.map(|v| v.max(0.0)) } else { u })
    }
}

/// Gradient of the smooth part `||Au-b||^2/2 + sum_{i<=N} lambda_i (Lu)_i^2`.
pub fn smooth_gradient(spec: &SubproblemSpec<'_>, u: &DVector<f64>) -> Result<DVector<f64>> {
    let ar = spec.operator.adjoint(&(spec.operator.apply(u)? - spec.b))?;
    Ok(ar + spec.penalty.smooth_gradient(u, spec.lambda.as_slice())?)
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub u: DVector<f64>,
    pub inner_iterations: usize,
    pub objective: f64,
    /// Unconstrained: `||H u - Aᵀb|| / ||Aᵀb||`. Nonnegative: the same norm
    /// of the projected gradient.
    pub kkt_residual: f64,
    pub converged: bool,
    /// Objective after every accepted iterate (iterative solvers only).
    pub history: Vec<f64>,
}

/// Tolerances and iteration caps of the inner solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InnerSettings {
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub fista_tol: f64,
    pub fista_max_iter: usize,
}

impl Default for InnerSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-8,
            newton_max_iter: 500,
            fista_tol: 1e-6,
            fista_max_iter: 2000,
        }
    }
}

/// Picks the solver matching the constraint and the penalty model.
pub fn solve(spec: &SubproblemSpec<'_>, settings: &InnerSettings) -> Result<SolveResult> {
    match (spec.constraint, spec.penalty.l1_enabled()) {
        (Constraint::Unconstrained, false) => solve_unconstrained(spec),
        (Constraint::Nonnegative, false) => {
            solve_newton_projection(spec, settings.newton_tol, settings.newton_max_iter)
        }
        (Constraint::Nonnegative, true) => solve_fista(spec, settings.fista_tol, settings.fista_max_iter),
        (Constraint::Unconstrained, true) => Err(invalid(
            "constraint",
            "the L1 term is only supported with the nonnegativity constraint",
        )),
    }
}

fn projected_gradient(u: &DVector<f64>, g: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(u.len(), |i, _| if u[i] > 0.0 { g[i] } else { g[i].min(0.0) })
}

/// Solves the first-order conditions `(AᵀA + 2 Lᵀ diag(lambda) L) u = Aᵀb`.
pub fn solve_unconstrained(spec: &SubproblemSpec<'_>) -> Result<SolveResult> {
    if spec.constraint != Constraint::Unconstrained || spec.penalty.l1_enabled() {
        return Err(invalid(
            "spec",
            "direct solve needs an unconstrained problem without the L1 term",
        ));
    }
    let gram = spec.gram()?;
    let h = spec.hessian(&gram)?;
    let chol = linalg::cholesky(h.clone())?;
    let mut u = chol.solve(&gram.atb);
    // one step of iterative refinement
    let r = &gram.atb - &h * &u;
    u += chol.solve(&r);
    let scale = gram.atb.norm().max(f64::MIN_POSITIVE);
    let kkt_residual = (&h * &u - &gram.atb).norm() / scale;
    let objective = spec.objective(&u)?;
    Ok(SolveResult {
        u,
        inner_iterations: 1,
        objective,
        kkt_residual,
        converged: true,
        history: Vec::new(),
    })
}

const ARMIJO_SUFFICIENT_DECREASE: f64 = 1e-4;
const ARMIJO_BACKTRACK: f64 = 0.5;
const ARMIJO_MAX_HALVINGS: usize = 60;

/// Projected Newton method for the nonnegatively constrained quadratic.
///
/// Each iteration fixes the variables sitting on the bound with a positive
/// gradient, takes the Newton step on the remaining ones using the reduced
/// Hessian, and backtracks along the projection arc with an Armijo test.
pub fn solve_newton_projection(spec: &SubproblemSpec<'_>, tol: f64, max_iter: usize) -> Result<SolveResult> {
    if spec.constraint != Constraint::Nonnegative || spec.penalty.l1_enabled() {
        return Err(invalid(
            "spec",
            "Newton projection needs the nonnegativity constraint and no L1 term",
        ));
    }
    let gram = spec.gram()?;
    let h = spec.hessian(&gram)?;
    let c = &gram.atb;
    let n = c.len();
    let scale = c.norm().max(f64::MIN_POSITIVE);
    let eps_active = 1e-12 * spec.b.norm();

    let mut u = spec.initial_point(n, true)?;
    let mut g = &h * &u - c;
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        let pg = projected_gradient(&u, &g);
        if pg.norm() <= tol * scale {
            converged = true;
            break;
        }
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let free: Vec<usize> = (0..n).filter(|&i| !(u[i] <= eps_active && g[i] > 0.0)).collect();
        let mut direction = DVector::zeros(n);
        if !free.is_empty() {
            let h_ff = h.select_rows(&free).select_columns(&free);
            let g_f = DVector::from_iterator(free.len(), free.iter().map(|&i| -g[i]));
            let d_f = linalg::spd_solve(h_ff, &g_f)?;
            for (k, &i) in free.iter().enumerate() {
                direction[i] = d_f[k];
            }
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..ARMIJO_MAX_HALVINGS {
            let trial = (&u + &direction * step).map(|v| v.max(0.0));
            let delta = &trial - &u;
            let slope = g.dot(&delta);
            // exact change of the quadratic along delta
            let change = slope + 0.5 * delta.dot(&(&h * &delta));
            if change <= ARMIJO_SUFFICIENT_DECREASE * slope && slope < 0.0 {
                accepted = Some(trial);
                break;
            }
            step *= ARMIJO_BACKTRACK;
        }
        let next = match accepted {
            Some(t) => t,
            None => projected_gradient_step(&u, &g, &h),
        };
        g = &h * &next - c;
        u = next;
        history.push(f64::NAN);
    }

    let objective = spec.objective(&u)?;
    if let Some(last) = history.last_mut() {
        *last = objective;
    }
    history.retain(|v| !v.is_nan());
    let kkt_residual = projected_gradient(&u, &g).norm() / scale;
    Ok(SolveResult {
        u,
        inner_iterations: iterations,
        objective,
        kkt_residual,
        converged,
        history,
    })
}

/// Exact line search along the projected steepest-descent direction; the
/// fallback when the Newton arc yields no sufficient decrease.
fn projected_gradient_step(u: &DVector<f64>, g: &DVector<f64>, h: &DMatrix<f64>) -> DVector<f64> {
    let d = -projected_gradient(u, g);
    // largest step that keeps the iterate feasible
    let mut max_step = f64::INFINITY;
    for i in 0..u.len() {
        if d[i] < 0.0 {
            max_step = max_step.min(-u[i] / d[i]);
        }
    }
    let curvature = d.dot(&(h * &d));
    let mut step = if curvature > 0.0 {
        d.norm_squared() / curvature
    } else {
        max_step
    };
    if step > max_step {
        step = max_step;
    }
    (u + d * step).map(|v| v.max(0.0))
}

const POWER_ITERATIONS: usize = 20;
const LIPSCHITZ_MARGIN: f64 = 1.05;

/// Largest eigenvalue estimate of the smooth Hessian by power iteration.
fn lipschitz_estimate(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0);
    v /= v.norm();
    let mut estimate = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let w = h * &v;
        estimate = v.dot(&w);
        let norm = w.norm();
        if norm == 0.0 {
            break;
        }
        v = w / norm;
    }
    // the Rayleigh quotient underestimates; fall back to a Gershgorin-free
    // bound from the last image norm when it is larger
    let image = (h * &v).norm();
    LIPSCHITZ_MARGIN * estimate.max(image)
}

/// Accelerated proximal gradient with restart for the nonnegative problem
/// carrying the global L1 term.
///
/// The prox of `lambda_{N+1} ||.||_1` plus the nonnegativity indicator is
/// `max(v - t lambda_{N+1}, 0)`.
pub fn solve_fista(spec: &SubproblemSpec<'_>, tol: f64, max_iter: usize) -> Result<SolveResult> {
    if spec.constraint != Constraint::Nonnegative {
        return Err(invalid("spec", "FISTA handles the nonnegative problem"));
    }
    let gram = spec.gram()?;
    let h = spec.hessian(&gram)?;
    let c = &gram.atb;
    let n = c.len();
    let l1 = spec.l1_weight().unwrap_or(0.0);
    let eps = spec.penalty.eps_psi();
    let lambda = spec.lambda.as_slice();
    // constant part of the objective
    let b_sq = spec.b.norm_squared();
    let floor_terms: f64 = lambda[..n].iter().sum::<f64>() * eps + l1 * eps;
    let value = |u: &DVector<f64>, hu: &DVector<f64>| -> f64 {
        0.5 * u.dot(hu) - c.dot(u) + 0.5 * b_sq + floor_terms + l1 * u.iter().map(|v| v.abs()).sum::<f64>()
    };

    let step = 1.0 / lipschitz_estimate(&h);
    let shrink = step * l1;
    let mut x = spec.initial_point(n, true)?;
    let mut hx = &h * &x;
    let mut current = value(&x, &hx);
    if !current.is_finite() {
        return Err(Error::NonFinite {
            solver: "fista",
            value: current,
        });
    }
    let mut y = x.clone();
    let mut hy = hx.clone();
    let mut theta = 1.0f64;
    let mut history = vec![current];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iter {
        iterations += 1;
        let grad = &hy - c;
        let x_new = (&y - grad * step).map(|v| (v - shrink).max(0.0));
        let hx_new = &h * &x_new;
        let trial = value(&x_new, &hx_new);
        if !trial.is_finite() {
            return Err(Error::NonFinite {
                solver: "fista",
                value: trial,
            });
        }
        if trial > current {
            // momentum restart from the last accepted iterate
            theta = 1.0;
            y = x.clone();
            hy = hx.clone();
            continue;
        }
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let beta = (theta - 1.0) / theta_next;
        y = &x_new + (&x_new - &x) * beta;
        hy = &hx_new + (&hx_new - &hx) * beta;
        theta = theta_next;
        let change = current - trial;
        x = x_new;
        hx = hx_new;
        current = trial;
        history.push(current);
        if change <= tol * current.abs() {
            converged = true;
            break;
        }
    }

    let objective = spec.objective(&x)?;
    // KKT residual of the composite problem: gradient plus the L1 subgradient
    let g = &hx - c;
    let kkt = DVector::from_fn(n, |i, _| {
        let gi = g[i] + l1;
        if x[i] > 0.0 {
            gi
        } else {
            gi.min(0.0)
        }
    });
    Ok(SolveResult {
        u: x,
        inner_iterations: iterations,
        objective,
        kkt_residual: kkt.norm() / c.norm().max(f64::MIN_POSITIVE),
        converged,
        history,
    })
}

/// Single-parameter Tikhonov `min ||Au-b||^2/2 + lambda ||Lu||^2` over the
/// feasible set, through the multi-penalty solvers with uniform weights.
pub fn solve_tikhonov(
    operator: &Operator,
    b: &DVector<f64>,
    penalty: &PenaltyModel,
    lambda: f64,
    constraint: Constraint,
    gram: Option<&Gram>,
    settings: &InnerSettings,
) -> Result<SolveResult> {
    let weights = LambdaVector::uniform(penalty.p(), lambda)?;
    let mut spec = SubproblemSpec::new(operator, b, &weights, penalty, constraint)?;
    if let Some(g) = gram {
        spec = spec.with_gram(g);
    }
    solve(&spec, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::DenseOperator;
    use crate::penalties::GridShape;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_problem(seed: u64, m: usize, n: usize) -> (Operator, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(m, n, |i, j| {
            let base = if i == j { 2.0 } else { 0.0 };
            base + rng.random_range(-0.3..0.3)
        });
        let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        (DenseOperator::new(a).unwrap().into(), b)
    }

    #[test]
    fn vanishing_penalty_identity_recovers_data() {
        let op: Operator = DenseOperator::identity(8).into();
        let b = DVector::from_fn(8, |i, _| (i as f64).sin());
        let penalty = PenaltyModel::line(8, 1e-6).unwrap();
        let lambda = LambdaVector::uniform(8, 1e-15).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap();
        let res = solve_unconstrained(&spec).unwrap();
        assert!((&res.u - &b).norm() <= 1e-6 * b.norm());
    }

    #[test]
    fn first_order_condition_holds() {
        let (op, b) = random_problem(1, 14, 10);
        let penalty = PenaltyModel::line(10, 1e-6).unwrap();
        let lambda = LambdaVector::new((0..10).map(|i| 0.1 + 0.05 * i as f64).collect()).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap();
        let res = solve_unconstrained(&spec).unwrap();
        let grad = smooth_gradient(&spec, &res.u).unwrap();
        let atb = op.adjoint(&b).unwrap();
        assert!(grad.norm() <= 1e-10 * atb.norm());
        assert!(res.kkt_residual <= 1e-10);
        let recomputed = spec.objective(&res.u).unwrap();
        assert!((recomputed - res.objective).abs() <= 1e-12 * recomputed.abs());
    }

    #[test]
    fn smooth_gradient_matches_finite_differences() {
        let (op, b) = random_problem(2, 9, 7);
        let penalty = PenaltyModel::line(7, 1e-6).unwrap();
        let lambda = LambdaVector::new((0..7).map(|i| 0.2 + 0.1 * i as f64).collect()).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let u = DVector::from_fn(7, |_, _| rng.random_range(-1.0..1.0));
            let g = smooth_gradient(&spec, &u).unwrap();
            for j in 0..7 {
                let h = 1e-6;
                let mut up = u.clone();
                up[j] += h;
                let mut dn = u.clone();
                dn[j] -= h;
                let fd = (spec.objective(&up).unwrap() - spec.objective(&dn).unwrap()) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-5 * g[j].abs().max(1e-3), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn newton_matches_direct_when_constraint_inactive() {
        let n = 12;
        let op: Operator = DenseOperator::identity(n).into();
        let b = DVector::from_fn(n, |i, _| 2.0 + (i as f64 * 0.5).sin());
        let penalty = PenaltyModel::line(n, 1e-6).unwrap();
        let lambda = LambdaVector::uniform(n, 0.05).unwrap();
        let direct =
            solve_unconstrained(&SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap())
                .unwrap();
        assert!(direct.u.min() > 0.0);
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative).unwrap();
        let res = solve_newton_projection(&spec, 1e-8, 500).unwrap();
        assert!(res.converged);
        assert!((&res.u - &direct.u).norm() <= 1e-8 * direct.u.norm());
    }

    #[test]
    fn newton_beats_clipped_unconstrained_solution_and_satisfies_kkt() {
        let n = 30;
        let op: Operator = DenseOperator::identity(n).into();
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.4).sin());
        let penalty = PenaltyModel::line(n, 1e-6).unwrap();
        let lambda = LambdaVector::uniform(n, 0.3).unwrap();
        let unc =
            solve_unconstrained(&SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap())
                .unwrap();
        assert!(unc.u.min() < 0.0);
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative).unwrap();
        let res = solve_newton_projection(&spec, 1e-10, 500).unwrap();
        assert!(res.converged);
        assert!(res.u.min() >= 0.0);
        let clipped = unc.u.map(|v| v.max(0.0));
        assert!(res.objective <= spec.objective(&clipped).unwrap());

        let g = smooth_gradient(&spec, &res.u).unwrap();
        let scale = 1e-8 * op.adjoint(&b).unwrap().norm();
        let eps_a = 1e-12 * b.norm();
        for i in 0..n {
            if res.u[i] > eps_a {
                assert!(g[i].abs() <= scale, "free {i}: {}", g[i]);
            } else {
                assert!(g[i] >= -scale, "bound {i}: {}", g[i]);
            }
        }
    }

    #[test]
    fn fista_agrees_with_newton_without_l1() {
        let (op, b0) = random_problem(4, 12, 10);
        let b = b0.add_scalar(1.5);
        let penalty = PenaltyModel::new(GridShape::Line(10), 1e-6, true).unwrap();
        let mut weights: Vec<f64> = (0..10).map(|i| 0.05 + 0.01 * i as f64).collect();
        weights.push(1e-300);
        let lambda = LambdaVector::new(weights.clone()).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative).unwrap();
        let fista = solve_fista(&spec, 1e-14, 20_000).unwrap();

        let plain = PenaltyModel::line(10, 1e-6).unwrap();
        weights.pop();
        let lambda2 = LambdaVector::new(weights).unwrap();
        let spec2 = SubproblemSpec::new(&op, &b, &lambda2, &plain, Constraint::Nonnegative).unwrap();
        let newton = solve_newton_projection(&spec2, 1e-12, 500).unwrap();
        assert!((&fista.u - &newton.u).norm() <= 1e-5 * newton.u.norm());
    }

    #[test]
    fn fista_dominant_l1_gives_zero_and_descends() {
        let (op, b) = random_problem(6, 12, 10);
        let penalty = PenaltyModel::new(GridShape::Line(10), 1e-6, true).unwrap();
        let mut weights = vec![0.1; 10];
        weights.push(1e12);
        let lambda = LambdaVector::new(weights).unwrap();
        let warm = DVector::from_element(10, 1.0);
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative)
            .unwrap()
            .with_warm_start(&warm);
        let res = solve_fista(&spec, 1e-10, 2000).unwrap();
        assert!(res.u.amax() == 0.0);

        let mut weights = vec![0.1; 10];
        weights.push(0.05);
        let lambda = LambdaVector::new(weights).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative).unwrap();
        let res = solve_fista(&spec, 1e-10, 2000).unwrap();
        for w in res.history.windows(2) {
            assert!(w[1] <= w[0]);
        }
        assert!(res.history.last().unwrap() <= res.history.first().unwrap());
        assert!((res.objective - spec.objective(&res.u).unwrap()).abs() <= 1e-12 * res.objective.abs());
        assert!((res.objective - res.history.last().unwrap()).abs() <= 1e-9 * res.objective.abs());
    }

    #[test]
    fn warm_start_does_not_hurt() {
        let n = 40;
        let op: Operator = DenseOperator::identity(n).into();
        let b = DVector::from_fn(n, |i, _| (i as f64 * 0.3).cos());
        let penalty = PenaltyModel::line(n, 1e-6).unwrap();
        let lambda = LambdaVector::uniform(n, 0.2).unwrap();
        let cold_spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Nonnegative).unwrap();
        let cold = solve_newton_projection(&cold_spec, 1e-8, 500).unwrap();
        let warm_u = b.map(|v| v.abs());
        let warm = solve_newton_projection(&cold_spec.clone().with_warm_start(&warm_u), 1e-8, 500).unwrap();
        assert!(warm.objective <= cold.objective + 1e-8 * cold.objective.abs());
    }

    #[test]
    fn dispatch_rejects_unconstrained_l1() {
        let op: Operator = DenseOperator::identity(4).into();
        let b = DVector::from_element(4, 1.0);
        let penalty = PenaltyModel::new(GridShape::Line(4), 1e-6, true).unwrap();
        let lambda = LambdaVector::uniform(5, 1.0).unwrap();
        let spec = SubproblemSpec::new(&op, &b, &lambda, &penalty, Constraint::Unconstrained).unwrap();
        assert!(solve(&spec, &InnerSettings::default()).is_err());
    }

    #[test]
    fn spec_validates_lambda() {
        let op: Operator = DenseOperator::identity(4).into();
        let b = DVector::from_element(4, 1.0);
        let penalty = PenaltyModel::line(4, 1e-6).unwrap();
        let zero = LambdaVector::nonnegative(vec![0.0; 4]);
        assert!(SubproblemSpec::new(&op, &b, &zero, &penalty, Constraint::Unconstrained).is_err());
        let short = LambdaVector::uniform(3, 1.0).unwrap();
        assert!(SubproblemSpec::new(&op, &b, &short, &penalty, Constraint::Unconstrained).is_err());
    }
}
