//! Test problem generators: the 1D deconvolution problems and the 2D
//! inversion-recovery / CPMG relaxometry problem, with the relative noise
//! model `b = y + delta * ||y|| * eta`, `||eta|| = 1`.
//!
//! Noise is drawn from ChaCha20 seeded with the problem seed; standard
//! normal variates come from `rand_distr::StandardNormal` (ziggurat), and
//! the draw is normalised to unit Euclidean norm.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::operators::{
    build_gaussian_blur, build_heat, default_halfwidth, DenseOperator, KroneckerOperator, LinearOperator, Operator,
};
use crate::penalties::GridShape;

/// Feasible set of the inner subproblem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Constraint {
    #[default]
    Unconstrained,
    Nonnegative,
}

/// Standard deviation (in samples) of the blur used by T2 and T3.
pub const BLUR_SIGMA: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub name: String,
    pub operator: Operator,
    pub u_true: DVector<f64>,
    pub y_clean: DVector<f64>,
    pub b: DVector<f64>,
    pub delta: f64,
    pub seed: u64,
    pub constraint: Constraint,
    pub grid: GridShape,
}

impl InverseProblem {
    /// Builds a problem from an operator and ground truth, adding noise.
    pub fn from_ground_truth(
        name: impl Into<String>,
        operator: Operator,
        u_true: DVector<f64>,
        grid: GridShape,
        delta: f64,
        seed: u64,
    ) -> Result<Self> {
        if grid.len() != operator.cols() {
            return Err(Error::DimensionMismatch {
                context: "InverseProblem grid",
                expected: operator.cols(),
                actual: grid.len(),
            });
        }
        let y_clean = operator.apply(&u_true)?;
        let b = add_noise(&y_clean, delta, seed)?;
        Ok(Self {
            name: name.into(),
            operator,
            u_true,
            y_clean,
            b,
            delta,
            seed,
            constraint: Constraint::Unconstrained,
            grid,
        })
    }

    pub fn with_constraint(mut self, constraint: Constraint) -> Self {
        self.constraint = constraint;
        self
    }

    pub fn n(&self) -> usize {
        self.operator.cols()
    }

    pub fn m(&self) -> usize {
        self.operator.rows()
    }

    /// `||b - y||`, equal to `delta * ||y||` by construction.
    pub fn noise_norm(&self) -> f64 {
        (&self.b - &self.y_clean).norm()
    }

    pub fn relative_error(&self, u: &DVector<f64>) -> f64 {
        (u - &self.u_true).norm() / self.u_true.norm()
    }

    pub fn residual(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.operator.apply(u)? - &self.b)
    }
}

/// `y + delta * ||y|| * eta` with `eta` a seeded unit-norm Gaussian direction.
pub fn add_noise(y: &DVector<f64>, delta: f64, seed: u64) -> Result<DVector<f64>> {
    if !(delta >= 0.0) || !delta.is_finite() {
        return Err(invalid("delta", format!("must be >= 0, got {delta}")));
    }
    let scale = y.norm();
    if scale == 0.0 {
        return Err(Error::Degenerate(
            "noise level is relative to ||y||, which is zero".into(),
        ));
    }
    if delta == 0.0 {
        return Ok(y.clone());
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut eta = DVector::from_fn(y.len(), |_, _| StandardNormal.sample(&mut rng));
    let n = eta.norm();
    eta /= n;
    Ok(y + eta * (delta * scale))
}

/// T1: `heat` with `N = M = 100`, `kappa = 1`.
pub fn make_t1(delta: f64, seed: u64) -> Result<InverseProblem> {
    let (a, u_true) = build_heat(100, 1.0)?;
    InverseProblem::from_ground_truth("t1", a.into(), u_true, GridShape::Line(100), delta, seed)
}

/// T2: two narrow peaks on a flat background and a smooth rounded area,
/// `N = 404`, Gaussian blur with `sigma = 5`.
pub fn make_t2(delta: f64, seed: u64) -> Result<InverseProblem> {
    let u_true = t2_signal();
    blurred_problem("t2", u_true, delta, seed)
}

/// T3: a smooth rounded feature, a narrow peak and a ramp, `N = 504`,
/// Gaussian blur with `sigma = 5`.
pub fn make_t3(delta: f64, seed: u64) -> Result<InverseProblem> {
    let u_true = t3_signal();
    blurred_problem("t3", u_true, delta, seed)
}

fn blurred_problem(name: &str, u_true: DVector<f64>, delta: f64, seed: u64) -> Result<InverseProblem> {
    let n = u_true.len();
    let a = build_gaussian_blur(n, BLUR_SIGMA, default_halfwidth(BLUR_SIGMA))?;
    InverseProblem::from_ground_truth(name, a.into(), u_true, GridShape::Line(n), delta, seed)
}

fn gaussian(i: usize, centre: f64, width: f64, height: f64) -> f64 {
    let d = (i as f64 - centre) / width;
    height * (-0.5 * d * d).exp()
}

/// `height * cos^2` bump of half-width `radius`; C1 at its edges.
fn rounded_bump(i: usize, centre: f64, radius: f64, height: f64) -> f64 {
    let d = (i as f64 - centre) / radius;
    if d.abs() >= 1.0 {
        0.0
    } else {
        height * (0.5 * std::f64::consts::PI * d).cos().powi(2)
    }
}

pub fn t2_signal() -> DVector<f64> {
    DVector::from_fn(404, |i, _| {
        gaussian(i, 70.0, 2.0, 1.0) + gaussian(i, 120.0, 2.0, 0.7) + rounded_bump(i, 270.0, 70.0, 0.5)
    })
}

/// Ramp in T3: rises linearly between these indices, then drops to zero.
pub const T3_RAMP: (usize, usize) = (300, 420);

pub fn t3_signal() -> DVector<f64> {
    let (start, end) = T3_RAMP;
    DVector::from_fn(504, |i, _| {
        let ramp = if (start..=end).contains(&i) {
            0.8 * (i - start) as f64 / (end - start) as f64
        } else {
            0.0
        };
        rounded_bump(i, 100.0, 60.0, 0.6) + gaussian(i, 220.0, 2.0, 1.0) + ramp
    })
}

/// Sizes of a 2D relaxometry problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Nmr2dShape {
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
}

impl Nmr2dShape {
    /// 16 x 16 distribution, 32 x 64 data.
    pub const DESK: Nmr2dShape = Nmr2dShape {
        n1: 16,
        n2: 16,
        m1: 32,
        m2: 64,
    };
    /// 80 x 80 distribution, 128 x 2048 data.
    pub const FULL: Nmr2dShape = Nmr2dShape {
        n1: 80,
        n2: 80,
        m1: 128,
        m2: 2048,
    };
}

pub(crate) fn logspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n)
        .map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64))
        .collect()
}

/// Inversion-recovery kernel `1 - 2 exp(-t1/T1)` and CPMG kernel `exp(-t2/T2)`.
pub fn nmr_kernels(shape: Nmr2dShape) -> Result<(DenseOperator, DenseOperator)> {
    let t1 = logspace(1e-3, 3.0, shape.m1);
    let t2 = logspace(1e-3, 3.0, shape.m2);
    let relax1 = logspace(1e-2, 10.0, shape.n1);
    let relax2 = logspace(1e-2, 10.0, shape.n2);
    let k1 = DMatrix::from_fn(shape.m1, shape.n1, |i, j| 1.0 - 2.0 * (-t1[i] / relax1[j]).exp());
    let k2 = DMatrix::from_fn(shape.m2, shape.n2, |i, j| (-t2[i] / relax2[j]).exp());
    Ok((DenseOperator::new(k1)?, DenseOperator::new(k2)?))
}

/// Two Gaussian peaks on the `(log10 T1, log10 T2)` grid.
pub fn nmr_distribution(n1: usize, n2: usize) -> DVector<f64> {
    let relax1: Vec<f64> = logspace(1e-2, 10.0, n1).iter().map(|t| t.log10()).collect();
    let relax2: Vec<f64> = logspace(1e-2, 10.0, n2).iter().map(|t| t.log10()).collect();
    let peak = |x: f64, y: f64, cx: f64, cy: f64, s: f64, h: f64| {
        h * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
    };
    let mut u = DVector::zeros(n1 * n2);
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            let (x, y) = (relax1[i1], relax2[i2]);
            u[i1 + n1 * i2] = peak(x, y, -1.0, -1.2, 0.25, 1.0) + peak(x, y, 0.2, -0.1, 0.3, 0.6);
        }
    }
    u
}

/// Relaxation distributions are nonnegative, so the problem carries the
/// nonnegativity constraint.
pub fn make_nmr2d(shape: Nmr2dShape, delta: f64, seed: u64) -> Result<InverseProblem> {
    let Nmr2dShape { n1, n2, m1, m2 } = shape;
    if n1 < 2 || n2 < 2 || m1 < 2 || m2 < 2 {
        return Err(invalid("shape", format!("all dimensions must be >= 2, got {shape:?}")));
    }
    let (k1, k2) = nmr_kernels(shape)?;
    let operator = KroneckerOperator::new(k1, k2);
    let u_true = nmr_distribution(n1, n2);
    InverseProblem::from_ground_truth(
        "nmr2d",
        operator.into(),
        u_true,
        GridShape::Grid { n1, n2 },
        delta,
        seed,
    )
    .map(|p| p.with_constraint(Constraint::Nonnegative))
}
