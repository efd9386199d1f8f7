//! Point-wise penalties `psi_i(u) = (Lu)_i^2 + eps`, their max-filtered
//! variants, and the optional global L1 term.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, invalid, Error, Result};
use crate::operators::{DifferenceOperator, DifferenceOrder};

/// Default floor added to every point-wise penalty.
pub const DEFAULT_EPS_PSI: f64 = 1e-5;

/// Layout of the unknown: a 1D signal or a column-major 2D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridShape {
    Line(usize),
    Grid { n1: usize, n2: usize },
}

impl GridShape {
    pub fn len(&self) -> usize {
        match *self {
            GridShape::Line(n) => n,
            GridShape::Grid { n1, n2 } => n1 * n2,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The vector penalty map `u -> psi(u)`.
///
/// On a grid the curvature at a point is the sum of the squared second
/// differences along both axes; the first-difference operators are only used
/// by the max-filtered 2D variant.
#[derive(Debug, Clone)]
pub struct PenaltyModel {
    grid: GridShape,
    second: Vec<DifferenceOperator>,
    first: Vec<DifferenceOperator>,
    eps_psi: f64,
    l1_enabled: bool,
}

impl PenaltyModel {
    pub fn new(grid: GridShape, eps_psi: f64, l1_enabled: bool) -> Result<Self> {
        if !(eps_psi > 0.0) || !eps_psi.is_finite() {
            return Err(invalid("eps_psi", format!("must be positive, got {eps_psi}")));
        }
        let (second, first) = match grid {
            GridShape::Line(n) => (
                vec![DifferenceOperator::on_grid(DifferenceOrder::Second, n, 1, 0)?],
                vec![DifferenceOperator::on_grid(DifferenceOrder::First, n, 1, 0)?],
            ),
            GridShape::Grid { n1, n2 } => {
                let mut second = Vec::with_capacity(2);
                let mut first = Vec::with_capacity(2);
                for axis in 0..2 {
                    second.push(DifferenceOperator::on_grid(DifferenceOrder::Second, n1, n2, axis)?);
                    first.push(DifferenceOperator::on_grid(DifferenceOrder::First, n1, n2, axis)?);
                }
                (second, first)
            }
        };
        Ok(Self {
            grid,
            second,
            first,
            eps_psi,
            l1_enabled,
        })
    }

    /// 1D model with `p = n` penalties.
    pub fn line(n: usize, eps_psi: f64) -> Result<Self> {
        Self::new(GridShape::Line(n), eps_psi, false)
    }

    pub fn grid(&self) -> GridShape {
        self.grid
    }

    pub fn eps_psi(&self) -> f64 {
        self.eps_psi
    }

    pub fn l1_enabled(&self) -> bool {
        self.l1_enabled
    }

    /// Number of unknowns `N`.
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Number of penalties `p` (`N`, or `N + 1` with the L1 term).
    pub fn p(&self) -> usize {
        self.n() + usize::from(self.l1_enabled)
    }

    fn squared_magnitude(ops: &[DifferenceOperator], u: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; u.len()];
        let mut buf = vec![0.0; u.len()];
        for op in ops {
            op.apply_slice(u, &mut buf);
            for (a, d) in acc.iter_mut().zip(&buf) {
                *a += d * d;
            }
        }
        acc
    }

    /// `(Lu)_i^2` summed over axes, without the floor.
    pub fn curvature(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("PenaltyModel::curvature", self.n(), u.len())?;
        Ok(DVector::from_vec(Self::squared_magnitude(&self.second, u.as_slice())))
    }

    /// `(Pu)_i^2` summed over axes.
    pub fn slope(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("PenaltyModel::slope", self.n(), u.len())?;
        Ok(DVector::from_vec(Self::squared_magnitude(&self.first, u.as_slice())))
    }

    /// `psi(u)`: `N` floored curvature terms, then `||u||_1` (unfloored) when
    /// the L1 term is enabled.
    pub fn eval_psi(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut psi = self.curvature(u)?.add_scalar(self.eps_psi);
        if self.l1_enabled {
            psi = psi.push(u.lp_norm(1));
        }
        Ok(psi)
    }

    /// `psi(u)` with the L1 entry guarded as `||u||_1 + eps`.
    ///
    /// This is the vector the parameter updates and the surrogate use, and
    /// the one whose weighted sum the subproblem objective reports.
    pub fn penalty_vector(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let mut psi = self.eval_psi(u)?;
        if self.l1_enabled {
            psi[self.n()] += self.eps_psi;
        }
        Ok(psi)
    }

    /// Max filter of the floored curvature over `{i-1, i, i+1}` with periodic wrap.
    pub fn eval_psi_tilde_1d(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let GridShape::Line(n) = self.grid else {
            return Err(invalid("grid", "eval_psi_tilde_1d needs a 1D model"));
        };
        let psi = self.curvature(u)?.add_scalar(self.eps_psi);
        Ok(window_max_1d(&psi, n))
    }

    /// `max_{3x3}` of the curvature plus `max_{3x3}` of the squared slope,
    /// plus the floor.
    pub fn eval_psi_tilde_2d(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let GridShape::Grid { n1, n2 } = self.grid else {
            return Err(Error::DimensionMismatch {
                context: "eval_psi_tilde_2d needs a grid model",
                expected: 2,
                actual: 1,
            });
        };
        let curv = window_max_2d(&self.curvature(u)?, n1, n2);
        let slope = window_max_2d(&self.slope(u)?, n1, n2);
        Ok((curv + slope).add_scalar(self.eps_psi))
    }

    /// Max-filtered penalties for whichever geometry the model has (length `N`).
    pub fn eval_psi_tilde(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        match self.grid {
            GridShape::Line(_) => self.eval_psi_tilde_1d(u),
            GridShape::Grid { .. } => self.eval_psi_tilde_2d(u),
        }
    }

    /// `sum_i lambda_i psi_i(u)` over the `p` penalties (L1 entry guarded).
    pub fn weighted_value(&self, u: &DVector<f64>, lambda: &[f64]) -> Result<f64> {
        check_len("PenaltyModel::weighted_value", self.p(), lambda.len())?;
        Ok(self.penalty_vector(u)?.iter().zip(lambda).map(|(p, l)| p * l).sum())
    }

    /// Gradient of the smooth part `sum_{i<N} lambda_i (Lu)_i^2`.
    pub fn smooth_gradient(&self, u: &DVector<f64>, lambda: &[f64]) -> Result<DVector<f64>> {
        check_len("PenaltyModel::smooth_gradient", self.n(), u.len())?;
        if lambda.len() < self.n() {
            return Err(Error::DimensionMismatch {
                context: "PenaltyModel::smooth_gradient lambda",
                expected: self.n(),
                actual: lambda.len(),
            });
        }
        let n = self.n();
        let mut grad = DVector::zeros(n);
        let mut lu = vec![0.0; n];
        for op in &self.second {
            op.apply_slice(u.as_slice(), &mut lu);
            for (k, v) in lu.iter_mut().enumerate() {
                *v *= 2.0 * lambda[k];
            }
            // second differences are symmetric
            let mut back = vec![0.0; n];
            op.apply_slice(&lu, &mut back);
            for (g, b) in grad.iter_mut().zip(&back) {
                *g += b;
            }
        }
        Ok(grad)
    }

    /// Hessian of the smooth part: `2 sum_axes Lᵀ diag(lambda_1..N) L`.
    pub fn smooth_hessian(&self, lambda: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n();
        if lambda.len() < n {
            return Err(Error::DimensionMismatch {
                context: "PenaltyModel::smooth_hessian lambda",
                expected: n,
                actual: lambda.len(),
            });
        }
        let mut h = DMatrix::zeros(n, n);
        for op in &self.second {
            for (k, &lk) in lambda.iter().enumerate().take(n) {
                let row = op.stencil(k);
                for &(a, ca) in &row {
                    for &(b, cb) in &row {
                        h[(a, b)] += 2.0 * lk * ca * cb;
                    }
                }
            }
        }
        Ok(h)
    }
}

fn window_max_1d(values: &DVector<f64>, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| {
        let prev = values[(i + n - 1) % n];
        let next = values[(i + 1) % n];
        values[i].max(prev).max(next)
    })
}

fn window_max_2d(values: &DVector<f64>, n1: usize, n2: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n1 * n2);
    for i2 in 0..n2 {
        for i1 in 0..n1 {
            let mut m = f64::NEG_INFINITY;
            for d2 in [n2 - 1, 0, 1] {
                for d1 in [n1 - 1, 0, 1] {
                    let j1 = (i1 + d1) % n1;
                    let j2 = (i2 + d2) % n2;
                    m = m.max(values[j1 + n1 * j2]);
                }
            }
            out[i1 + n1 * i2] = m;
        }
    }
    out
}
