//! Forward models and difference operators.
//!
//! Every operator is immutable after construction. Vectors on 2D grids are
//! stored column-major: entry `(i1, i2)` of an `n1 x n2` grid lives at
//! `i1 + n1 * i2`, which matches `vec(U)` in `(K2 ⊗ K1) vec(U) = vec(K1 U K2ᵀ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, invalid, Result};

/// A real linear map `R^cols -> R^rows`.
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;

    /// `A x`.
    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>>;

    /// `Aᵀ y`.
    fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>>;

    /// Dense copy of the operator. Only meant for small instances.
    fn materialize(&self) -> DMatrix<f64>;

    /// `AᵀA`.
    fn gram(&self) -> DMatrix<f64> {
        let a = self.materialize();
        a.tr_mul(&a)
    }
}

/// A dense `M x N` matrix with `M >= N`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOperator {
    matrix: DMatrix<f64>,
}

impl DenseOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() < matrix.ncols() {
            return Err(invalid(
                "matrix",
                format!(
                    "forward operators need rows >= cols, got {}x{}",
                    matrix.nrows(),
                    matrix.ncols()
                ),
            ));
        }
        if matrix.ncols() == 0 {
            return Err(invalid("matrix", "empty operator"));
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

impl LinearOperator for DenseOperator {
    fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("DenseOperator::apply", self.cols(), x.len())?;
        Ok(&self.matrix * x)
    }

    fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("DenseOperator::adjoint", self.rows(), y.len())?;
        Ok(self.matrix.tr_mul(y))
    }

    fn materialize(&self) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// The separable operator `K2 ⊗ K1`, applied as `vec(K1 U K2ᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KroneckerOperator {
    k1: DenseOperator,
    k2: DenseOperator,
}

impl KroneckerOperator {
    pub fn new(k1: DenseOperator, k2: DenseOperator) -> Self {
        Self { k1, k2 }
    }

    pub fn k1(&self) -> &DenseOperator {
        &self.k1
    }

    pub fn k2(&self) -> &DenseOperator {
        &self.k2
    }

    /// Shape `(n1, n2)` of the unknown grid.
    pub fn grid_shape(&self) -> (usize, usize) {
        (self.k1.cols(), self.k2.cols())
    }

    /// Shape `(m1, m2)` of the data grid.
    pub fn data_shape(&self) -> (usize, usize) {
        (self.k1.rows(), self.k2.rows())
    }
}

impl LinearOperator for KroneckerOperator {
    fn rows(&self) -> usize {
        self.k1.rows() * self.k2.rows()
    }

    fn cols(&self) -> usize {
        self.k1.cols() * self.k2.cols()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("KroneckerOperator::apply", self.cols(), x.len())?;
        let (n1, n2) = self.grid_shape();
        let u = DMatrix::from_column_slice(n1, n2, x.as_slice());
        let y = self.k1.matrix() * u * self.k2.matrix().transpose();
        Ok(DVector::from_column_slice(y.as_slice()))
    }

    fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("KroneckerOperator::adjoint", self.rows(), y.len())?;
        let (m1, m2) = self.data_shape();
        let ym = DMatrix::from_column_slice(m1, m2, y.as_slice());
        let x = self.k1.matrix().tr_mul(&ym) * self.k2.matrix();
        Ok(DVector::from_column_slice(x.as_slice()))
    }

    fn materialize(&self) -> DMatrix<f64> {
        self.k2.matrix().kronecker(self.k1.matrix())
    }

    fn gram(&self) -> DMatrix<f64> {
        let g1 = self.k1.matrix().tr_mul(self.k1.matrix());
        let g2 = self.k2.matrix().tr_mul(self.k2.matrix());
        g2.kronecker(&g1)
    }
}

/// Forward operator of an [`InverseProblem`](crate::testproblems::InverseProblem).
#[derive(Debug, Clone, PartialEq)]
pub enum Operator {
    Dense(DenseOperator),
    Kronecker(KroneckerOperator),
}

impl Operator {
    pub fn is_square(&self) -> bool {
        self.rows() == self.cols()
    }
}

impl LinearOperator for Operator {
    fn rows(&self) -> usize {
        match self {
            Operator::Dense(a) => a.rows(),
            Operator::Kronecker(k) => k.rows(),
        }
    }

    fn cols(&self) -> usize {
        match self {
            Operator::Dense(a) => a.cols(),
            Operator::Kronecker(k) => k.cols(),
        }
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Operator::Dense(a) => a.apply(x),
            Operator::Kronecker(k) => k.apply(x),
        }
    }

    fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            Operator::Dense(a) => a.adjoint(y),
            Operator::Kronecker(k) => k.adjoint(y),
        }
    }

    fn materialize(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(a) => a.materialize(),
            Operator::Kronecker(k) => k.materialize(),
        }
    }

    fn gram(&self) -> DMatrix<f64> {
        match self {
            Operator::Dense(a) => a.gram(),
            Operator::Kronecker(k) => k.gram(),
        }
    }
}

impl From<DenseOperator> for Operator {
    fn from(a: DenseOperator) -> Self {
        Operator::Dense(a)
    }
}

impl From<KroneckerOperator> for Operator {
    fn from(k: KroneckerOperator) -> Self {
        Operator::Kronecker(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DifferenceOrder {
    /// `u[i-1] - 2 u[i] + u[i+1]`
    Second,
    /// `(u[i+1] - u[i-1]) / 2`
    First,
}

/// Periodic finite-difference stencil acting along one axis of a 1D signal
/// or a 2D grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DifferenceOperator {
    order: DifferenceOrder,
    n1: usize,
    n2: usize,
    axis: usize,
}

impl DifferenceOperator {
    /// Difference along `axis` (0 or 1) of an `n1 x n2` grid.
    pub fn on_grid(order: DifferenceOrder, n1: usize, n2: usize, axis: usize) -> Result<Self> {
        let along = match axis {
            0 => n1,
            1 => n2,
            _ => return Err(invalid("axis", format!("expected 0 or 1, got {axis}"))),
        };
        if along < 3 {
            return Err(invalid(
                "n",
                format!("periodic stencils need at least 3 points along the axis, got {along}"),
            ));
        }
        Ok(Self { order, n1, n2, axis })
    }

    pub fn order(&self) -> DifferenceOrder {
        self.order
    }

    pub fn size(&self) -> usize {
        self.n1 * self.n2
    }

    /// Nonzero entries `(column, coefficient)` of row `k`.
    pub(crate) fn stencil(&self, k: usize) -> [(usize, f64); 3] {
        let (prev, next) = self.neighbours(k);
        match self.order {
            DifferenceOrder::Second => [(prev, 1.0), (k, -2.0), (next, 1.0)],
            DifferenceOrder::First => [(prev, -0.5), (k, 0.0), (next, 0.5)],
        }
    }

    fn neighbours(&self, k: usize) -> (usize, usize) {
        let (i1, i2) = (k % self.n1, k / self.n1);
        if self.axis == 0 {
            let prev = (i1 + self.n1 - 1) % self.n1;
            let next = (i1 + 1) % self.n1;
            (prev + self.n1 * i2, next + self.n1 * i2)
        } else {
            let prev = (i2 + self.n2 - 1) % self.n2;
            let next = (i2 + 1) % self.n2;
            (i1 + self.n1 * prev, i1 + self.n1 * next)
        }
    }

    /// Stencil applied to a slice; used by the penalty code on hot paths.
    pub fn apply_slice(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let (prev, next) = self.neighbours(k);
            *o = match self.order {
                DifferenceOrder::Second => x[prev] - 2.0 * x[k] + x[next],
                DifferenceOrder::First => 0.5 * (x[next] - x[prev]),
            };
        }
    }

    fn adjoint_slice(&self, y: &[f64], out: &mut [f64]) {
        match self.order {
            // symmetric circulant
            DifferenceOrder::Second => self.apply_slice(y, out),
            DifferenceOrder::First => {
                self.apply_slice(y, out);
                out.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
}

impl LinearOperator for DifferenceOperator {
    fn rows(&self) -> usize {
        self.size()
    }

    fn cols(&self) -> usize {
        self.size()
    }

    fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("DifferenceOperator::apply", self.size(), x.len())?;
        let mut out = DVector::zeros(self.size());
        self.apply_slice(x.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        check_len("DifferenceOperator::adjoint", self.size(), y.len())?;
        let mut out = DVector::zeros(self.size());
        self.adjoint_slice(y.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    fn materialize(&self) -> DMatrix<f64> {
        let n = self.size();
        let mut m = DMatrix::zeros(n, n);
        for k in 0..n {
            for (j, c) in self.stencil(k) {
                m[(k, j)] += c;
            }
        }
        m
    }
}

/// Periodic second difference on a signal of length `n`: the circulant
/// with first row `(-2, 1, 0, ..., 0, 1)`.
pub fn build_second_diff(n: usize) -> Result<DifferenceOperator> {
    DifferenceOperator::on_grid(DifferenceOrder::Second, n, 1, 0)
}

/// Periodic central first difference on a signal of length `n`.
pub fn build_first_diff(n: usize) -> Result<DifferenceOperator> {
    DifferenceOperator::on_grid(DifferenceOrder::First, n, 1, 0)
}

/// Default truncation of the Gaussian kernel.
pub fn default_halfwidth(sigma: f64) -> usize {
    (4.0 * sigma).ceil() as usize
}

/// Square Gaussian blur. Each row holds the kernel centred on the diagonal,
/// normalised over the full (untruncated-at-edges) window; the part of the
/// window that falls off the signal is dropped.
pub fn build_gaussian_blur(n: usize, sigma: f64, kernel_halfwidth: usize) -> Result<DenseOperator> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(invalid("sigma", format!("must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(invalid("n", "must be positive"));
    }
    let h = kernel_halfwidth as isize;
    let weights: Vec<f64> = (-h..=h)
        .map(|k| (-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = weights.iter().sum();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..n as isize {
        for (offset, w) in (-h..=h).zip(&weights) {
            let j = i + offset;
            if (0..n as isize).contains(&j) {
                a[(i as usize, j as usize)] = w / total;
            }
        }
    }
    DenseOperator::new(a)
}

/// Midpoint discretisation of the inverse heat equation (a first-kind
/// Volterra problem on `[0, 1]`) with kernel
/// `t^{-3/2} / (2 kappa sqrt(pi)) * exp(-1 / (4 kappa^2 t))`, together with
/// the reference solution used by Regularization Tools' `heat`.
pub fn build_heat(n: usize, kappa: f64) -> Result<(DenseOperator, DVector<f64>)> {
    if n < 2 {
        return Err(invalid("n", format!("need n >= 2, got {n}")));
    }
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(invalid("kappa", format!("must be positive, got {kappa}")));
    }
    let h = 1.0 / n as f64;
    let c = h / (2.0 * kappa * PI.sqrt());
    let d = 1.0 / (4.0 * kappa * kappa);
    let column: Vec<f64> = (0..n)
        .map(|j| {
            let t = (j as f64 + 0.5) * h;
            c * t.powf(-1.5) * (-d / t).exp()
        })
        .collect();
    let a = DMatrix::from_fn(n, n, |i, j| if i >= j { column[i - j] } else { 0.0 });

    let mut x = DVector::zeros(n);
    for i in 1..=n / 2 {
        let ti = i as f64 * 20.0 / n as f64;
        x[i - 1] = if ti < 2.0 {
            0.75 * ti * ti / 4.0
        } else if ti < 3.0 {
            0.75 + (ti - 2.0) * (3.0 - ti)
        } else {
            0.75 * (-(ti - 3.0) * 2.0).exp()
        };
    }
    Ok((DenseOperator::new(a)?, x))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
    }

    fn assert_adjoint_consistent(op: &dyn LinearOperator, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = random_vec(&mut rng, op.cols());
            let y = random_vec(&mut rng, op.rows());
            let lhs = op.apply(&x).unwrap().dot(&y);
            let rhs = x.dot(&op.adjoint(&y).unwrap());
            let scale = lhs.abs().max(rhs.abs()).max(1e-300);
            assert!((lhs - rhs).abs() <= 1e-12 * scale.max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn identity_apply() {
        let id = DenseOperator::identity(3);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(id.apply(&x).unwrap(), x);
    }

    #[test]
    fn apply_rejects_wrong_length() {
        let id = DenseOperator::identity(3);
        let err = id.apply(&DVector::zeros(4)).unwrap_err();
        assert!(matches!(err, crate::Error::DimensionMismatch { .. }));
    }

    #[test]
    fn second_diff_examples() {
        let l = build_second_diff(4).unwrap();
        let lu = l.apply(&DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0])).unwrap();
        assert_eq!(lu.as_slice(), &[1.0, -2.0, 1.0, 0.0]);
        let lc = l.apply(&DVector::from_element(4, 5.0)).unwrap();
        assert!(lc.iter().all(|v| *v == 0.0));

        let l5 = build_second_diff(5).unwrap();
        let lu = l5.apply(&DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0])).unwrap();
        assert_eq!(lu.as_slice(), &[5.0, 0.0, 0.0, 0.0, -5.0]);
    }

    #[test]
    fn second_diff_first_row() {
        let m = build_second_diff(6).unwrap().materialize();
        assert_eq!(
            m.row(0).iter().copied().collect::<Vec<_>>(),
            vec![-2.0, 1.0, 0.0, 0.0, 0.0, 1.0]
        );
    }

    #[test]
    fn small_sizes_rejected() {
        assert!(build_second_diff(2).is_err());
        assert!(build_first_diff(2).is_err());
    }

    #[test]
    fn first_diff_annihilates_constants() {
        let p = build_first_diff(7).unwrap();
        assert!(p.apply(&DVector::from_element(7, -3.0)).unwrap().amax() == 0.0);
        let p2 = DifferenceOperator::on_grid(DifferenceOrder::First, 4, 5, 1).unwrap();
        assert!(p2.apply(&DVector::from_element(20, 2.5)).unwrap().amax() == 0.0);
    }

    #[test]
    fn kronecker_small_example_matches_materialized() {
        let k1 = DenseOperator::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0])).unwrap();
        let k2 = DenseOperator::new(DMatrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 4.0])).unwrap();
        let k = KroneckerOperator::new(k1, k2);
        let x = DVector::from_element(4, 1.0);
        // kron([[3,0],[0,4]], [[1,0],[0,2]]) = diag(3, 6, 4, 8)
        let expected = DVector::from_vec(vec![3.0, 6.0, 4.0, 8.0]);
        assert_eq!(k.apply(&x).unwrap(), expected);
        assert_eq!(&k.materialize() * &x, expected);
    }

    #[test]
    fn kronecker_identity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let k1 = DMatrix::from_fn(5, 4, |_, _| rng.random_range(-1.0..1.0));
            let k2 = DMatrix::from_fn(6, 4, |_, _| rng.random_range(-1.0..1.0));
            let u = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..1.0));
            let op = KroneckerOperator::new(
                DenseOperator::new(k1.clone()).unwrap(),
                DenseOperator::new(k2.clone()).unwrap(),
            );
            let x = DVector::from_column_slice(u.as_slice());
            let fast = op.apply(&x).unwrap();
            let direct = &op.materialize() * &x;
            let via_matrices = DVector::from_column_slice((&k1 * &u * k2.transpose()).as_slice());
            assert!((&fast - &direct).norm() <= 1e-12 * direct.norm());
            assert!((&fast - &via_matrices).norm() <= 1e-12 * direct.norm());
            let gram = op.gram();
            let dense = op.materialize();
            assert!((gram - dense.tr_mul(&dense)).amax() < 1e-12);
        }
    }

    #[test]
    fn adjoints_are_transposes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dense = DenseOperator::new(DMatrix::from_fn(7, 5, |_, _| rng.random_range(-1.0..1.0))).unwrap();
        assert_adjoint_consistent(&dense, 1);
        let kron = KroneckerOperator::new(
            DenseOperator::new(DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1.0..1.0))).unwrap(),
            DenseOperator::new(DMatrix::from_fn(5, 3, |_, _| rng.random_range(-1.0..1.0))).unwrap(),
        );
        assert_adjoint_consistent(&kron, 2);
        for order in [DifferenceOrder::First, DifferenceOrder::Second] {
            for axis in 0..2 {
                let d = DifferenceOperator::on_grid(order, 4, 5, axis).unwrap();
                assert_adjoint_consistent(&d, 3);
                let m = d.materialize();
                let x = random_vec(&mut rng, 20);
                assert!((d.apply(&x).unwrap() - &m * &x).amax() < 1e-14);
            }
        }
    }

    #[test]
    fn blur_limits_and_normalization() {
        let a = build_gaussian_blur(6, 0.3, 0).unwrap();
        assert_eq!(a.matrix(), &DMatrix::identity(6, 6));

        let sigma = 5.0;
        let hw = default_halfwidth(sigma);
        assert_eq!(hw, 20);
        let a = build_gaussian_blur(100, sigma, hw).unwrap();
        for i in hw..100 - hw {
            let s: f64 = a.matrix().row(i).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        // dropped mass at the edge
        assert!(a.matrix().row(0).sum() < 0.6);
        assert!(build_gaussian_blur(10, 0.0, 2).is_err());
    }

    #[test]
    fn heat_is_lower_triangular_with_early_peak() {
        let (a, x) = build_heat(100, 1.0).unwrap();
        let m = a.matrix();
        for i in 0..100 {
            for j in (i + 1)..100 {
                assert_eq!(m[(i, j)], 0.0);
            }
        }
        assert!(x.iter().all(|v| *v >= 0.0));
        assert!(x.imax() < 25);
        assert!(x.rows(50, 50).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn heat_data_matches_direct_quadrature() {
        // Independent route: evaluate the kernel at s_i - t_j directly.
        let n = 100;
        let kappa = 1.0;
        let (a, x) = build_heat(n, kappa).unwrap();
        let y = a.apply(&x).unwrap();
        let h = 1.0 / n as f64;
        let kernel = |t: f64| t.powf(-1.5) / (2.0 * kappa * PI.sqrt()) * (-1.0 / (4.0 * kappa * kappa * t)).exp();
        for i in 0..n {
            let s_i = (i as f64 + 0.5) * h;
            let mut acc = 0.0;
            for j in 0..=i {
                let t_j = j as f64 * h;
                acc += h * kernel(s_i - t_j) * x[j];
            }
            assert!((acc - y[i]).abs() <= 1e-12 * y.amax());
        }
        // monotone rise then decay
        let peak = y.imax();
        assert!(peak > 5 && peak < n - 5);
        for i in 1..=peak {
            assert!(y[i] >= y[i - 1] - 1e-15);
        }
        for i in (peak + 1)..n {
            assert!(y[i] <= y[i - 1] + 1e-15);
        }
    }
}
