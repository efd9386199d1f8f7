//! Small dense helpers shared by the solvers and the oracles.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// On failure the returned error names the smallest pivot met by an
/// unblocked left-looking pass, which is what callers report to users.
pub fn cholesky(h: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let diagnostic = h.clone();
    match Cholesky::new(h) {
        Some(c) if c.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) => Ok(c),
        _ => {
            let (smallest_pivot, row) = smallest_pivot(&diagnostic);
            Err(Error::Factorization { smallest_pivot, row })
        }
    }
}

/// Runs the Cholesky recurrence to completion, clamping nothing, and returns
/// the smallest squared pivot `d_k = h_kk - sum_j l_kj^2` with its row.
pub fn smallest_pivot(h: &DMatrix<f64>) -> (f64, usize) {
    let n = h.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut best = (f64::INFINITY, 0);
    for k in 0..n {
        let mut d = h[(k, k)];
        for j in 0..k {
            d -= l[(k, j)] * l[(k, j)];
        }
        if d < best.0 || d.is_nan() {
            best = (d, k);
        }
        let root = if d > 0.0 { d.sqrt() } else { f64::NAN };
        l[(k, k)] = root;
        for i in (k + 1)..n {
            let mut s = h[(i, k)];
            for j in 0..k {
                s -= l[(i, j)] * l[(k, j)];
            }
            l[(i, k)] = s / root;
        }
        if root.is_nan() {
            break;
        }
    }
    best
}

/// Solves `h x = rhs` for symmetric positive-definite `h`.
pub fn spd_solve(h: DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(cholesky(h)?.solve(rhs))
}

/// `max |a_ij - b_ij| / max |b_ij|`.
pub fn relative_max_deviation(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = b.amax().max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

pub fn relative_deviation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let scale = b.norm().max(f64::MIN_POSITIVE);
    (a - b).norm() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let rhs = DVector::from_vec(vec![1.0, 2.0]);
        let x = spd_solve(h.clone(), &rhs).unwrap();
        assert!(((&h * &x) - rhs).norm() < 1e-14);
    }

    #[test]
    fn indefinite_matrix_reports_negative_pivot() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky(h) {
            Err(Error::Factorization { smallest_pivot, row }) => {
                assert_eq!(row, 1);
                assert!((smallest_pivot + 3.0).abs() < 1e-12);
            }
            other => panic!("expected factorization error, got {other:?}"),
        }
    }
}
