//! Small dense linear algebra: Perron-Frobenius eigenpairs and matrix exponentials.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

pub const MAX_POWER_ITERATIONS: usize = 100_000;

/// Leading eigenvalue and positive eigenvector (normalised so that `w[0] = 1`).
///
/// With `is_ml` the matrix is only required to have nonnegative off-diagonal
/// entries; it is shifted by `max|m_ii| + 1` before power iteration. Without it
/// the matrix itself must be entrywise nonnegative.
pub fn leading_eigenvalue<T: Scalar>(m: &DMatrix<T>, is_ml: bool) -> Result<(T, DVector<T>)> {
    let n = m.nrows();
    if n != m.ncols() || n == 0 {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}", n, m.ncols())));
    }
    if n == 1 {
        return Ok((m[(0, 0)], DVector::from_element(1, T::one())));
    }
    let shift = if is_ml {
        (0..n).map(|i| m[(i, i)].abs()).fold(T::zero(), |a, b| a.max(b)) + T::one()
    } else {
        T::zero()
    };
    let b = m + DMatrix::identity(n, n) * shift;
    let tol = T::solver_tol();

    let mut x = DVector::from_element(n, T::one() / lit::<T>(n as f64).sqrt());
    let mut rq_prev = T::zero();
    let mut converged = false;
    let mut change = f64::INFINITY;
    for it in 0..MAX_POWER_ITERATIONS {
        let y = &b * &x;
        let rq = x.dot(&y);
        let ny = y.norm();
        if ny == T::zero() {
            return Err(Error::NoConvergence { iters: it, change: 0.0 });
        }
        x = y / ny;
        if it > 0 {
            let d = (rq - rq_prev).abs();
            change = to_f64(d);
            if d <= tol * rq.abs().max(T::one()) {
                converged = true;
                break;
            }
        }
        rq_prev = rq;
    }
    if !converged {
        return Err(Error::NoConvergence { iters: MAX_POWER_ITERATIONS, change });
    }

    // Two steps of inverse iteration clean up slow power-iteration tails.
    let mut rq = x.dot(&(&b * &x));
    let scale = b.amax().max(T::one());
    for _ in 0..2 {
        let delta = scale * lit(1e-9);
        let a = &b - DMatrix::identity(n, n) * (rq + delta);
        match a.lu().solve(&x) {
            Some(y) if y.iter().all(|v| v.is_finite()) && y.norm() > T::zero() => {
                let ny = y.norm();
                let mut y = y / ny;
                if y.sum() < T::zero() {
                    y = -y;
                }
                x = y;
                rq = x.dot(&(&b * &x));
            }
            _ => break,
        }
    }

    if x.sum() < T::zero() {
        x = -x;
    }
    let floor = x.amax() * tol;
    if x.iter().any(|v| *v <= floor) {
        return Err(Error::InvalidArgument(
            "leading eigenvector is not strictly positive (reducible matrix?)".into(),
        ));
    }
    let w = &x / x[0];
    Ok((rq - shift, w))
}

/// Leading eigenvalue and positive left eigenvector.
pub fn leading_left_eigenvector<T: Scalar>(m: &DMatrix<T>, is_ml: bool) -> Result<(T, DVector<T>)> {
    leading_eigenvalue(&m.transpose(), is_ml)
}

/// Closed form of the larger eigenvalue of a real 2x2 matrix with real spectrum.
pub fn leading_eigenvalue_2x2(m: &DMatrix<f64>) -> f64 {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let tr = a + d;
    let disc = ((a - d) * (a - d) + 4.0 * b * c).max(0.0);
    0.5 * (tr + disc.sqrt())
}

/// Matrix exponential by scaling and squaring with a degree-13 Pade approximant.
pub fn expm<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    m.clone().exp()
}

/// Residual `max_i |(m w)_i - lambda w_i|`.
pub fn eigen_residual<T: Scalar>(m: &DMatrix<T>, lambda: T, w: &DVector<T>) -> T {
    (m * w - w * lambda).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_kernel() {
        let q = DMatrix::<f64>::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let (chi, w) = leading_eigenvalue(&q, true).unwrap();
        assert!(chi.abs() < 1e-14);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_characteristic_polynomial() {
        let m = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 2.0]);
        let (chi, w) = leading_eigenvalue(&m, false).unwrap();
        assert!((chi - 4.0).abs() < 1e-12);
        assert!((w[1] - 1.5).abs() < 1e-12);
        assert!((leading_eigenvalue_2x2(&m) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_generator() {
        let q = DMatrix::<f64>::from_row_slice(3, 3, &[-2.0, 1.0, 1.0, 0.5, -1.0, 0.5, 3.0, 0.0, -3.0]);
        let psi = -0.37;
        let f = &q + DMatrix::identity(3, 3) * psi;
        let (chi, w) = leading_eigenvalue(&f, true).unwrap();
        assert!((chi - psi).abs() < 1e-13);
        assert!(w.iter().all(|x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_precision() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0f32, 2.0, 3.0, 2.0]);
        let (chi, _) = leading_eigenvalue(&m, false).unwrap();
        assert!((chi - 4.0).abs() < 1e-5);
    }

    #[test]
    fn left_eigenvector_is_stationary_law() {
        let q = DMatrix::<f64>::from_row_slice(2, 2, &[-1.0, 1.0, 2.0, -2.0]);
        let (_, p) = leading_left_eigenvector(&q, true).unwrap();
        let p = &p / p.sum();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn expm_diagonal_and_nilpotent() {
        let d = DMatrix::<f64>::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -2.0]);
        let e = expm(&d);
        assert!((e[(0, 0)] - 1f64.exp()).abs() < 1e-14);
        assert!((e[(1, 1)] - (-2f64).exp()).abs() < 1e-15);
        let n = DMatrix::<f64>::from_row_slice(2, 2, &[0.0, 3.0, 0.0, 0.0]);
        let e = expm(&n);
        assert!((e[(0, 1)] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn reducible_is_rejected() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, -1.0]);
        assert!(leading_eigenvalue(&m, true).is_err());
    }
}
