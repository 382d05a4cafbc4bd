//! Bracketed one-dimensional root finding.

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

/// Bisection safeguarded secant iteration on a sign-changing bracket.
///
/// Stops when `|f(x)| <= ftol` or the bracket is narrower than `xtol`.
pub fn bisect_secant<T, F>(mut f: F, lo: T, hi: T, ftol: T, xtol: T, what: &'static str) -> Result<T>
where
    T: Scalar,
    F: FnMut(T) -> Result<T>,
{
    let (mut a, mut b) = (lo, hi);
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == T::zero() {
        return Ok(a);
    }
    if fb == T::zero() {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot { what, lo: to_f64(lo), hi: to_f64(hi) });
    }
    let half = lit::<T>(0.5);
    for _ in 0..400 {
        let mut x = b - fb * (b - a) / (fb - fa);
        let width = (b - a).abs();
        let (l, r) = if a < b { (a, b) } else { (b, a) };
        if !x.is_finite() || x <= l + width * lit(1e-3) || x >= r - width * lit(1e-3) {
            x = (a + b) * half;
        }
        let fx = f(x)?;
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        // Alternate with a plain bisection when the secant stalls on one side.
        let m = (a + b) * half;
        let fm = f(m)?;
        if fm.abs() <= ftol {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
        if (b - a).abs() <= xtol {
            return Ok(if fa.abs() < fb.abs() { a } else { b });
        }
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let r = bisect_secant(|q: f64| Ok(q * q / 2.0 - q), 0.5, 5.0, 1e-14, 1e-15, "psi").unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn no_sign_change() {
        assert!(bisect_secant(|q: f64| Ok(q * q + 1.0), -1.0, 1.0, 1e-12, 1e-12, "f").is_err());
    }
}
