//! Monte Carlo Laplace matrix against the matrix-exponential oracle.

use nalgebra::DMatrix;

use super::sim::{sample_endpoint, Prepared};
use super::spec::MapSpec;
use super::spectral::{chi_w, matrix_exponent};
use crate::error::{Error, Result};
use crate::linalg::expm;
use crate::rng::{mix, replicate};
use crate::stats::{mean_se, MeanSe};

#[derive(Clone, Debug)]
pub struct LaplaceEstimate {
    pub mean: DMatrix<f64>,
    pub se: DMatrix<f64>,
    pub exact: DMatrix<f64>,
}

impl LaplaceEstimate {
    /// Largest `|mean - exact| / se` over entries (0/0 counts as 0).
    pub fn max_z(&self) -> f64 {
        let mut z: f64 = 0.0;
        for (k, m) in self.mean.iter().enumerate() {
            let d = (m - self.exact[k]).abs();
            let s = self.se[k];
            z = z.max(if s > 0.0 { d / s } else if d < 1e-12 { 0.0 } else { f64::INFINITY });
        }
        z
    }
}

/// Estimates `E_i[e^{z xi(t)}; Theta(t) = j]` with `reps` paths per start type.
pub fn empirical_laplace_matrix(spec: &MapSpec<f64>, z: f64, t: f64, reps: usize, seed: u64) -> Result<LaplaceEstimate> {
    if reps < 1000 {
        return Err(Error::InvalidArgument(format!("reps must be at least 1000, got {reps}")));
    }
    let prep = Prepared::new(spec)?;
    let n = spec.n_types;
    let mut mean = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for i in 0..n {
        let ends = replicate(mix(seed, i as u64), reps, |_, r| sample_endpoint(&prep, i, t, r));
        for j in 0..n {
            let xs: Vec<f64> = ends
                .iter()
                .map(|e| match e {
                    Some((x, k)) if *k == j => (z * x).exp(),
                    _ => 0.0,
                })
                .collect();
            let m = mean_se(&xs);
            mean[(i, j)] = m.mean;
            se[(i, j)] = m.se;
        }
    }
    let exact = expm(&(matrix_exponent(spec, z) * t));
    Ok(LaplaceEstimate { mean, se, exact })
}

/// Mean of `(w_{Theta(t)}(gamma) / w_i(gamma)) e^{gamma xi(t) - t chi(gamma)}`
/// over `reps` paths started from type `i` (killed paths contribute 0).
pub fn wald_martingale_mean(spec: &MapSpec<f64>, gamma: f64, t: f64, i: usize, reps: usize, seed: u64) -> Result<MeanSe> {
    if i >= spec.n_types {
        return Err(Error::InvalidArgument(format!("type {i} out of range")));
    }
    let prep = Prepared::new(spec)?;
    let (c, w) = chi_w(spec, gamma)?;
    let xs = replicate(seed, reps, |_, r| match sample_endpoint(&prep, i, t, r) {
        Some((x, j)) => w[j] / w[i] * (gamma * x - t * c).exp(),
        None => 0.0,
    });
    Ok(mean_se(&xs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn drift_only_is_exact() {
        let e = empirical_laplace_matrix(&fixtures::drift(0.4), 0.5, 2.0, 1000, 1).unwrap();
        assert!((e.mean[(0, 0)] - (0.4f64).exp()).abs() < 1e-12);
        assert!((e.exact[(0, 0)] - (0.4f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn wald_is_exact_for_drift() {
        let m = wald_martingale_mean(&fixtures::drift(0.4), 1.5, 2.0, 0, 10, 1).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_z_rows_are_probabilities() {
        let e = empirical_laplace_matrix(&fixtures::m2(), 0.0, 1.0, 2000, 2).unwrap();
        for i in 0..2 {
            assert!((e.mean.row(i).sum() - 1.0).abs() < 1e-12);
            assert!((e.exact.row(i).sum() - 1.0).abs() < 1e-12);
        }
    }
}
