//! Matrix exponent, Perron-Frobenius data, duality, Cramer numbers and tilting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::spec::{JumpAtom, LevyComponent, MapSpec, TransitionJump};
use crate::error::{Error, Result};
use crate::linalg::{leading_eigenvalue, leading_left_eigenvector};
use crate::roots::bisect_secant;
use crate::scalar::{lit, Scalar};

/// `F(z) = diag(psi_i(z)) + Q o G(z)`.
pub fn matrix_exponent<T: Scalar>(spec: &MapSpec<T>, z: T) -> DMatrix<T> {
    let n = spec.n_types;
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            spec.psi(i, z) + spec.q(i, i)
        } else {
            spec.q(i, j) * spec.g(i, j, z)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralData<T> {
    pub z: T,
    pub f_matrix: Vec<Vec<T>>,
    pub chi: T,
    pub w: Vec<T>,
}

pub fn spectral_data<T: Scalar>(spec: &MapSpec<T>, z: T) -> Result<SpectralData<T>> {
    let f = matrix_exponent(spec, z);
    let (chi, w) = leading_eigenvalue(&f, true)?;
    Ok(SpectralData {
        z,
        f_matrix: f.row_iter().map(|r| r.iter().copied().collect()).collect(),
        chi,
        w: w.iter().copied().collect(),
    })
}

/// Leading eigenvalue `chi(z)` of `F(z)`.
pub fn chi<T: Scalar>(spec: &MapSpec<T>, z: T) -> Result<T> {
    Ok(leading_eigenvalue(&matrix_exponent(spec, z), true)?.0)
}

/// `chi(z)` together with its eigenvector `w(z)`.
pub fn chi_w<T: Scalar>(spec: &MapSpec<T>, z: T) -> Result<(T, DVector<T>)> {
    leading_eigenvalue(&matrix_exponent(spec, z), true)
}

/// Central difference `chi'(z)` with step `h`.
pub fn chi_prime<T: Scalar>(spec: &MapSpec<T>, z: T, h: T) -> Result<T> {
    Ok((chi(spec, z + h)? - chi(spec, z - h)?) / (h + h))
}

/// Stationary law of the modulating chain.
pub fn stationary_distribution<T: Scalar>(spec: &MapSpec<T>) -> Result<DVector<T>> {
    let (_, p) = leading_left_eigenvector(&spec.q_dmatrix(), true)?;
    let s = p.sum();
    Ok(p / s)
}

/// Dual MAP: `q'_ij = pi_j q_ji / pi_i`, Levy parts negated, transition
/// `(i, j)` distributed as `-U_ji`.
pub fn dual_spec<T: Scalar>(spec: &MapSpec<T>) -> Result<MapSpec<T>> {
    let n = spec.n_types;
    let pi = stationary_distribution(spec)?;
    let neg = |atoms: &[JumpAtom<T>]| atoms.iter().map(|a| JumpAtom::new(-a.size, a.weight, a.type_mark)).collect::<Vec<_>>();
    let q: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { spec.q(i, i) } else { pi[j] * spec.q(j, i) / pi[i] }).collect())
        .collect();
    let mut q = q;
    for (i, row) in q.iter_mut().enumerate() {
        let s = (0..n).filter(|j| *j != i).fold(T::zero(), |a, j| a + row[j]);
        row[i] = -s;
    }
    Ok(MapSpec {
        n_types: n,
        q_matrix: q,
        levy: spec
            .levy
            .iter()
            .map(|l| LevyComponent { drift: -l.drift, gauss_var: l.gauss_var, kill_rate: l.kill_rate, atoms: neg(&l.atoms) })
            .collect(),
        trans: (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| if i == j { TransitionJump::default() } else { TransitionJump { atoms: neg(&spec.trans[j][i].atoms) } })
                    .collect()
            })
            .collect(),
    })
}

/// The MAP of `-xi`: same chain, every jump and drift negated.
pub fn negated_spec<T: Scalar>(spec: &MapSpec<T>) -> MapSpec<T> {
    let neg = |atoms: &[JumpAtom<T>]| atoms.iter().map(|a| JumpAtom::new(-a.size, a.weight, a.type_mark)).collect::<Vec<_>>();
    MapSpec {
        n_types: spec.n_types,
        q_matrix: spec.q_matrix.clone(),
        levy: spec
            .levy
            .iter()
            .map(|l| LevyComponent { drift: -l.drift, gauss_var: l.gauss_var, kill_rate: l.kill_rate, atoms: neg(&l.atoms) })
            .collect(),
        trans: spec.trans.iter().map(|row| row.iter().map(|u| TransitionJump { atoms: neg(&u.atoms) }).collect()).collect(),
    }
}

/// Positive root of `chi` inside `(lo, hi)`.
pub fn cramer_number<T: Scalar>(spec: &MapSpec<T>, lo: T, hi: T) -> Result<T> {
    if !(lo > T::zero()) {
        return Err(Error::InvalidArgument("Cramer bracket must exclude 0".into()));
    }
    let ftol = if T::solver_tol() < lit(1e-11) { lit(1e-12) } else { T::solver_tol() * lit(10.0) };
    bisect_secant(|q| chi(spec, q), lo, hi, ftol, T::solver_tol() * lit(1e-2), "chi")
}

/// Esscher tilt by `gamma`: a MAP with matrix exponent
/// `diag(w)^{-1} (F(gamma + z) - chi(gamma) I) diag(w)`.
pub fn tilt_spec<T: Scalar>(spec: &MapSpec<T>, gamma: T) -> Result<MapSpec<T>> {
    let n = spec.n_types;
    let (chi_g, w) = chi_w(spec, gamma)?;
    let mut q = vec![vec![T::zero(); n]; n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                q[i][j] = spec.q(i, j) * spec.g(i, j, gamma) * w[j] / w[i];
            }
        }
        let s = q[i].iter().fold(T::zero(), |a, b| a + *b);
        q[i][i] = -s;
    }
    let levy = spec
        .levy
        .iter()
        .enumerate()
        .map(|(i, l)| {
            // kill = chi - psi_i(gamma) - q_ii + q~_ii, which the eigen-equation forces to 0.
            let kill = chi_g - l.psi(gamma) - spec.q(i, i) + q[i][i];
            let scale = chi_g.abs().max(l.psi(gamma).abs()).max(spec.q(i, i).abs()).max(T::one());
            let kill = if kill.abs() <= scale * lit(1e-9) { T::zero() } else { kill.max(T::zero()) };
            LevyComponent {
                drift: l.drift + l.gauss_var * gamma,
                gauss_var: l.gauss_var,
                kill_rate: kill,
                atoms: l.atoms.iter().map(|a| JumpAtom::new(a.size, a.weight * (gamma * a.size).exp(), a.type_mark)).collect(),
            }
        })
        .collect();
    let trans = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return TransitionJump::default();
                    }
                    let g = spec.g(i, j, gamma);
                    TransitionJump {
                        atoms: spec.trans[i][j]
                            .atoms
                            .iter()
                            .map(|a| JumpAtom::new(a.size, a.weight * (gamma * a.size).exp() / g, a.type_mark))
                            .collect(),
                    }
                })
                .collect()
        })
        .collect();
    Ok(MapSpec { n_types: n, q_matrix: q, levy, trans })
}

/// `diag(w)^{-1} (F(gamma + z) - chi(gamma) I) diag(w)`, evaluated directly.
pub fn tilted_exponent<T: Scalar>(spec: &MapSpec<T>, gamma: T, z: T) -> Result<DMatrix<T>> {
    let (c, w) = chi_w(spec, gamma)?;
    let n = spec.n_types;
    let f = matrix_exponent(spec, gamma + z);
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let d = if i == j { c } else { T::zero() };
        (f[(i, j)] - d) * w[j] / w[i]
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn m2_matrix_exponent_by_hand() {
        let s = fixtures::m2();
        let f = matrix_exponent(&s, 1.0);
        let psi1 = 0.07 + 0.01 + 0.8 * (0.5 - 1.0) + 0.3 * (1.0 / 3.0 - 1.0);
        let psi2 = 0.12 + 1.0 * (0.5 - 1.0);
        let g12 = 0.5 * (-0.2f64).exp() + 0.5 * 0.1f64.exp();
        assert!((f[(0, 0)] - (psi1 - 1.0)).abs() < 1e-15);
        assert!((f[(1, 1)] - (psi2 - 2.0)).abs() < 1e-15);
        assert!((f[(0, 1)] - g12).abs() < 1e-15);
        assert!((f[(1, 0)] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn common_psi_gives_psi_plus_q() {
        let mut s = fixtures::m2();
        s.levy[1] = s.levy[0].clone();
        for i in 0..2 {
            for j in 0..2 {
                if i != j {
                    s.trans[i][j] = TransitionJump::zero_jump(j);
                }
            }
        }
        let (c, w) = chi_w(&s, 0.8).unwrap();
        assert!((c - s.psi(0, 0.8)).abs() < 1e-13);
        assert!((w[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stationary_m2() {
        let p = stationary_distribution(&fixtures::m2()).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-13 && (p[1] - 1.0 / 3.0).abs() < 1e-13);
    }

    #[test]
    fn dual_rates_m2() {
        let d = dual_spec(&fixtures::m2()).unwrap();
        // pi_2 q_21 / pi_1 = (1/3)(2)/(2/3) = 1.
        assert!((d.q(0, 1) - 1.0).abs() < 1e-13);
        assert!((d.q(1, 0) - 2.0).abs() < 1e-12);
        assert!((d.levy[0].drift + 0.07).abs() < 1e-15);
        assert!((d.trans[1][0].atoms[0].size - 0.2).abs() < 1e-15);
    }

    #[test]
    fn cramer_scalar_cases() {
        let s = fixtures::brownian(1.0, 1.0);
        assert!((cramer_number(&s, 0.5, 5.0).unwrap() - 2.0).abs() < 1e-10);
        let s = fixtures::brownian(1.5, 1.0);
        assert!((cramer_number(&s, 0.5, 5.0).unwrap() - 3.0).abs() < 1e-10);
        assert!(cramer_number(&s, 4.0, 5.0).is_err());
    }

    #[test]
    fn tilt_identity_for_brownian() {
        let s = fixtures::brownian(-0.3, 0.5);
        let t = tilt_spec(&s, 1.0).unwrap();
        assert!((t.levy[0].drift - 0.8).abs() < 1e-15);
        assert_eq!(t.levy[0].gauss_var, 0.5);
        let t0 = tilt_spec(&fixtures::m2(), 0.0).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((t0.q(i, j) - fixtures::m2().q(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn negation_reflects_the_exponent() {
        let s = fixtures::m2();
        let n = negated_spec(&s);
        for z in [-1.0, 0.3, 2.0] {
            let d = matrix_exponent(&n, z) - matrix_exponent(&s, -z);
            assert!(d.amax() < 1e-14);
        }
    }
}
