//! Cumulant functions, admissible pairs and the spine exponent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::leading_eigenvalue;
use crate::map::{matrix_exponent, Event, JumpAtom, JumpKind, LevyComponent, MapSampler, MapSpec, Prepared, TransitionJump};
use crate::rng::{replicate, Rng};
use crate::roots::bisect_secant;
use crate::scalar::{lit, to_f64, Scalar};
use crate::stats::{mean_se, Kahan, MeanSe};

/// Atomic measures `Pi_{i,k}` of child-spawning jumps.
///
/// The `type_mark` of a stored atom is the type the parent carries after the
/// split (`i` for Levy atoms, `j` for atoms of `U_{i,j}`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PiMeasure<T> {
    pub n_types: usize,
    pub atoms: Vec<Vec<Vec<JumpAtom<T>>>>,
}

impl<T: Scalar> PiMeasure<T> {
    /// `int Pi_{i,k}(dx) (1 - e^x)^q`.
    pub fn integral(&self, i: usize, k: usize, q: T) -> T {
        self.atoms[i][k].iter().fold(T::zero(), |s, a| s + a.weight * (T::one() - a.size.exp()).powf(q))
    }

    pub fn mass(&self, i: usize, k: usize) -> T {
        self.atoms[i][k].iter().fold(T::zero(), |s, a| s + a.weight)
    }
}

pub fn pi_measure<T: Scalar>(spec: &MapSpec<T>) -> PiMeasure<T> {
    let n = spec.n_types;
    let mut atoms = vec![vec![Vec::new(); n]; n];
    for i in 0..n {
        for a in &spec.levy[i].atoms {
            if a.size < T::zero() && a.weight > T::zero() {
                atoms[i][a.type_mark].push(JumpAtom::new(a.size, a.weight, i));
            }
        }
        for j in 0..n {
            let q = spec.q(i, j);
            if i == j || q <= T::zero() {
                continue;
            }
            for a in &spec.trans[i][j].atoms {
                if a.size < T::zero() && a.weight > T::zero() {
                    atoms[i][a.type_mark].push(JumpAtom::new(a.size, q * a.weight, j));
                }
            }
        }
    }
    PiMeasure { n_types: n, atoms }
}

/// `kappa_i(q) = psi_i(q) + q_ii + int Pi_ii(dx) (1 - e^x)^q`.
pub fn kappa<T: Scalar>(spec: &MapSpec<T>, i: usize, q: T) -> T {
    let pi = pi_measure(spec);
    kappa_with(spec, &pi, i, q)
}

fn kappa_with<T: Scalar>(spec: &MapSpec<T>, pi: &PiMeasure<T>, i: usize, q: T) -> T {
    spec.psi(i, q) + spec.q(i, i) + pi.integral(i, i, q)
}

fn offdiag_with<T: Scalar>(spec: &MapSpec<T>, pi: &PiMeasure<T>, i: usize, j: usize, q: T) -> T {
    pi.integral(i, j, q) + spec.q(i, j) * spec.g(i, j, q)
}

/// `A(q)`: diagonal `kappa_i(q)`, off-diagonal `int Pi_ij (1-e^x)^q + q_ij G_ij(q)`.
pub fn cumulant_matrix<T: Scalar>(spec: &MapSpec<T>, q: T) -> DMatrix<T> {
    let pi = pi_measure(spec);
    cumulant_matrix_with(spec, &pi, q)
}

fn cumulant_matrix_with<T: Scalar>(spec: &MapSpec<T>, pi: &PiMeasure<T>, q: T) -> DMatrix<T> {
    let n = spec.n_types;
    DMatrix::from_fn(n, n, |i, j| if i == j { kappa_with(spec, pi, i, q) } else { offdiag_with(spec, pi, i, j, q) })
}

/// `K_i(q) = (A(q) v)_i / v_i`.
pub fn multitype_cumulant<T: Scalar>(spec: &MapSpec<T>, i: usize, q: T, v: &[T]) -> T {
    let a = cumulant_matrix(spec, q);
    (0..spec.n_types).fold(T::zero(), |s, j| s + a[(i, j)] * v[j]) / v[i]
}

/// Leading eigenvalue of `A(q)`.
pub fn lambda_tilde<T: Scalar>(spec: &MapSpec<T>, q: T) -> Result<T> {
    Ok(leading_eigenvalue(&cumulant_matrix(spec, q), true)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair<T> {
    pub omega: T,
    pub v: Vec<T>,
    pub residual: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    Both,
    Lower,
    Upper,
}

/// Roots found by [`find_admissible`]. `upper` is `None` when only one root
/// exists (no Cramer-type second exponent).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Admissible<T> {
    pub lower: Option<AdmissiblePair<T>>,
    pub upper: Option<AdmissiblePair<T>>,
}

impl<T: Scalar> Admissible<T> {
    pub fn minus(&self) -> Result<&AdmissiblePair<T>> {
        self.lower.as_ref().ok_or_else(|| Error::InvalidArgument("no lower admissible root".into()))
    }

    pub fn plus(&self) -> Result<&AdmissiblePair<T>> {
        self.upper.as_ref().ok_or_else(|| Error::InvalidArgument("Cramer-type condition unavailable: single admissible root".into()))
    }
}

fn pair_at<T: Scalar>(spec: &MapSpec<T>, pi: &PiMeasure<T>, omega: T) -> Result<AdmissiblePair<T>> {
    let a = cumulant_matrix_with(spec, pi, omega);
    let (_, v) = leading_eigenvalue(&a, true)?;
    let av = &a * &v;
    let residual = (0..spec.n_types).fold(T::zero(), |m, i| m.max((av[i] / v[i]).abs()));
    Ok(AdmissiblePair { omega, v: v.iter().copied().collect(), residual })
}

/// Roots of `q -> lambda~(q)` in `(lo, hi)`, located by scanning the
/// geometric grid `2^{-4}, 2^{-15/4}, ..., 2^5` (clipped to the bracket, with
/// the bracket ends added). A grid point where `lambda~` vanishes exactly is
/// itself a root.
pub fn find_admissible<T: Scalar>(spec: &MapSpec<T>, lo: T, hi: T, which: Which) -> Result<Admissible<T>> {
    if !(lo > T::zero() && hi > lo) {
        return Err(Error::InvalidArgument("search bracket must satisfy 0 < lo < hi".into()));
    }
    let pi = pi_measure(spec);
    let lam = |q: T| -> Result<T> { Ok(leading_eigenvalue(&cumulant_matrix_with(spec, &pi, q), true)?.0) };
    let mut grid = vec![lo];
    for k in -16..=20 {
        let g: T = lit(2f64.powf(k as f64 / 4.0));
        if g > lo && g < hi {
            grid.push(g);
        }
    }
    grid.push(hi);
    let vals: Vec<T> = grid.iter().map(|q| lam(*q)).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    let ftol = if T::solver_tol() < lit(1e-11) { lit(1e-13) } else { T::solver_tol() };
    let xtol = T::solver_tol() * lit(1e-3);
    for k in 0..grid.len() {
        if vals[k] == T::zero() && !roots.contains(&grid[k]) {
            roots.push(grid[k]);
        }
        if k + 1 < grid.len() && vals[k] != T::zero() && vals[k + 1] != T::zero() && vals[k].signum() != vals[k + 1].signum() {
            roots.push(bisect_secant(lam, grid[k], grid[k + 1], ftol, xtol, "lambda~")?);
        }
    }
    if roots.is_empty() {
        return Err(Error::NoRoot { what: "lambda~", lo: to_f64(lo), hi: to_f64(hi) });
    }
    if roots.len() > 2 {
        return Err(Error::TooManyRoots(roots.len()));
    }
    let lower = pair_at(spec, &pi, roots[0])?;
    let upper = if roots.len() == 2 { Some(pair_at(spec, &pi, roots[1])?) } else { None };
    Ok(match which {
        Which::Both => Admissible { lower: Some(lower), upper },
        Which::Lower => Admissible { lower: Some(lower), upper: None },
        Which::Upper => Admissible { lower: None, upper: upper.or(Some(lower)) },
    })
}

/// Matrix exponent of the spine: `F^(q)_ii = kappa_i(omega + q)` and
/// `F^(q)_ij = (v_j/v_i)(int Pi_ij (1-e^x)^{q+omega} + q_ij G_ij(q+omega))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpineExponent<T> {
    pub omega: T,
    pub v: Vec<T>,
    spec: MapSpec<T>,
    pi: PiMeasure<T>,
}

pub fn spine_exponent<T: Scalar>(spec: &MapSpec<T>, pair: &AdmissiblePair<T>) -> SpineExponent<T> {
    SpineExponent { omega: pair.omega, v: pair.v.clone(), spec: spec.clone(), pi: pi_measure(spec) }
}

impl<T: Scalar> SpineExponent<T> {
    pub fn eval(&self, q: T) -> DMatrix<T> {
        let n = self.spec.n_types;
        let w = self.omega + q;
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                kappa_with(&self.spec, &self.pi, i, w)
            } else {
                self.v[j] / self.v[i] * offdiag_with(&self.spec, &self.pi, i, j, w)
            }
        })
    }

    /// Leading eigenvalue `chi^(q)`.
    pub fn chi(&self, q: T) -> Result<T> {
        Ok(leading_eigenvalue(&self.eval(q), true)?.0)
    }

    pub fn chi_w(&self, q: T) -> Result<(T, DVector<T>)> {
        leading_eigenvalue(&self.eval(q), true)
    }

    /// Closed-form spine rates `q^_ij = (v_j/v_i)(q_ij G_ij(omega) + int Pi_ij (1-e^x)^omega)`.
    pub fn rate(&self, i: usize, j: usize) -> T {
        self.v[j] / self.v[i] * (self.spec.q(i, j) * self.spec.g(i, j, self.omega) + self.pi.integral(i, j, self.omega))
    }

    /// `mu_ii(omega) = -int Pi_ii (1-e^x)^omega / (q_ii + psi_i(omega))`.
    pub fn mu(&self, i: usize) -> T {
        -self.pi.integral(i, i, self.omega) / (self.spec.q(i, i) + self.spec.psi(i, self.omega))
    }

    /// The spine as a concrete MAP.
    ///
    /// The Levy part of type `i` is `psi_i` tilted by `omega` plus atoms at
    /// `log(1 - e^x)` with rates `Pi_ii(x) (1 - e^x)^omega` (the spine moves
    /// to a child of the same type). Type changes mix `U_ij` tilted by
    /// `omega` with atoms `log(1 - e^x)` of `Pi_ij`. Atom marks record the
    /// type of the sibling left behind.
    pub fn spine_spec(&self) -> MapSpec<T> {
        let s = &self.spec;
        let n = s.n_types;
        let w = self.omega;
        let one = T::one();
        let mut levy = Vec::with_capacity(n);
        for i in 0..n {
            let l = &s.levy[i];
            let mut atoms: Vec<JumpAtom<T>> =
                l.atoms.iter().map(|a| JumpAtom::new(a.size, a.weight * (w * a.size).exp(), a.type_mark)).collect();
            for a in &self.pi.atoms[i][i] {
                let y = (one - a.size.exp()).ln();
                atoms.push(JumpAtom::new(y, a.weight * (one - a.size.exp()).powf(w), a.type_mark));
            }
            // Conservative by construction; the residual of K_i(omega) is all that is left.
            let c = kappa_with(s, &self.pi, i, w) + (0..n).filter(|j| *j != i).fold(T::zero(), |acc, j| acc + self.rate(i, j));
            let kill = if c < T::zero() { -c } else { T::zero() };
            levy.push(LevyComponent { drift: l.drift + l.gauss_var * w, gauss_var: l.gauss_var, kill_rate: kill, atoms });
        }
        let mut q = vec![vec![T::zero(); n]; n];
        let mut trans = vec![vec![TransitionJump::default(); n]; n];
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let r = self.rate(i, j);
                q[i][j] = r;
                if r <= T::zero() {
                    continue;
                }
                let ratio = self.v[j] / self.v[i];
                let mut atoms = Vec::new();
                if s.q(i, j) > T::zero() {
                    for a in &s.trans[i][j].atoms {
                        atoms.push(JumpAtom::new(a.size, ratio * s.q(i, j) * a.weight * (w * a.size).exp() / r, a.type_mark));
                    }
                }
                for a in &self.pi.atoms[i][j] {
                    let y = (one - a.size.exp()).ln();
                    atoms.push(JumpAtom::new(y, ratio * a.weight * (one - a.size.exp()).powf(w) / r, a.type_mark));
                }
                let tot = atoms.iter().fold(T::zero(), |acc, a: &JumpAtom<T>| acc + a.weight);
                for a in atoms.iter_mut() {
                    a.weight /= tot;
                }
                trans[i][j] = TransitionJump { atoms };
            }
            let row = q[i].iter().fold(T::zero(), |a, b| a + *b);
            q[i][i] = -row;
        }
        MapSpec { n_types: n, q_matrix: q, levy, trans }
    }
}

/// `M(H) = sum_{s <= H} v_{J_s} |Delta X(s)|^omega + v_{J(H)} X(H)^omega`, with `H` the
/// first type change (or killing) of a cell started from `(1, i)`. The time
/// change is irrelevant for this functional, so the MAP is sampled directly.
pub fn stopped_martingale_sample(prep: &Prepared, pair: &AdmissiblePair<f64>, i: usize, rng: &mut Rng) -> f64 {
    let (w, v) = (pair.omega, &pair.v);
    let mut s = MapSampler::new(prep, i, 0.0);
    let mut acc = Kahan::default();
    loop {
        match s.step(f64::INFINITY, rng).1 {
            Event::Jump(j) => {
                let pre = s.value - j.size;
                if j.size < 0.0 {
                    acc.add(v[j.type_mark] * (pre.exp() * (1.0 - j.size.exp())).powf(w));
                }
                if j.kind == JumpKind::Transition {
                    acc.add(v[s.type_] * (w * s.value).exp());
                    return acc.value();
                }
            }
            Event::Killed => return acc.value(),
            Event::Horizon => unreachable!("infinite horizon"),
        }
    }
}

/// Monte Carlo estimate of `E_i[M(H)]`; equals `v_i` for an admissible pair.
pub fn stopped_martingale_mean(spec: &MapSpec<f64>, pair: &AdmissiblePair<f64>, i: usize, reps: usize, seed: u64) -> Result<MeanSe> {
    if spec.n_types < 2 {
        return Err(Error::InvalidArgument("first type change needs at least two types".into()));
    }
    let prep = Prepared::new(spec)?;
    let xs = replicate(seed, reps, |_, r| stopped_martingale_sample(&prep, pair, i, r));
    Ok(mean_se(&xs))
}

/// Matrix exponent of the materialised spine (for cross-checks).
pub fn spine_spec_exponent<T: Scalar>(se: &SpineExponent<T>, q: T) -> DMatrix<T> {
    matrix_exponent(&se.spine_spec(), q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn pi_without_transition_jumps() {
        let s = fixtures::binary_split();
        let p = pi_measure(&s);
        assert_eq!(p.atoms[0][0].len(), 1);
        assert!((p.atoms[0][0][0].weight - 1.0).abs() < 1e-15);
    }

    #[test]
    fn pi_m2_atoms() {
        let p = pi_measure(&fixtures::m2());
        // Type 1 keeps -log 2 at 0.8 and U_12's -0.2 at q_12 * 0.5 = 0.5.
        let w: Vec<f64> = p.atoms[0][0].iter().map(|a| a.weight).collect();
        assert_eq!(w, vec![0.8, 0.5]);
        assert_eq!(p.atoms[0][0][1].type_mark, 1);
        assert_eq!(p.atoms[0][1].len(), 1);
        assert!((p.atoms[0][1][0].weight - 0.3).abs() < 1e-15);
        assert_eq!(p.atoms[1][1].len(), 1);
        assert!(p.atoms[1][0].is_empty());
    }

    #[test]
    fn binary_split_kappa() {
        let s = fixtures::binary_split();
        for q in [0.5, 1.0, 2.0, 3.3] {
            assert!((kappa(&s, 0, q) - (2f64.powf(1.0 - q) - 1.0)).abs() < 1e-14);
        }
        assert_eq!(kappa(&s, 0, 1.0), 0.0);
        let a = find_admissible(&s, 0.05, 20.0, Which::Both).unwrap();
        assert_eq!(a.lower.as_ref().unwrap().omega, 1.0);
        assert_eq!(a.lower.as_ref().unwrap().v, vec![1.0]);
        assert!(a.upper.is_none());
    }

    #[test]
    fn kappa_at_zero_counts_pi_mass() {
        let s = fixtures::m2();
        let p = pi_measure(&s);
        let direct = s.psi(0, 0.0) + s.q(0, 0) + p.mass(0, 0);
        assert!((kappa(&s, 0, 0.0) - direct).abs() < 1e-15);
    }

    #[test]
    fn ratio_invariance() {
        let s = fixtures::m2();
        let v = [1.0, 0.7];
        let cv = [3.0, 2.1];
        for i in 0..2 {
            let a = multitype_cumulant(&s, i, 1.3, &v);
            let b = multitype_cumulant(&s, i, 1.3, &cv);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn single_child_has_no_root() {
        let s = MapSpec::single(LevyComponent { drift: 0.0, gauss_var: 0.0, kill_rate: 0.0, atoms: vec![JumpAtom::new(-0.5, 1.0, 0)] });
        // kappa(q) = e^{-q/2} - 1 + (1 - e^{-1/2})^q: positive near 0, negative later, one root.
        let a = find_admissible(&s, 0.05, 30.0, Which::Both).unwrap();
        assert!(a.upper.is_none());
    }

    #[test]
    fn f32_roots_follow_f64() {
        let s = fixtures::m2();
        let a = find_admissible(&s, 0.05, 20.0, Which::Both).unwrap();
        let b = find_admissible(&s.cast::<f32>(), 0.05, 20.0, Which::Both).unwrap();
        let d = (a.lower.unwrap().omega - b.lower.unwrap().omega as f64).abs();
        assert!(d < 1e-4, "{d}");
    }
}
