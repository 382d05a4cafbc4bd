//! Multitype smoothing transforms, random affine recursions and their tails.

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cellsystem::first_generation;
use crate::error::{Error, Result};
use crate::linalg::{leading_eigenvalue, leading_left_eigenvector};
use crate::map::{MapSpec, Prepared, TypeIndex};
use crate::rng::{mix, replicate, stream, Rng};
use crate::roots::bisect_secant;
use crate::stats::{mean_se, quantile, tail_exponent, Kahan, MeanSe, TailEstimate, DEFAULT_K_FRACS};

/// One offspring vector `(J_k, C_k)_k` with its probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffspringAtom {
    pub prob: f64,
    pub children: Vec<(TypeIndex, f64)>,
}

/// Law of the offspring vectors of each type.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum OffspringLaw {
    /// Finite list per type.
    Atomic(Vec<Vec<OffspringAtom>>),
    /// First generation of a unit cell run down to `min_size`, with
    /// `C = (child size)^omega`. Unsimulated children and the final
    /// remainder of the cell are ordinary offspring.
    CellBridge { spec: MapSpec<f64>, alpha: f64, omega: f64, min_size: f64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SmoothingSpec {
    pub n_types: usize,
    pub law: OffspringLaw,
    pub v: Vec<f64>,
}

/// Offspring vectors drawn once and resampled afterwards.
#[derive(Clone, Debug)]
pub struct OffspringBank {
    pub draws: Vec<Vec<Vec<(TypeIndex, f64)>>>,
}

impl SmoothingSpec {
    pub fn validate(&self) -> Result<()> {
        if self.v.len() != self.n_types || self.v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidSpec("v must be a positive vector of length n_types".into()));
        }
        if let OffspringLaw::Atomic(l) = &self.law {
            if l.len() != self.n_types {
                return Err(Error::InvalidSpec("one offspring law per type is required".into()));
            }
            for (i, atoms) in l.iter().enumerate() {
                let s: f64 = atoms.iter().map(|a| a.prob).sum();
                if (s - 1.0).abs() > 1e-12 || atoms.iter().any(|a| a.prob < 0.0) {
                    return Err(Error::InvalidSpec(format!("offspring law of type {i}: probabilities sum {s}≠1")));
                }
                for a in atoms {
                    if a.children.iter().any(|c| c.1 < 0.0 || c.0 >= self.n_types) {
                        return Err(Error::InvalidSpec(format!("offspring law of type {i}: bad child")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Draws `per_type` offspring vectors of each type.
    pub fn bank(&self, per_type: usize, seed: u64) -> Result<OffspringBank> {
        self.validate()?;
        let draws = match &self.law {
            OffspringLaw::Atomic(l) => (0..self.n_types)
                .map(|i| replicate(mix(seed, i as u64), per_type, |_, r| pick_atom(&l[i], r).children.clone()))
                .collect(),
            OffspringLaw::CellBridge { spec, alpha, omega, min_size } => {
                let prep = Prepared::new(spec)?;
                (0..self.n_types)
                    .map(|i| {
                        replicate(mix(seed, i as u64), per_type, |_, r| {
                            first_generation(&prep, 1.0, i, *alpha, *min_size, r).into_iter().map(|(s, j)| (j, s.powf(*omega))).collect()
                        })
                    })
                    .collect()
            }
        };
        Ok(OffspringBank { draws })
    }
}

fn pick_atom<'a>(atoms: &'a [OffspringAtom], r: &mut Rng) -> &'a OffspringAtom {
    let mut u = r.gen::<f64>();
    for a in atoms {
        if u < a.prob {
            return a;
        }
        u -= a.prob;
    }
    atoms.last().expect("non-empty law")
}

/// `m(q)` with per-entry standard errors (zero for atomic laws).
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    pub m: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

/// `m_ij(q) = E_i[sum_k C_k^q 1{J_k = j}]`.
pub fn weight_matrix(spec: &SmoothingSpec, q: f64, bank: Option<&OffspringBank>) -> Result<WeightMatrix> {
    spec.validate()?;
    let n = spec.n_types;
    match (&spec.law, bank) {
        (OffspringLaw::Atomic(l), _) => {
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                for a in &l[i] {
                    for (j, c) in &a.children {
                        if *c > 0.0 {
                            m[(i, *j)] += a.prob * c.powf(q);
                        }
                    }
                }
            }
            Ok(WeightMatrix { m, se: DMatrix::zeros(n, n) })
        }
        (OffspringLaw::CellBridge { .. }, Some(b)) => Ok(bank_matrix(b, n, q)),
        (OffspringLaw::CellBridge { .. }, None) => Err(Error::InvalidArgument("cell-bridge laws need an offspring bank".into())),
    }
}

fn bank_matrix(b: &OffspringBank, n: usize, q: f64) -> WeightMatrix {
    let mut m = DMatrix::zeros(n, n);
    let mut se = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let xs: Vec<f64> = b.draws[i].iter().map(|d| d.iter().filter(|c| c.0 == j && c.1 > 0.0).map(|c| c.1.powf(q)).sum()).collect();
            let ms = mean_se(&xs);
            m[(i, j)] = ms.mean;
            se[(i, j)] = ms.se;
        }
    }
    WeightMatrix { m, se }
}

/// Exponent with `rho(m(alpha)) = 1`, the eigenvector and condition (ii).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaReport {
    pub alpha: f64,
    pub v: Vec<f64>,
    /// `E_i[sum_k (v_{J_k}/v_i) C_k^alpha log C_k]` per type.
    pub condition_ii: Vec<f64>,
}

/// Root of `q -> rho(m(q)) - 1` in the bracket, scanning a geometric grid
/// first (the smallest root is returned when there are several).
pub fn find_alpha(spec: &SmoothingSpec, lo: f64, hi: f64, bank: Option<&OffspringBank>) -> Result<AlphaReport> {
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument("bracket must satisfy 0 < lo < hi".into()));
    }
    let lam = |q: f64| -> Result<f64> { Ok(leading_eigenvalue(&weight_matrix(spec, q, bank)?.m, true)?.0 - 1.0) };
    let mut grid = vec![lo];
    let mut g = lo;
    while g * 1.1 < hi {
        g *= 1.1;
        grid.push(g);
    }
    grid.push(hi);
    let vals: Vec<f64> = grid.iter().map(|q| lam(*q)).collect::<Result<_>>()?;
    let mut root = None;
    for k in 0..grid.len() {
        if vals[k].abs() < 1e-14 {
            root = Some(grid[k]);
            break;
        }
        if k + 1 < grid.len() && vals[k].signum() != vals[k + 1].signum() && vals[k + 1] != 0.0 {
            root = Some(bisect_secant(lam, grid[k], grid[k + 1], 1e-13, 1e-14, "rho(m(q)) - 1")?);
            break;
        }
    }
    let alpha = root.ok_or(Error::NoRoot { what: "rho(m(q)) = 1", lo, hi })?;
    let (_, w) = leading_eigenvalue(&weight_matrix(spec, alpha, bank)?.m, true)?;
    let v: Vec<f64> = w.iter().copied().collect();
    let n = spec.n_types;
    let mut cond = vec![0.0; n];
    let term = |kids: &[(TypeIndex, f64)], i: usize| -> f64 {
        kids.iter().filter(|c| c.1 > 0.0).map(|(j, c)| v[*j] / v[i] * c.powf(alpha) * c.ln()).sum()
    };
    match (&spec.law, bank) {
        (OffspringLaw::Atomic(l), _) => {
            for i in 0..n {
                cond[i] = l[i].iter().map(|a| a.prob * term(&a.children, i)).sum();
            }
        }
        (_, Some(b)) => {
            for i in 0..n {
                let xs: Vec<f64> = b.draws[i].iter().map(|d| term(d, i)).collect();
                cond[i] = mean_se(&xs).mean;
            }
        }
        _ => unreachable!("checked by weight_matrix"),
    }
    Ok(AlphaReport { alpha, v, condition_ii: cond })
}

/// Pools after population dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PopulationResult {
    /// Pools, each scaled to mean 1.
    pub pools: Vec<Vec<f64>>,
    /// Pool mean and standard error per iteration and type, before the
    /// pools are rescaled to mean 1.
    pub means: Vec<Vec<MeanSe>>,
    pub q90: Vec<Vec<f64>>,
    pub iterations: usize,
    pub stabilized: bool,
}

/// Iterates `R_i <- sum_k (v_{J_k}/v_i) C_k R_k` on pools of size
/// `pop_size`, starting from 1 and rescaling each pool to mean 1 after every
/// step, until every pre-scaling pool mean is within 3 SE of 1 and
/// its 0.9-quantile moves by less than 1% (after at least `min_iters`).
pub fn population_dynamics(spec: &SmoothingSpec, bank: &OffspringBank, pop_size: usize, min_iters: usize, iterations: usize, seed: u64) -> Result<PopulationResult> {
    spec.validate()?;
    if pop_size < 2 {
        return Err(Error::InvalidArgument("pop_size must be at least 2".into()));
    }
    let n = spec.n_types;
    let v = &spec.v;
    let mut pools = vec![vec![1.0; pop_size]; n];
    let mut means = Vec::new();
    let mut q90s = Vec::new();
    let mut prev_q = vec![f64::NAN; n];
    let mut stabilized = false;
    let mut it = 0;
    while it < iterations {
        let next: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let bank_i = &bank.draws[i];
                let pools = &pools;
                (0..pop_size)
                    .into_par_iter()
                    .map(|k| {
                        let mut r = stream(mix(seed, (it * n + i) as u64), k as u64);
                        let kids = &bank_i[r.gen_range(0..bank_i.len())];
                        let mut acc = Kahan::default();
                        for (j, c) in kids {
                            let x = pools[*j][r.gen_range(0..pop_size)];
                            acc.add(v[*j] / v[i] * c * x);
                        }
                        acc.value()
                    })
                    .collect()
            })
            .collect();
        pools = next;
        it += 1;
        let m: Vec<MeanSe> = pools.iter().map(|p| mean_se(p)).collect();
        // A finite bank has rho(m(1)) slightly off 1, which would make the
        // pool means drift geometrically; the fixed point has mean 1.
        for (p, s) in pools.iter_mut().zip(&m) {
            if s.mean > 0.0 {
                p.iter_mut().for_each(|x| *x /= s.mean);
            }
        }
        let q: Vec<f64> = pools.iter().map(|p| quantile(p, 0.9)).collect();
        let ok = it >= min_iters
            && m.iter().all(|s| s.z(1.0).abs() < 3.0)
            && q.iter().zip(&prev_q).all(|(a, b)| ((a - b) / b).abs() < 0.01);
        means.push(m);
        prev_q.clone_from(&q);
        q90s.push(q);
        if ok {
            stabilized = true;
            break;
        }
    }
    Ok(PopulationResult { pools, means, q90: q90s, iterations: it, stabilized })
}

/// `(prob, A, B, J)` atoms per type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineAtom {
    pub prob: f64,
    pub a: f64,
    pub b: f64,
    pub next_type: TypeIndex,
}

/// `R_i = (v_J / v_i) A R_J + B`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSpec {
    pub n_types: usize,
    pub atoms: Vec<Vec<AffineAtom>>,
    pub v: Vec<f64>,
}

impl AffineSpec {
    pub fn validate(&self) -> Result<()> {
        if self.atoms.len() != self.n_types || self.v.len() != self.n_types || self.v.iter().any(|x| !(*x > 0.0)) {
            return Err(Error::InvalidSpec("affine spec dimensions".into()));
        }
        for (i, l) in self.atoms.iter().enumerate() {
            let s: f64 = l.iter().map(|a| a.prob).sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("affine law of type {i}: probabilities sum {s}≠1")));
            }
            if l.iter().any(|a| a.a < 0.0 || a.b < 0.0 || a.prob < 0.0 || a.next_type >= self.n_types) {
                return Err(Error::InvalidSpec(format!("affine law of type {i}: negative entry or bad type")));
            }
        }
        Ok(())
    }

    /// Stationary law of the type chain and `E_pi[log((v_J/v_i) A)]`.
    pub fn contraction(&self) -> Result<f64> {
        let n = self.n_types;
        let mut p = DMatrix::zeros(n, n);
        for i in 0..n {
            for a in &self.atoms[i] {
                p[(i, a.next_type)] += a.prob;
            }
            p[(i, i)] -= 1.0;
        }
        let pi = if n == 1 { nalgebra::DVector::from_element(1, 1.0) } else { leading_left_eigenvector(&p, true)?.1 };
        let s: f64 = pi.iter().sum();
        let mut e = 0.0;
        for i in 0..n {
            for a in &self.atoms[i] {
                if a.prob > 0.0 {
                    e += pi[i] / s * a.prob * (self.v[a.next_type] / self.v[i] * a.a).ln();
                }
            }
        }
        Ok(e)
    }

    /// `E_i[((v_J/v_i) A)^beta]` matrix; its spectral radius below 1 gives
    /// finite `beta`-moments.
    pub fn moment_matrix(&self, beta: f64) -> DMatrix<f64> {
        let n = self.n_types;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for a in &self.atoms[i] {
                if a.a > 0.0 {
                    m[(i, a.next_type)] += a.prob * (self.v[a.next_type] / self.v[i] * a.a).powf(beta);
                }
            }
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineSample {
    pub value: f64,
    pub type_: TypeIndex,
    pub terms: usize,
    /// Expected size of the discarded tail of the series.
    pub remainder: f64,
}

/// Truncated series `sum_k A_1 ... A_k B_{k+1}` per start type.
///
/// With `n_terms = None` each sample is extended until the expected
/// remainder `prod * E_J[R]` is below `1e-6` times the partial sum; this
/// needs a finite mean.
pub fn affine_fixed_point(spec: &AffineSpec, n_terms: Option<usize>, start_type: TypeIndex, reps: usize, seed: u64) -> Result<Vec<AffineSample>> {
    spec.validate()?;
    let c = spec.contraction()?;
    if !(c < 0.0) {
        return Err(Error::Divergent(format!("contraction exponent {c:.4} is not negative")));
    }
    let n = spec.n_types;
    let mean = match n_terms {
        Some(_) => None,
        None => {
            let m = spec.moment_matrix(1.0);
            let (rho, _) = leading_eigenvalue(&m, true)?;
            if !(rho < 1.0) {
                return Err(Error::InvalidArgument("adaptive truncation needs a finite mean; pass n_terms".into()));
            }
            let b = nalgebra::DVector::from_iterator(n, (0..n).map(|i| spec.atoms[i].iter().map(|a| a.prob * a.b).sum::<f64>()));
            let ima = DMatrix::<f64>::identity(n, n) - m;
            Some(ima.lu().solve(&b).ok_or_else(|| Error::InvalidArgument("singular I - M".into()))?)
        }
    };
    let v = &spec.v;
    Ok(replicate(seed, reps, |_, r| {
        let mut prod = 1.0;
        let mut ty = start_type;
        let mut acc = Kahan::default();
        let mut k = 0;
        loop {
            let mut u = r.gen::<f64>();
            let atoms = &spec.atoms[ty];
            let mut at = &atoms[atoms.len() - 1];
            for a in atoms {
                if u < a.prob {
                    at = a;
                    break;
                }
                u -= a.prob;
            }
            acc.add(prod * at.b);
            prod *= v[at.next_type] / v[ty] * at.a;
            ty = at.next_type;
            k += 1;
            match (n_terms, &mean) {
                (Some(nt), _) if k >= nt => return AffineSample { value: acc.value(), type_: start_type, terms: k, remainder: f64::NAN },
                (None, Some(mu)) => {
                    let rem = prod * mu[ty];
                    if rem <= 1e-6 * acc.value() || prod == 0.0 {
                        return AffineSample { value: acc.value(), type_: start_type, terms: k, remainder: rem };
                    }
                }
                _ => {}
            }
        }
    }))
}

/// Minkowski/subadditivity bound on `E[R^beta]` for a single type.
pub fn affine_moment_bound(spec: &AffineSpec, beta: f64) -> Result<f64> {
    if spec.n_types != 1 {
        return Err(Error::InvalidArgument("moment bound implemented for one type".into()));
    }
    let ea: f64 = spec.atoms[0].iter().map(|a| a.prob * a.a.powf(beta)).sum();
    let eb: f64 = spec.atoms[0].iter().map(|a| a.prob * a.b.powf(beta)).sum();
    if !(ea < 1.0) {
        return Ok(f64::INFINITY);
    }
    Ok(if beta <= 1.0 { eb / (1.0 - ea) } else { (eb.powf(1.0 / beta) / (1.0 - ea.powf(1.0 / beta))).powf(beta) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailStatus {
    Pass,
    Fail,
    /// Empirical tail clearly lighter than predicted.
    DegenerateSuspected,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    pub expected: f64,
    /// Estimate at the primary fraction (1%).
    pub primary: TailEstimate,
    pub sensitivity: Vec<TailEstimate>,
    pub n_exceed: usize,
    pub status: TailStatus,
}

pub const MIN_TAIL_SAMPLES: usize = 100_000;

/// Hill and rank-regression exponents against a predicted value. Passes
/// when the prediction lies in the bootstrap interval and within 15% of the
/// point estimate.
pub fn tail_verify(samples: &[f64], alpha_expected: f64, min_samples: usize, seed: u64) -> Result<TailReport> {
    let mut r = stream(seed, 0);
    let pos: Vec<f64> = samples.iter().copied().filter(|x| *x > 0.0).collect();
    let est = tail_exponent(&pos, &DEFAULT_K_FRACS, 500, min_samples, &mut r)?;
    let primary = est.iter().find(|e| e.k_frac == 0.01).cloned().unwrap_or_else(|| est[0].clone());
    let n_exceed = (primary.k_frac * pos.len() as f64).round() as usize;
    if n_exceed < 20 {
        return Err(Error::TooFewSamples { need: 20, got: n_exceed });
    }
    let within = (primary.estimate - alpha_expected).abs() <= 0.15 * alpha_expected;
    let in_ci = primary.ci_lo <= alpha_expected && alpha_expected <= primary.ci_hi;
    let status = if within && in_ci {
        TailStatus::Pass
    } else if primary.ci_lo > alpha_expected && primary.estimate > 1.15 * alpha_expected {
        TailStatus::DegenerateSuspected
    } else {
        TailStatus::Fail
    };
    Ok(TailReport { expected: alpha_expected, primary, sensitivity: est, n_exceed, status })
}

/// Single-type affine recursion with `A` uniform on `{0.5, sqrt(1.75)}` and
/// `B = 1`: `E[A^2] = 1`, so the tail exponent is 2.
pub fn kesten_fixture() -> AffineSpec {
    AffineSpec {
        n_types: 1,
        atoms: vec![vec![
            AffineAtom { prob: 0.5, a: 0.5, b: 1.0, next_type: 0 },
            AffineAtom { prob: 0.5, a: 1.75f64.sqrt(), b: 1.0, next_type: 0 },
        ]],
        v: vec![1.0],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atomic(children: Vec<f64>) -> SmoothingSpec {
        SmoothingSpec {
            n_types: 1,
            law: OffspringLaw::Atomic(vec![vec![OffspringAtom { prob: 1.0, children: children.into_iter().map(|c| (0, c)).collect() }]]),
            v: vec![1.0],
        }
    }

    #[test]
    fn binary_weight_matrix_and_alpha() {
        let s = atomic(vec![0.5, 0.5]);
        for q in [0.5, 1.0, 2.0] {
            let m = weight_matrix(&s, q, None).unwrap().m[(0, 0)];
            assert!((m - 2.0 * 2f64.powf(-q)).abs() < 1e-15);
        }
        let a = find_alpha(&s, 0.2, 5.0, None).unwrap();
        assert!((a.alpha - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_child_has_no_alpha() {
        let s = atomic(vec![0.7]);
        assert!((weight_matrix(&s, 2.0, None).unwrap().m[(0, 0)] - 0.49).abs() < 1e-15);
        assert!(matches!(find_alpha(&s, 0.2, 5.0, None), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn condition_ii_exact_sum() {
        // C in {0.3, 0.9} at probability 1/2 each, two children.
        let s = SmoothingSpec {
            n_types: 1,
            law: OffspringLaw::Atomic(vec![vec![
                OffspringAtom { prob: 0.5, children: vec![(0, 0.3), (0, 0.9)] },
                OffspringAtom { prob: 0.5, children: vec![(0, 0.6), (0, 0.6)] },
            ]]),
            v: vec![1.0],
        };
        let a = find_alpha(&s, 1.01, 10.0, None).unwrap();
        let al = a.alpha;
        let m = 0.5 * (0.3f64.powf(al) + 0.9f64.powf(al)) + 0.6f64.powf(al);
        assert!((m - 1.0).abs() < 1e-10);
        let c = 0.5 * (0.3f64.powf(al) * 0.3f64.ln() + 0.9f64.powf(al) * 0.9f64.ln()) + 0.6f64.powf(al) * 0.6f64.ln();
        assert!((a.condition_ii[0] - c).abs() < 1e-12);
    }

    #[test]
    fn deterministic_conservative_pools_collapse() {
        let s = atomic(vec![0.25, 0.75]);
        let b = s.bank(10, 1).unwrap();
        let p = population_dynamics(&s, &b, 1000, 3, 10, 2).unwrap();
        assert!(p.pools[0].iter().all(|x| (x - 1.0).abs() < 1e-12));
        assert!(p.stabilized);
    }

    #[test]
    fn affine_trivial_cases() {
        let zero = AffineSpec { n_types: 1, atoms: vec![vec![AffineAtom { prob: 1.0, a: 0.0, b: 2.5, next_type: 0 }]], v: vec![1.0] };
        let s = affine_fixed_point(&zero, None, 0, 10, 1).unwrap();
        assert!(s.iter().all(|x| x.value == 2.5));
        let geo = AffineSpec { n_types: 1, atoms: vec![vec![AffineAtom { prob: 1.0, a: 0.6, b: 2.0, next_type: 0 }]], v: vec![1.0] };
        let s = affine_fixed_point(&geo, None, 0, 5, 1).unwrap();
        for x in s {
            assert!((x.value - 5.0).abs() < 1e-5 * 5.0);
        }
    }

    #[test]
    fn kesten_moment_matrix() {
        let k = kesten_fixture();
        assert!((k.moment_matrix(2.0)[(0, 0)] - 1.0).abs() < 1e-15);
        assert!(k.contraction().unwrap() < 0.0);
        assert!(affine_moment_bound(&k, 2.0).unwrap().is_infinite());
    }
}
