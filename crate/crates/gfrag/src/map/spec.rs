//! Parametrisation of a finite-type Markov additive process.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{lit, to_f64, Scalar};

pub type TypeIndex = usize;

/// Atom of a finite jump measure. `weight` is a Poisson rate for Levy atoms
/// and a probability for transition atoms. `type_mark` is the type of the
/// child spawned by a negative jump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpAtom<T> {
    pub size: T,
    pub weight: T,
    pub type_mark: TypeIndex,
}

impl<T> JumpAtom<T> {
    pub fn new(size: T, weight: T, type_mark: TypeIndex) -> Self {
        Self { size, weight, type_mark }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + num_traits::Zero"))]
pub struct LevyComponent<T> {
    pub drift: T,
    pub gauss_var: T,
    #[serde(default = "zero")]
    pub kill_rate: T,
    #[serde(default)]
    pub atoms: Vec<JumpAtom<T>>,
}

fn zero<T: num_traits::Zero>() -> T {
    T::zero()
}

#[derive(Serialize, Deserialize)]
struct ProbAtom<T> {
    size: T,
    prob: T,
    type_mark: TypeIndex,
}

/// Law of the additional jump made when the modulating chain changes type.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionJump<T> {
    pub atoms: Vec<JumpAtom<T>>,
}

impl<T> Default for TransitionJump<T> {
    fn default() -> Self {
        Self { atoms: Vec::new() }
    }
}

impl<T: Serialize> Serialize for TransitionJump<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Out<'a, T> {
            atoms: Vec<ProbAtom<&'a T>>,
        }
        Out {
            atoms: self
                .atoms
                .iter()
                .map(|a| ProbAtom { size: &a.size, prob: &a.weight, type_mark: a.type_mark })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for TransitionJump<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct In<T> {
            #[serde(default = "Vec::new")]
            atoms: Vec<ProbAtom<T>>,
        }
        let i = In::<T>::deserialize(d)?;
        Ok(TransitionJump {
            atoms: i.atoms.into_iter().map(|a| JumpAtom { size: a.size, weight: a.prob, type_mark: a.type_mark }).collect(),
        })
    }
}

/// A MAP: intensity matrix, per-type Levy parts and transition jumps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(deserialize = "T: Deserialize<'de> + num_traits::Zero"))]
pub struct MapSpec<T> {
    pub n_types: usize,
    pub q_matrix: Vec<Vec<T>>,
    pub levy: Vec<LevyComponent<T>>,
    pub trans: Vec<Vec<TransitionJump<T>>>,
}

impl<T: Scalar> LevyComponent<T> {
    /// Laplace exponent `a q + s^2 q^2 / 2 + sum w (e^{q x} - 1) - kill`.
    pub fn psi(&self, q: T) -> T {
        let half = lit::<T>(0.5);
        let mut s = self.drift * q + half * self.gauss_var * q * q - self.kill_rate;
        for a in &self.atoms {
            s += a.weight * ((q * a.size).exp() - T::one());
        }
        s
    }

    pub fn total_rate(&self) -> T {
        self.atoms.iter().fold(T::zero(), |s, a| s + a.weight)
    }
}

impl<T: Scalar> TransitionJump<T> {
    /// Moment generating function `sum p e^{z x}`; 1 for an empty law.
    pub fn mgf(&self, z: T) -> T {
        if self.atoms.is_empty() {
            return T::one();
        }
        self.atoms.iter().fold(T::zero(), |s, a| s + a.weight * (z * a.size).exp())
    }

    pub fn zero_jump(mark: TypeIndex) -> Self {
        Self { atoms: vec![JumpAtom::new(T::zero(), T::one(), mark)] }
    }
}

impl<T: Scalar> MapSpec<T> {
    /// Builds a spec, filling `q_ii = -sum_{j != i} q_ij`.
    pub fn new(q_offdiag: Vec<Vec<T>>, levy: Vec<LevyComponent<T>>, trans: Vec<Vec<TransitionJump<T>>>) -> Self {
        let n = levy.len();
        let mut q = q_offdiag;
        for (i, row) in q.iter_mut().enumerate() {
            row[i] = T::zero();
            let s = row.iter().fold(T::zero(), |a, b| a + *b);
            row[i] = -s;
        }
        Self { n_types: n, q_matrix: q, levy, trans }
    }

    /// Single-type spec from one Levy component.
    pub fn single(levy: LevyComponent<T>) -> Self {
        Self { n_types: 1, q_matrix: vec![vec![T::zero()]], levy: vec![levy], trans: vec![vec![TransitionJump::default()]] }
    }

    pub fn q(&self, i: usize, j: usize) -> T {
        self.q_matrix[i][j]
    }

    pub fn q_dmatrix(&self) -> DMatrix<T> {
        let n = self.n_types;
        DMatrix::from_fn(n, n, |i, j| self.q_matrix[i][j])
    }

    pub fn psi(&self, i: usize, q: T) -> T {
        self.levy[i].psi(q)
    }

    /// `G_ij(z)`, with `G_ii = 1`.
    pub fn g(&self, i: usize, j: usize, z: T) -> T {
        if i == j {
            T::one()
        } else {
            self.trans[i][j].mgf(z)
        }
    }

    pub fn is_conservative(&self) -> bool {
        self.levy.iter().all(|l| l.kill_rate == T::zero())
    }

    /// Converts the parameters to another scalar type.
    pub fn cast<U: Scalar>(&self) -> MapSpec<U> {
        let c = |x: T| lit::<U>(to_f64(x));
        let atoms = |v: &Vec<JumpAtom<T>>| v.iter().map(|a| JumpAtom::new(c(a.size), c(a.weight), a.type_mark)).collect();
        MapSpec {
            n_types: self.n_types,
            q_matrix: self.q_matrix.iter().map(|r| r.iter().map(|x| c(*x)).collect()).collect(),
            levy: self
                .levy
                .iter()
                .map(|l| LevyComponent { drift: c(l.drift), gauss_var: c(l.gauss_var), kill_rate: c(l.kill_rate), atoms: atoms(&l.atoms) })
                .collect(),
            trans: self.trans.iter().map(|r| r.iter().map(|t| TransitionJump { atoms: atoms(&t.atoms) }).collect()).collect(),
        }
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_types;
        let bad = |m: String| Err(Error::InvalidSpec(m));
        if n == 0 {
            return bad("n_types must be at least 1".into());
        }
        if self.q_matrix.len() != n || self.q_matrix.iter().any(|r| r.len() != n) {
            return bad(format!("q_matrix must be {n}x{n}"));
        }
        if self.levy.len() != n {
            return bad(format!("expected {n} Levy components, got {}", self.levy.len()));
        }
        if self.trans.len() != n || self.trans.iter().any(|r| r.len() != n) {
            return bad(format!("trans must be {n}x{n}"));
        }
        let tol = T::solver_tol();
        for i in 0..n {
            let mut s = T::zero();
            let mut scale = T::one();
            for j in 0..n {
                let q = self.q_matrix[i][j];
                if !q.is_finite() {
                    return bad(format!("q[{i}][{j}] is not finite"));
                }
                if i != j && q < T::zero() {
                    return bad(format!("negative rate q[{i}][{j}] = {}", to_f64(q)));
                }
                s += q;
                scale = scale.max(q.abs());
            }
            if s.abs() > tol * scale {
                return bad(format!("row {i} of Q sums to {:e}, not 0", to_f64(s)));
            }
        }
        if !self.irreducible() {
            return bad("Q not irreducible".into());
        }
        for (i, l) in self.levy.iter().enumerate() {
            if !(l.gauss_var >= T::zero()) {
                return bad(format!("negative gauss_var for type {i}"));
            }
            if !(l.kill_rate >= T::zero()) {
                return bad(format!("negative kill_rate for type {i}"));
            }
            if !l.drift.is_finite() {
                return bad(format!("drift of type {i} is not finite"));
            }
            for a in &l.atoms {
                if !(a.weight >= T::zero()) || !a.weight.is_finite() {
                    return bad(format!("negative rate {} in Levy atoms of type {i}", to_f64(a.weight)));
                }
                if a.size == T::zero() || !a.size.is_finite() {
                    return bad(format!("Levy atom of type {i} has size {}", to_f64(a.size)));
                }
                if a.type_mark >= n {
                    return bad(format!("type mark {} out of range in type {i}", a.type_mark));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let t = &self.trans[i][j];
                for a in &t.atoms {
                    if !(a.weight >= T::zero()) {
                        return bad(format!("negative probability in transition ({i},{j})"));
                    }
                    if a.type_mark >= n {
                        return bad(format!("type mark {} out of range in transition ({i},{j})", a.type_mark));
                    }
                    if !a.size.is_finite() {
                        return bad(format!("transition ({i},{j}) has a non-finite size"));
                    }
                }
                if self.q_matrix[i][j] > T::zero() {
                    let s = t.atoms.iter().fold(T::zero(), |s, a| s + a.weight);
                    if (s - T::one()).abs() > T::solver_tol() {
                        return bad(format!("transition ({i},{j}) weights sum {}\u{2260}1", to_f64(s)));
                    }
                }
            }
        }
        Ok(())
    }

    fn irreducible(&self) -> bool {
        let n = self.n_types;
        (0..n).all(|start| {
            let mut seen = vec![false; n];
            let mut stack = vec![start];
            seen[start] = true;
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if !seen[j] && self.q_matrix[i][j] > T::zero() {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.iter().all(|s| *s)
        })
    }
}

pub fn validate_spec<T: Scalar>(spec: &MapSpec<T>) -> Result<()> {
    spec.validate()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(a: f64) -> LevyComponent<f64> {
        LevyComponent { drift: a, gauss_var: 1.0, kill_rate: 0.0, atoms: vec![] }
    }

    #[test]
    fn single_type_is_valid() {
        MapSpec::single(bm(0.3)).validate().unwrap();
    }

    #[test]
    fn absorbing_state_rejected() {
        let s = MapSpec::new(
            vec![vec![0.0, 1.0], vec![0.0, 0.0]],
            vec![bm(0.0), bm(0.0)],
            vec![vec![TransitionJump::default(), TransitionJump::zero_jump(1)], vec![TransitionJump::zero_jump(0), TransitionJump::default()]],
        );
        let e = s.validate().unwrap_err().to_string();
        assert!(e.contains("Q not irreducible"), "{e}");
    }

    #[test]
    fn unnormalised_transition_rejected() {
        let t = TransitionJump { atoms: vec![JumpAtom::new(-0.1, 0.5, 0), JumpAtom::new(0.2, 0.6, 1)] };
        let s = MapSpec::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![bm(0.0), bm(0.0)],
            vec![vec![TransitionJump::default(), t], vec![TransitionJump::zero_jump(0), TransitionJump::default()]],
        );
        let e = s.validate().unwrap_err().to_string();
        assert!(e.contains("sum 1.1"), "{e}");
    }

    #[test]
    fn json_round_trip_uses_prob_for_transitions() {
        let s = crate::fixtures::m2();
        let txt = serde_json::to_string(&s).unwrap();
        assert!(txt.contains("\"prob\""));
        let back: MapSpec<f64> = serde_json::from_str(&txt).unwrap();
        assert_eq!(back, s);
    }
}
