//! Shipped parameter sets.

use rand::Rng as _;

use crate::map::{JumpAtom, LevyComponent, MapSpec, TransitionJump};
use crate::rng::Rng;

fn lc(drift: f64, gauss_var: f64, atoms: Vec<(f64, f64, usize)>) -> LevyComponent<f64> {
    LevyComponent {
        drift,
        gauss_var,
        kill_rate: 0.0,
        atoms: atoms.into_iter().map(|(s, w, k)| JumpAtom::new(s, w, k)).collect(),
    }
}

/// Two-type reference fixture.
pub fn m2() -> MapSpec<f64> {
    let ln2 = 2f64.ln();
    let ln3 = 3f64.ln();
    MapSpec::new(
        vec![vec![0.0, 1.0], vec![2.0, 0.0]],
        vec![
            lc(0.07, 0.02, vec![(-ln2, 0.8, 0), (-ln3, 0.3, 1)]),
            lc(0.12, 0.0, vec![(-ln2, 1.0, 1)]),
        ],
        vec![
            vec![
                TransitionJump::default(),
                TransitionJump { atoms: vec![JumpAtom::new(-0.2, 0.5, 0), JumpAtom::new(0.1, 0.5, 1)] },
            ],
            vec![TransitionJump::zero_jump(0), TransitionJump::default()],
        ],
    )
}

/// One type, binary conservative split at rate 1: `kappa(q) = 2^{1-q} - 1`.
pub fn binary_split() -> MapSpec<f64> {
    MapSpec::single(lc(0.0, 0.0, vec![(-2f64.ln(), 1.0, 0)]))
}

/// Binary split with an upward drift `a`.
pub fn drifted_split(a: f64) -> MapSpec<f64> {
    MapSpec::single(lc(a, 0.0, vec![(-2f64.ln(), 1.0, 0)]))
}

/// Brownian motion with drift `-mu` (Dufresne setting).
pub fn brownian(mu: f64, var: f64) -> MapSpec<f64> {
    MapSpec::single(lc(-mu, var, vec![]))
}

/// Pure drift.
pub fn drift(a: f64) -> MapSpec<f64> {
    MapSpec::single(lc(a, 0.0, vec![]))
}

/// Two-type fixture with upward mean drift and no Gaussian part, used for
/// entrance-law checks.
pub fn e2() -> MapSpec<f64> {
    MapSpec::new(
        vec![vec![0.0, 1.5], vec![1.0, 0.0]],
        vec![
            lc(0.9, 0.0, vec![(-2f64.ln(), 0.6, 0), (0.15, 0.5, 1)]),
            lc(0.4, 0.0, vec![(-0.7, 0.5, 0)]),
        ],
        vec![
            vec![TransitionJump::default(), TransitionJump { atoms: vec![JumpAtom::new(-0.3, 0.6, 0), JumpAtom::new(0.2, 0.4, 1)] }],
            vec![TransitionJump { atoms: vec![JumpAtom::new(0.1, 1.0, 1)] }, TransitionJump::default()],
        ],
    )
}

/// Random valid spec with `n` types, a dense generator and a few atoms.
pub fn random_spec(n: usize, rng: &mut Rng) -> MapSpec<f64> {
    let mut q = vec![vec![0.0; n]; n];
    for (i, row) in q.iter_mut().enumerate() {
        for (j, x) in row.iter_mut().enumerate() {
            if i != j {
                *x = rng.gen_range(0.2..2.0);
            }
        }
    }
    let levy = (0..n)
        .map(|_| {
            let m = rng.gen_range(1..4);
            let atoms = (0..m)
                .map(|_| {
                    let s = if rng.gen_bool(0.7) { -rng.gen_range(0.05..1.5) } else { rng.gen_range(0.05..0.8) };
                    (s, rng.gen_range(0.1..1.2), rng.gen_range(0..n))
                })
                .collect();
            lc(rng.gen_range(-0.5..0.5), if rng.gen_bool(0.5) { rng.gen_range(0.0..0.3) } else { 0.0 }, atoms)
        })
        .collect();
    let trans = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        return TransitionJump::default();
                    }
                    let m = rng.gen_range(1..3);
                    let raw: Vec<(f64, f64, usize)> =
                        (0..m).map(|_| (rng.gen_range(-0.6..0.4), rng.gen_range(0.2..1.0), rng.gen_range(0..n))).collect();
                    let tot: f64 = raw.iter().map(|a| a.1).sum();
                    let mut atoms: Vec<JumpAtom<f64>> = raw.iter().map(|a| JumpAtom::new(a.0, a.1 / tot, a.2)).collect();
                    let s: f64 = atoms.iter().map(|a| a.weight).sum();
                    atoms[0].weight += 1.0 - s;
                    TransitionJump { atoms }
                })
                .collect()
        })
        .collect();
    MapSpec::new(q, levy, trans)
}

/// Uneven binary split: the parent keeps a tenth, drift 0.09. Its cumulant
/// `kappa(q) = 0.09 q + 0.1^q - 1 + 0.9^q` vanishes exactly at 2 and 3.
pub fn uneven_split() -> MapSpec<f64> {
    MapSpec::single(lc(0.09, 0.0, vec![(-(10f64.ln()), 1.0, 0)]))
}
