//! Cell systems of self-similar growth-fragmentations with types.

use std::collections::VecDeque;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cumulants::{spine_exponent, AdmissiblePair};
use crate::error::{Error, Result};
use crate::lamperti::{entrance_law_sample, simulate_ssmp, EndReason, SsmpPath, State, StopRule, CLOCK_TOL};
use crate::map::{negated_spec, MapSpec, Prepared, TypeIndex};
use crate::rng::{from_key, mix, replicate, Rng};
use crate::stats::{mean_se, Kahan, MeanSe};

/// Truncation policy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimControls {
    /// Deepest simulated generation (the Eve cell is generation 0).
    pub max_generation: usize,
    /// Children below this size are not simulated, and cells stop once
    /// smaller than it.
    pub min_size: f64,
    /// Real-time horizon (may be infinite).
    pub horizon: f64,
}

impl SimControls {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_size > 0.0) {
            return Err(Error::InvalidArgument("min_size must be positive".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidArgument("horizon must be positive".into()));
        }
        Ok(())
    }
}

/// Ulam label; the Eve cell has the empty label.
pub type Label = Vec<u32>;

pub fn format_label(l: &Label) -> String {
    if l.is_empty() {
        "0".into()
    } else {
        l.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(".")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub label: Label,
    pub parent: Option<usize>,
    pub birth_time: f64,
    pub initial_size: f64,
    pub birth_type: TypeIndex,
    pub generation: usize,
    pub path: SsmpPath,
    /// `zeta_u`, infinite unless the cell was killed.
    pub lifetime: f64,
    /// Indices of simulated children in label order.
    pub children: Vec<usize>,
    /// Sizes of all children, simulated or not, in label order with the
    /// index of the cell when simulated.
    pub offspring: Vec<Offspring>,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Offspring {
    pub birth_time: f64,
    pub size: f64,
    pub type_: TypeIndex,
    pub cell: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TruncKind {
    /// A child that was not simulated.
    Child,
    /// The rest of a cell whose path was stopped (size floor or horizon).
    Remainder,
}

/// Discarded mass. Under the martingale change of measure an item of size
/// `s` and type `j` stands for an expected contribution `v_j s^omega` to
/// every later generation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    /// Generation the item would have founded.
    pub generation: usize,
    /// Birth time of the child or stopping time of the remainder.
    pub time: f64,
    pub size: f64,
    pub type_: TypeIndex,
    pub parent: usize,
    pub kind: TruncKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellTree {
    pub root_size: f64,
    pub root_type: TypeIndex,
    pub alpha: f64,
    pub controls: SimControls,
    pub cells: Vec<CellRecord>,
    pub truncated: Vec<Truncated>,
}

/// Simulation options besides the truncation policy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TreeOptions {
    pub clock_tol: f64,
    /// Hard cap on simulated cells per tree.
    pub max_cells: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { clock_tol: CLOCK_TOL, max_cells: 2_000_000 }
    }
}

fn stop_rule(controls: &SimControls, birth: f64, clock_tol: f64) -> StopRule {
    StopRule { horizon: controls.horizon - birth, min_size: controls.min_size, map_horizon: f64::INFINITY, clock_tol }
}

/// Breadth-first simulation of the cell system from `(x, i)`.
pub fn simulate_tree(spec: &MapSpec<f64>, x: f64, i: TypeIndex, alpha: f64, controls: &SimControls, rng: &mut Rng) -> Result<CellTree> {
    controls.validate()?;
    let prep = Prepared::new(spec)?;
    Ok(simulate_tree_prepared(&prep, x, i, alpha, controls, &TreeOptions::default(), rng.gen()))
}

/// Queued cell: label, parent, birth time, size, type, generation, seed key.
type Pending = (Label, Option<usize>, f64, f64, TypeIndex, usize, u64);

pub fn simulate_tree_prepared(prep: &Prepared, x: f64, i: TypeIndex, alpha: f64, controls: &SimControls, opts: &TreeOptions, seed: u64) -> CellTree {
    let mut tree = CellTree { root_size: x, root_type: i, alpha, controls: *controls, cells: Vec::new(), truncated: Vec::new() };
    if x < controls.min_size {
        tree.truncated.push(Truncated { generation: 0, time: 0.0, size: x, type_: i, parent: usize::MAX, kind: TruncKind::Child });
        return tree;
    }
    let mut queue: VecDeque<Pending> = VecDeque::new();
    queue.push_back((Vec::new(), None, 0.0, x, i, 0, seed));
    while let Some((label, parent, birth, size, type_, gen, key)) = queue.pop_front() {
        let idx = tree.cells.len();
        let mut r = from_key(key);
        let path = simulate_ssmp(prep, size, type_, alpha, &stop_rule(controls, birth, opts.clock_tol), &mut r);
        let mut kids: Vec<(f64, f64, TypeIndex, u64)> = path
            .jumps()
            .iter()
            .filter(|j| j.post < j.pre)
            .map(|j| (j.child_size(), birth + j.time, j.type_mark, 0))
            .collect();
        // Descending size, ties by birth time then by a seeded hash.
        for (k, c) in kids.iter_mut().enumerate() {
            c.3 = mix(key, k as u64 + 1);
        }
        kids.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.3.cmp(&b.3)));
        if matches!(path.end, EndReason::Small | EndReason::Horizon) {
            let (xe, je) = path.end_state();
            let t_end = if path.end == EndReason::Horizon { controls.horizon } else { birth + path.end_time() };
            tree.truncated.push(Truncated { generation: gen + 1, time: t_end, size: xe, type_: je, parent: idx, kind: TruncKind::Remainder });
        }
        let mut offspring = Vec::with_capacity(kids.len());
        for (rank, (s, b, k, _)) in kids.iter().enumerate() {
            let simulate = *s >= controls.min_size && gen < controls.max_generation && tree.cells.len() + queue.len() < opts.max_cells;
            if simulate {
                let mut l = label.clone();
                l.push(rank as u32 + 1);
                // Index is assigned when dequeued; breadth-first order makes it predictable.
                let child_idx = tree.cells.len() + queue.len() + 1;
                offspring.push(Offspring { birth_time: *b, size: *s, type_: *k, cell: Some(child_idx) });
                queue.push_back((l, Some(idx), *b, *s, *k, gen + 1, mix(key, rank as u64 + 1)));
            } else {
                offspring.push(Offspring { birth_time: *b, size: *s, type_: *k, cell: None });
                tree.truncated.push(Truncated { generation: gen + 1, time: *b, size: *s, type_: *k, parent: idx, kind: TruncKind::Child });
            }
        }
        let lifetime = path.lifetime;
        tree.cells.push(CellRecord {
            label,
            parent,
            birth_time: birth,
            initial_size: size,
            birth_type: type_,
            generation: gen,
            path,
            lifetime,
            children: offspring.iter().filter_map(|o| o.cell).collect(),
            offspring,
            seed: key,
        });
        if let Some(p) = parent {
            debug_assert!(tree.cells[p].children.contains(&idx));
        }
    }
    tree
}

/// `M(n)` split into its exact part (generation `n+1` cells and unsimulated
/// children) and the expected remainder of stopped items of earlier generations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenealogicalValue {
    pub exact: f64,
    pub remainder: f64,
}

impl GenealogicalValue {
    pub fn total(&self) -> f64 {
        self.exact + self.remainder
    }
}

/// `M(n) = sum_{|u| = n+1} v_{J_u(0)} X_u(0)^omega`.
pub fn genealogical_martingale(tree: &CellTree, omega: f64, v: &[f64], n: usize) -> Result<GenealogicalValue> {
    if n > tree.controls.max_generation {
        return Err(Error::InvalidArgument(format!("generation {n} beyond max_generation {}", tree.controls.max_generation)));
    }
    let g = n + 1;
    let mut exact = Kahan::default();
    let mut rem = Kahan::default();
    for c in tree.cells.iter().filter(|c| c.generation == g) {
        exact.add(v[c.birth_type] * c.initial_size.powf(omega));
    }
    for t in &tree.truncated {
        if t.generation == g && t.kind == TruncKind::Child {
            exact.add(v[t.type_] * t.size.powf(omega));
        } else if t.generation <= g {
            rem.add(v[t.type_] * t.size.powf(omega));
        }
    }
    Ok(GenealogicalValue { exact: exact.value(), remainder: rem.value() })
}

/// Sum over every discarded item; the terminal value of the genealogical
/// martingale once the tree has been run to exhaustion.
pub fn terminal_value(tree: &CellTree, omega: f64, v: &[f64]) -> f64 {
    let mut k = Kahan::default();
    for t in &tree.truncated {
        k.add(v[t.type_] * t.size.powf(omega));
    }
    k.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub size: f64,
    pub type_: TypeIndex,
    pub generation: usize,
    pub cell: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    /// Descending size.
    pub particles: Vec<Particle>,
    /// Items discarded before `time` (children born and remainders stopped).
    pub ledger: Vec<Truncated>,
}

/// Particles alive at time `t`.
pub fn snapshot(tree: &CellTree, t: f64) -> Result<Snapshot> {
    if t > tree.controls.horizon {
        return Err(Error::InvalidArgument(format!("t = {t} beyond horizon {}", tree.controls.horizon)));
    }
    let mut particles = Vec::new();
    for (k, c) in tree.cells.iter().enumerate() {
        if c.birth_time > t {
            continue;
        }
        let local = t - c.birth_time;
        if local >= c.lifetime {
            continue;
        }
        // Paths stopped early (size floor) are not followed past their end;
        // paths cut at the horizon cover all of it.
        if c.path.end != EndReason::Horizon && (local > c.path.end_time() || (local == c.path.end_time() && local > 0.0)) {
            continue;
        }
        match c.path.state_at(local) {
            Ok(State::Alive { size, type_ }) => particles.push(Particle { size, type_, generation: c.generation, cell: k }),
            Ok(State::Cemetery) | Err(_) => {}
        }
    }
    particles.sort_by(|a, b| b.size.total_cmp(&a.size).then(a.cell.cmp(&b.cell)));
    // A cell cut at the horizon is still a live particle, not discarded mass.
    let cut = |x: &Truncated| x.kind == TruncKind::Remainder && tree.cells[x.parent].path.end == EndReason::Horizon;
    let ledger = tree.truncated.iter().filter(|x| x.time <= t && !cut(x)).copied().collect();
    Ok(Snapshot { time: t, particles, ledger })
}

/// `M_t = sum v_{J} X^omega` over the snapshot, with the ledger of discarded
/// mass reported separately.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalValue {
    pub exact: f64,
    pub ledger: f64,
}

impl TemporalValue {
    pub fn total(&self) -> f64 {
        self.exact + self.ledger
    }
}

pub fn temporal_martingale(snap: &Snapshot, omega: f64, v: &[f64]) -> TemporalValue {
    let mut e = Kahan::default();
    for p in &snap.particles {
        e.add(v[p.type_] * p.size.powf(omega));
    }
    let mut l = Kahan::default();
    for x in &snap.ledger {
        l.add(v[x.type_] * x.size.powf(omega));
    }
    TemporalValue { exact: e.value(), ledger: l.value() }
}

/// `<rho_t, f> = sum v_J X^omega f(t^{-1/alpha} X, J)` over the snapshot.
pub fn empirical_measure(snap: &Snapshot, alpha: f64, omega: f64, v: &[f64], f: impl Fn(f64, TypeIndex) -> f64) -> Result<f64> {
    if alpha == 0.0 {
        return Err(Error::InvalidArgument("empirical measure needs alpha != 0".into()));
    }
    let sc = snap.time.powf(-1.0 / alpha);
    let mut k = Kahan::default();
    for p in &snap.particles {
        k.add(v[p.type_] * p.size.powf(omega) * f(sc * p.size, p.type_));
    }
    Ok(k.value())
}

/// One tree's terminal martingale value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSample {
    /// Exact part plus remainder at the deepest generation.
    pub value: f64,
    pub remainder: f64,
    pub cells: usize,
}

/// Terminal values of the genealogical martingale over independent trees.
pub fn martingale_limit_samples(
    spec: &MapSpec<f64>,
    x: f64,
    i: TypeIndex,
    alpha: f64,
    pair: &AdmissiblePair<f64>,
    controls: &SimControls,
    reps: usize,
    seed: u64,
) -> Result<Vec<LimitSample>> {
    controls.validate()?;
    let prep = Prepared::new(spec)?;
    let opts = TreeOptions::default();
    Ok(replicate(seed, reps, |_, r| {
        let tree = simulate_tree_prepared(&prep, x, i, alpha, controls, &opts, r.gen());
        let n = controls.max_generation;
        let g = genealogical_martingale(&tree, pair.omega, &pair.v, n).expect("n within range");
        LimitSample { value: g.total(), remainder: g.remainder, cells: tree.cells.len() }
    }))
}

/// Children of a single cell run to the size floor: `(size, type)` pairs
/// including the final remainder of the cell itself.
pub fn first_generation(prep: &Prepared, x: f64, i: TypeIndex, alpha: f64, min_size: f64, rng: &mut Rng) -> Vec<(f64, TypeIndex)> {
    let controls = SimControls { max_generation: 0, min_size, horizon: f64::INFINITY };
    let tree = simulate_tree_prepared(prep, x, i, alpha, &controls, &TreeOptions::default(), rng.gen());
    tree.truncated.iter().map(|t| (t.size, t.type_)).collect()
}

/// Mean of `M_t` at one time, split into simulated particles and ledger.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalPoint {
    pub t: f64,
    pub exact: MeanSe,
    pub ledger: MeanSe,
}

/// `E[M_t]` over trees simulated up to the largest of `times`.
pub fn temporal_means(
    spec: &MapSpec<f64>,
    x: f64,
    i: TypeIndex,
    alpha: f64,
    pair: &AdmissiblePair<f64>,
    controls: &SimControls,
    times: &[f64],
    reps: usize,
    seed: u64,
) -> Result<Vec<TemporalPoint>> {
    let horizon = times.iter().copied().fold(0.0, f64::max);
    let controls = SimControls { horizon, ..*controls };
    controls.validate()?;
    let prep = Prepared::new(spec)?;
    let opts = TreeOptions::default();
    let per_tree: Vec<Vec<TemporalValue>> = replicate(seed, reps, |_, r| {
        let tree = simulate_tree_prepared(&prep, x, i, alpha, &controls, &opts, r.gen());
        times.iter().map(|t| temporal_martingale(&snapshot(&tree, *t).expect("t within horizon"), pair.omega, &pair.v)).collect()
    });
    Ok(times
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let e: Vec<f64> = per_tree.iter().map(|v| v[k].exact).collect();
            let l: Vec<f64> = per_tree.iter().map(|v| v[k].ledger).collect();
            TemporalPoint { t: *t, exact: mean_se(&e), ledger: mean_se(&l) }
        })
        .collect())
}

/// One tree's `<rho_t, .>` next to its terminal martingale value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPair {
    pub limit: f64,
    pub mass: f64,
    pub ledger: f64,
    /// `<rho_t, 1{J = j}>` over simulated particles.
    pub type_mass: Vec<f64>,
}

/// Trees run to the size floor with no time horizon; each yields
/// `<rho_t, 1>` and its type marginals at `t` and the terminal value.
pub fn empirical_pairs(
    spec: &MapSpec<f64>,
    x: f64,
    i: TypeIndex,
    alpha: f64,
    pair: &AdmissiblePair<f64>,
    controls: &SimControls,
    t: f64,
    reps: usize,
    seed: u64,
) -> Result<Vec<EmpiricalPair>> {
    let controls = SimControls { horizon: f64::INFINITY, ..*controls };
    controls.validate()?;
    let prep = Prepared::new(spec)?;
    let opts = TreeOptions::default();
    let n = spec.n_types;
    Ok(replicate(seed, reps, |_, r| {
        let tree = simulate_tree_prepared(&prep, x, i, alpha, &controls, &opts, r.gen());
        let snap = snapshot(&tree, t).expect("infinite horizon");
        let m = temporal_martingale(&snap, pair.omega, &pair.v);
        let type_mass = (0..n)
            .map(|j| empirical_measure(&snap, alpha, pair.omega, &pair.v, |_, k| if k == j { 1.0 } else { 0.0 }).expect("alpha != 0"))
            .collect();
        EmpiricalPair { limit: terminal_value(&tree, pair.omega, &pair.v), mass: m.exact, ledger: m.ledger, type_mass }
    }))
}

/// Type marginal of the limit `rho` for `alpha < 0`: the spine's rescaled
/// reciprocal `1 / X` is self-similar with index `-alpha`, so `rho` is read
/// off its entrance law from 0.
pub fn rho_type_marginal(spec: &MapSpec<f64>, pair: &AdmissiblePair<f64>, alpha: f64, reps: usize, seed: u64) -> Result<Vec<f64>> {
    if !(alpha < 0.0) {
        return Err(Error::InvalidArgument("the limit measure needs alpha < 0".into()));
    }
    let sp = negated_spec(&spine_exponent(spec, pair).spine_spec());
    let eta = entrance_law_sample(&sp, -alpha, 1.0, reps, seed)?;
    let tot: f64 = eta.iter().map(|e| e.weight).sum();
    Ok((0..spec.n_types).map(|j| eta.iter().filter(|e| e.type_ == j).map(|e| e.weight).sum::<f64>() / tot).collect())
}

impl CellTree {
    pub fn generation_counts(&self) -> Vec<usize> {
        let g = self.cells.iter().map(|c| c.generation).max().map_or(0, |g| g + 1);
        let mut out = vec![0; g];
        for c in &self.cells {
            out[c.generation] += 1;
        }
        out
    }

    pub fn find(&self, label: &Label) -> Option<usize> {
        self.cells.iter().position(|c| &c.label == label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rng::stream;

    fn ctl(g: usize, m: f64, h: f64) -> SimControls {
        SimControls { max_generation: g, min_size: m, horizon: h }
    }

    #[test]
    fn generation_zero_is_eve_alone() {
        let t = simulate_tree(&fixtures::m2(), 1.0, 0, 0.5, &ctl(0, 1e-3, 5.0), &mut stream(1, 0)).unwrap();
        assert_eq!(t.cells.len(), 1);
        assert!(t.cells[0].label.is_empty());
    }

    #[test]
    fn binary_split_halves() {
        let t = simulate_tree(&fixtures::binary_split(), 1.0, 0, 0.0, &ctl(4, 1e-3, 3.0), &mut stream(2, 0)).unwrap();
        for c in &t.cells {
            for j in c.path.jumps() {
                assert!((j.child_size() - j.pre / 2.0).abs() < 1e-15 * j.pre);
            }
        }
    }

    #[test]
    fn conservation_and_labels() {
        let t = simulate_tree(&fixtures::m2(), 1.0, 0, -0.5, &ctl(3, 1e-2, 4.0), &mut stream(3, 0)).unwrap();
        assert!(t.cells.len() > 3);
        for (k, c) in t.cells.iter().enumerate() {
            for j in c.path.jumps() {
                if j.post < j.pre {
                    assert_eq!(j.post + j.child_size(), j.pre);
                }
            }
            let sizes: Vec<f64> = c.offspring.iter().map(|o| o.size).collect();
            assert!(sizes.windows(2).all(|w| w[0] >= w[1]));
            for (r, o) in c.offspring.iter().enumerate() {
                if let Some(ch) = o.cell {
                    let child = &t.cells[ch];
                    assert_eq!(child.parent, Some(k));
                    assert_eq!(child.label.last().copied(), Some(r as u32 + 1));
                    assert_eq!(child.initial_size, o.size);
                    assert_eq!(child.birth_time, o.birth_time);
                }
            }
        }
    }

    #[test]
    fn conservative_binary_mass() {
        // omega = 1, v = 1 and no horizon: every tree carries mass exactly x.
        let pair = AdmissiblePair { omega: 1.0, v: vec![1.0], residual: 0.0 };
        let s = martingale_limit_samples(&fixtures::binary_split(), 1.0, 0, 0.0, &pair, &ctl(30, 1e-2, f64::INFINITY), 20, 4).unwrap();
        for x in s {
            assert!((x.value - 1.0).abs() < 1e-12, "{}", x.value);
        }
    }

    #[test]
    fn snapshot_at_zero_and_split() {
        let t = simulate_tree(&fixtures::binary_split(), 2.0, 0, 0.0, &ctl(5, 1e-3, 3.0), &mut stream(5, 0)).unwrap();
        let s0 = snapshot(&t, 0.0).unwrap();
        assert_eq!(s0.particles.len(), 1);
        assert_eq!(s0.particles[0].size, 2.0);
        let first = t.cells[0].path.jumps()[0].time;
        let s1 = snapshot(&t, first + 1e-12).unwrap();
        let tot: f64 = s1.particles.iter().map(|p| p.size).sum();
        assert_eq!(s1.particles.len(), 2);
        assert!((tot - 2.0).abs() < 1e-12);
        let pair_v = [1.0];
        assert_eq!(temporal_martingale(&s0, 1.0, &pair_v).exact, 2.0);
    }

    #[test]
    fn empty_generation_gives_zero() {
        let t = simulate_tree(&fixtures::m2(), 1.0, 0, 0.0, &ctl(2, 10.0, 1.0), &mut stream(6, 0)).unwrap();
        let g = genealogical_martingale(&t, 1.0, &[1.0, 1.0], 1).unwrap();
        assert_eq!(g.exact, 0.0);
    }
}
