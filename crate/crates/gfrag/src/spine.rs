//! The spine, built by tagging a leaf in a size-biased tree and directly
//! from its matrix exponent.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::cellsystem::{
    simulate_tree_prepared, snapshot, CellTree, SimControls, TreeOptions, TruncKind,
};
use crate::cumulants::{spine_exponent, AdmissiblePair};
use crate::error::{Error, Result};
use crate::lamperti::{simulate_ssmp, EndReason, SsmpPath, State, StopRule};
use crate::map::{MapSpec, Prepared, TypeIndex};
use crate::rng::{mix, replicate, Rng};
use crate::stats::{ks_two_sample_weighted, ksum, mean_se, KsResult, MeanSe};

/// Prepared sampler of the spine as a self-similar process with types.
#[derive(Clone, Debug)]
pub struct DirectSpine {
    pub prep: Prepared,
    pub alpha: f64,
}

impl DirectSpine {
    pub fn new(spec: &MapSpec<f64>, pair: &AdmissiblePair<f64>, alpha: f64) -> Result<Self> {
        let s = spine_exponent(spec, pair).spine_spec();
        Ok(Self { prep: Prepared::new(&s)?, alpha })
    }

    pub fn path(&self, x: f64, i: TypeIndex, horizon: f64, rng: &mut Rng) -> SsmpPath {
        simulate_ssmp(&self.prep, x, i, self.alpha, &StopRule::horizon(horizon), rng)
    }

    pub fn state_at(&self, x: f64, i: TypeIndex, t: f64, rng: &mut Rng) -> State {
        let p = self.path(x, i, t, rng);
        match p.end {
            EndReason::Killed | EndReason::Absorbed => State::Cemetery,
            _ => {
                let (s, j) = p.end_state();
                State::Alive { size: s, type_: j }
            }
        }
    }
}

/// Path of the spine from `(x, i)` up to real time `horizon`.
pub fn direct_spine(spec: &MapSpec<f64>, pair: &AdmissiblePair<f64>, x: f64, i: TypeIndex, alpha: f64, horizon: f64, rng: &mut Rng) -> Result<SsmpPath> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    Ok(DirectSpine::new(spec, pair, alpha)?.path(x, i, horizon, rng))
}

/// What the tagged leaf landed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Leaf {
    Cell(usize),
    Truncated(usize),
}

/// Leaf tagged proportionally to its weight in the genealogical martingale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggedSpine {
    pub leaf: Leaf,
    /// Cell indices from the Eve cell down to the last simulated ancestor.
    pub lineage: Vec<usize>,
    /// Birth times along the lineage, ending with the leaf's own time.
    pub generation_times: Vec<f64>,
    /// `M(n) / (v_i x^omega)`: the change-of-measure weight of the tree.
    pub tree_weight: f64,
    /// Spine state at the query time, unless the lineage is not resolved there.
    pub state: Option<State>,
    pub flagged: bool,
}

impl TaggedSpine {
    /// Generation of the spine at the query time.
    pub fn generation_at(&self, t: f64) -> usize {
        self.generation_times.iter().skip(1).take_while(|b| **b <= t).count()
    }
}

fn candidates(tree: &CellTree, omega: f64, v: &[f64], n: usize) -> (Vec<Leaf>, Vec<f64>) {
    let g = n + 1;
    let mut leaves = Vec::new();
    let mut w = Vec::new();
    for (k, c) in tree.cells.iter().enumerate() {
        if c.generation == g {
            leaves.push(Leaf::Cell(k));
            w.push(v[c.birth_type] * c.initial_size.powf(omega));
        }
    }
    for (k, t) in tree.truncated.iter().enumerate() {
        if t.generation <= g {
            leaves.push(Leaf::Truncated(k));
            w.push(v[t.type_] * t.size.powf(omega));
        }
    }
    (leaves, w)
}

/// Tags a leaf of generation `n + 1` (or a truncated item standing for one)
/// with probability `v_{J} X^omega / M(n)` and reads the spine at time `t`.
pub fn sample_tagged_leaf(tree: &CellTree, omega: f64, v: &[f64], n: usize, t: f64, rng: &mut Rng) -> Result<TaggedSpine> {
    let (leaves, w) = candidates(tree, omega, v, n);
    let total = ksum(w.iter().copied());
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("tree has no weight at the requested generation".into()));
    }
    let mut u = rng.gen::<f64>() * total;
    let mut pick = leaves.len() - 1;
    for (k, x) in w.iter().enumerate() {
        if u < *x {
            pick = k;
            break;
        }
        u -= x;
    }
    let leaf = leaves[pick];
    let tree_weight = total / (v[tree.root_type] * tree.root_size.powf(omega));
    let (last, leaf_time) = match leaf {
        Leaf::Cell(k) => (Some(k), tree.cells[k].birth_time),
        Leaf::Truncated(k) => {
            let it = &tree.truncated[k];
            (if it.parent == usize::MAX { None } else { Some(it.parent) }, it.time)
        }
    };
    let mut lineage = Vec::new();
    let mut cur = last;
    while let Some(c) = cur {
        lineage.push(c);
        cur = tree.cells[c].parent;
    }
    lineage.reverse();
    let mut generation_times: Vec<f64> = lineage.iter().map(|&c| tree.cells[c].birth_time).collect();
    if let Leaf::Truncated(_) = leaf {
        generation_times.push(leaf_time);
    }
    // Locate the spine at time t.
    let (state, flagged) = match leaf {
        Leaf::Cell(k) if tree.cells[k].birth_time <= t => (None, true),
        Leaf::Truncated(k) if tree.truncated[k].kind == TruncKind::Child && tree.truncated[k].time <= t => (None, true),
        Leaf::Truncated(k) if tree.truncated[k].kind == TruncKind::Remainder && tree.truncated[k].time < t => (None, true),
        Leaf::Truncated(k) if tree.truncated[k].parent == usize::MAX => (None, true),
        _ => {
            let a = *lineage.iter().rev().find(|&&c| tree.cells[c].birth_time <= t).expect("Eve cell is born at 0");
            let c = &tree.cells[a];
            let st = c.path.state_at(t - c.birth_time).unwrap_or(State::Cemetery);
            (Some(st), false)
        }
    };
    Ok(TaggedSpine { leaf, lineage, generation_times, tree_weight, state, flagged })
}

/// Per-type outcome of the two-arm comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeComparison {
    pub type_: TypeIndex,
    pub ks: KsResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentCheck {
    pub name: String,
    /// `E[sum_k v X_k(t)^omega f] / (v_i x^omega)` over trees.
    pub tree_side: MeanSe,
    /// `E^[f(X^(t)) 1{alive}]` along the direct spine.
    pub spine_side: MeanSe,
    pub z: f64,
}

/// One spine sample for export.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineSample {
    pub log_value: f64,
    pub type_: TypeIndex,
    /// 0 for tagged leaves, 1 for the direct spine.
    pub arm: u8,
    pub weight: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineEquivalence {
    pub t: f64,
    pub per_type: Vec<TypeComparison>,
    pub many_to_one: Vec<MomentCheck>,
    /// Share of the total tree weight carried by flagged samples.
    pub flagged_weight: f64,
    pub samples: Vec<SpineSample>,
    /// Histogram of the tagged spine's generation at `t` (weighted).
    pub generation_hist: Vec<f64>,
}

/// Both constructions of the spine at time `t`, compared per terminal type.
#[allow(clippy::too_many_arguments)]
pub fn spine_equivalence_test(
    spec: &MapSpec<f64>,
    pair: &AdmissiblePair<f64>,
    x: f64,
    i: TypeIndex,
    alpha: f64,
    t: f64,
    controls: &SimControls,
    reps: usize,
    seed: u64,
) -> Result<SpineEquivalence> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("t must be nonnegative".into()));
    }
    let prep = Prepared::new(spec)?;
    let ctl = SimControls { horizon: t.max(f64::MIN_POSITIVE), ..*controls };
    let n = ctl.max_generation;
    let opts = TreeOptions::default();
    let norm = pair.v[i] * x.powf(pair.omega);
    let n_types = spec.n_types;
    // Arm A: tagged leaves in P-trees, weighted by M(n) / (v_i x^omega).
    let arm_a: Vec<(TaggedSpine, Vec<f64>)> = replicate(mix(seed, 1), reps, |_, r| {
        let tree = simulate_tree_prepared(&prep, x, i, alpha, &ctl, &opts, r.gen());
        let tag = sample_tagged_leaf(&tree, pair.omega, &pair.v, n, t, r).expect("positive weight");
        let snap = snapshot(&tree, t).expect("t within horizon");
        // Tree side of the many-to-one formula: f = 1, 1{type j}, x^0.1.
        let mut m = vec![0.0; 2 + n_types];
        for p in &snap.particles {
            let w = pair.v[p.type_] * p.size.powf(pair.omega) / norm;
            m[0] += w;
            m[1 + p.type_] += w;
            m[1 + n_types] += w * p.size.powf(0.1);
        }
        (tag, m)
    });
    // Arm B: the direct spine.
    let ds = DirectSpine::new(spec, pair, alpha)?;
    let arm_b: Vec<State> = replicate(mix(seed, 2), reps, |_, r| if t == 0.0 { State::Alive { size: x, type_: i } } else { ds.state_at(x, i, t, r) });

    let mut samples = Vec::with_capacity(2 * reps);
    let total_w: f64 = ksum(arm_a.iter().map(|a| a.0.tree_weight));
    let flagged_w: f64 = ksum(arm_a.iter().filter(|a| a.0.flagged).map(|a| a.0.tree_weight));
    let mut generation_hist = Vec::new();
    for (tag, _) in &arm_a {
        let (lv, ty) = match tag.state {
            Some(State::Alive { size, type_ }) => (size.ln(), type_),
            _ => (f64::NEG_INFINITY, usize::MAX),
        };
        if !tag.flagged {
            let g = tag.generation_at(t);
            if generation_hist.len() <= g {
                generation_hist.resize(g + 1, 0.0);
            }
            generation_hist[g] += tag.tree_weight / total_w;
        }
        samples.push(SpineSample { log_value: lv, type_: ty, arm: 0, weight: tag.tree_weight, flagged: tag.flagged });
    }
    for s in &arm_b {
        let (lv, ty) = match s {
            State::Alive { size, type_ } => (size.ln(), *type_),
            State::Cemetery => (f64::NEG_INFINITY, usize::MAX),
        };
        samples.push(SpineSample { log_value: lv, type_: ty, arm: 1, weight: 1.0, flagged: false });
    }
    let mut per_type = Vec::new();
    for j in 0..n_types {
        let sel = |arm: u8| -> (Vec<f64>, Vec<f64>) {
            samples.iter().filter(|s| s.arm == arm && !s.flagged && s.type_ == j).map(|s| (s.log_value, s.weight)).unzip()
        };
        let (a, wa) = sel(0);
        let (b, wb) = sel(1);
        per_type.push(TypeComparison { type_: j, ks: ks_two_sample_weighted(&a, &wa, &b, &wb) });
    }
    let mut many_to_one = Vec::new();
    let names: Vec<String> = std::iter::once("1".to_string())
        .chain((0..n_types).map(|j| format!("type={j}")))
        .chain(std::iter::once("x^0.1".to_string()))
        .collect();
    for (k, name) in names.into_iter().enumerate() {
        let lhs: Vec<f64> = arm_a.iter().map(|a| a.1[k]).collect();
        let rhs: Vec<f64> = arm_b
            .iter()
            .map(|s| match s {
                State::Alive { size, type_ } => {
                    if k == 0 {
                        1.0
                    } else if k <= n_types {
                        if *type_ == k - 1 { 1.0 } else { 0.0 }
                    } else {
                        size.powf(0.1)
                    }
                }
                State::Cemetery => 0.0,
            })
            .collect();
        let (l, r) = (mean_se(&lhs), mean_se(&rhs));
        let se = (l.se * l.se + r.se * r.se).sqrt();
        let z = if se > 0.0 { (l.mean - r.mean) / se } else if l.mean == r.mean { 0.0 } else { f64::INFINITY };
        many_to_one.push(MomentCheck { name, tree_side: l, spine_side: r, z });
    }
    Ok(SpineEquivalence { t, per_type, many_to_one, flagged_weight: flagged_w / total_w, samples, generation_hist })
}

/// Relative sizes and types of the children a path spawns before `X / x0`
/// first drops below `rel_floor` (checked where the simulator checks it).
pub fn offspring_before_floor(path: &SsmpPath, rel_floor: f64) -> Vec<(f64, TypeIndex)> {
    let lf = rel_floor.ln();
    let jumps = path.jumps();
    let times: Vec<f64> = path.base.jumps.iter().map(|j| j.time).collect();
    let mut out = Vec::new();
    let mut k = 0;
    for p in &path.pieces {
        if p.xi1 < lf {
            return out;
        }
        while k < jumps.len() && times[k] <= p.s1 {
            let j = &jumps[k];
            if j.post < j.pre {
                out.push((j.child_size() / path.x0, j.type_mark));
            }
            if (j.post / path.x0).ln() < lf {
                return out;
            }
            k += 1;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebuildReport {
    /// KS on the largest relative first-generation child, per root type.
    pub per_type: Vec<TypeComparison>,
    /// KS on the number of such children, per root type.
    pub counts: Vec<TypeComparison>,
    pub subtrees: usize,
    /// Root-type shares of the off-spine subtrees (weighted).
    pub root_type_share: Vec<f64>,
}

/// Subtrees hanging off the tagged spine, rescaled to unit size, against
/// fresh cells under `P`.
///
/// Arm A collects every simulated child of size at least `s_min_root`
/// spawned by a spine cell while it carried the spine. For each such
/// root, its children before it first falls below `min_size / s_min_root`
/// of its initial size are recorded; arm B does the same for fresh cells.
#[allow(clippy::too_many_arguments)]
pub fn rebuild_check(
    spec: &MapSpec<f64>,
    pair: &AdmissiblePair<f64>,
    x: f64,
    i: TypeIndex,
    alpha: f64,
    controls: &SimControls,
    n: usize,
    s_min_root: f64,
    reps: usize,
    fresh: usize,
    seed: u64,
) -> Result<RebuildReport> {
    let ctl = SimControls { horizon: f64::INFINITY, ..*controls };
    if n >= ctl.max_generation {
        return Err(Error::InvalidArgument("tagging generation must be below max_generation".into()));
    }
    if s_min_root < ctl.min_size {
        return Err(Error::InvalidArgument("s_min_root must be at least min_size".into()));
    }
    let r0 = ctl.min_size / s_min_root;
    let prep = Prepared::new(spec)?;
    let opts = TreeOptions::default();
    let n_types = spec.n_types;
    // (root type, largest child, count, weight)
    let roots: Vec<Vec<(TypeIndex, f64, f64, f64)>> = replicate(mix(seed, 3), reps, |_, r| {
        let tree = simulate_tree_prepared(&prep, x, i, alpha, &ctl, &opts, r.gen());
        let tag = match sample_tagged_leaf(&tree, pair.omega, &pair.v, n, f64::INFINITY, r) {
            Ok(t) => t,
            Err(_) => return Vec::new(),
        };
        let mut out = Vec::new();
        for (pos, &c) in tag.lineage.iter().enumerate() {
            let until = tag.generation_times.get(pos + 1).copied().unwrap_or(f64::INFINITY);
            let on_spine = tag.lineage.get(pos + 1).copied();
            for o in &tree.cells[c].offspring {
                let Some(ch) = o.cell else { continue };
                if Some(ch) == on_spine || o.birth_time >= until || o.size < s_min_root {
                    continue;
                }
                let kids = offspring_before_floor(&tree.cells[ch].path, r0);
                let big = kids.iter().map(|k| k.0).fold(0.0, f64::max);
                out.push((o.type_, big, kids.len() as f64, tag.tree_weight));
            }
        }
        out
    });
    let roots: Vec<(TypeIndex, f64, f64, f64)> = roots.into_iter().flatten().collect();
    if roots.len() < 50 {
        return Err(Error::TooFewSamples { need: 50, got: roots.len() });
    }
    let fresh_stop = StopRule { horizon: f64::INFINITY, min_size: r0, map_horizon: f64::INFINITY, clock_tol: opts.clock_tol };
    let mut per_type = Vec::new();
    let mut counts = Vec::new();
    let total_w = ksum(roots.iter().map(|r| r.3));
    let mut share = vec![0.0; n_types];
    for r in &roots {
        share[r.0] += r.3 / total_w;
    }
    for j in 0..n_types {
        let a: Vec<&(TypeIndex, f64, f64, f64)> = roots.iter().filter(|r| r.0 == j).collect();
        if a.is_empty() {
            continue;
        }
        let b: Vec<(f64, f64)> = replicate(mix(seed, 4 + j as u64), fresh, |_, r| {
            let p = simulate_ssmp(&prep, 1.0, j, alpha, &fresh_stop, r);
            let kids = offspring_before_floor(&p, r0);
            (kids.iter().map(|k| k.0).fold(0.0, f64::max), kids.len() as f64)
        });
        let wa: Vec<f64> = a.iter().map(|r| r.3).collect();
        let ones = vec![1.0; b.len()];
        let big_a: Vec<f64> = a.iter().map(|r| r.1).collect();
        let big_b: Vec<f64> = b.iter().map(|r| r.0).collect();
        per_type.push(TypeComparison { type_: j, ks: ks_two_sample_weighted(&big_a, &wa, &big_b, &ones) });
        let cnt_a: Vec<f64> = a.iter().map(|r| r.2).collect();
        let cnt_b: Vec<f64> = b.iter().map(|r| r.1).collect();
        counts.push(TypeComparison { type_: j, ks: ks_two_sample_weighted(&cnt_a, &wa, &cnt_b, &ones) });
    }
    Ok(RebuildReport { per_type, counts, subtrees: roots.len(), root_type_share: share })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cellsystem::simulate_tree;
    use crate::fixtures;
    use crate::rng::stream;

    #[test]
    fn selection_follows_weights() {
        let s = fixtures::m2();
        let ctl = SimControls { max_generation: 2, min_size: 0.05, horizon: f64::INFINITY };
        let tree = simulate_tree(&s, 1.0, 0, 0.0, &ctl, &mut stream(1, 0)).unwrap();
        let v = [1.0, 1.01];
        let (leaves, w) = candidates(&tree, 1.19, &v, 1);
        let tot: f64 = w.iter().sum();
        let mut r = stream(2, 0);
        let reps = 40_000;
        let mut hits = vec![0usize; leaves.len()];
        for _ in 0..reps {
            let t = sample_tagged_leaf(&tree, 1.19, &v, 1, f64::INFINITY, &mut r).unwrap();
            hits[leaves.iter().position(|l| *l == t.leaf).unwrap()] += 1;
        }
        for (h, wk) in hits.iter().zip(&w) {
            let p = wk / tot;
            let se = (p * (1.0 - p) / reps as f64).sqrt();
            assert!((*h as f64 / reps as f64 - p).abs() < 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn single_candidate_is_always_chosen() {
        // A tree whose Eve cell is below the floor has one candidate.
        let s = fixtures::binary_split();
        let ctl = SimControls { max_generation: 3, min_size: 2.0, horizon: f64::INFINITY };
        let tree = simulate_tree(&s, 1.0, 0, 0.0, &ctl, &mut stream(3, 0)).unwrap();
        let t = sample_tagged_leaf(&tree, 1.0, &[1.0], 0, 0.0, &mut stream(4, 0)).unwrap();
        assert_eq!(t.leaf, Leaf::Truncated(0));
        assert_eq!(t.tree_weight, 1.0);
    }

    #[test]
    fn time_zero_is_degenerate() {
        let s = fixtures::m2();
        let pair = AdmissiblePair { omega: 1.1890554123966788, v: vec![1.0, 1.010032912467555], residual: 0.0 };
        let ctl = SimControls { max_generation: 50, min_size: 1e-3, horizon: 1.0 };
        let r = spine_equivalence_test(&s, &pair, 1.0, 0, 0.5, 0.0, &ctl, 200, 5).unwrap();
        for s in &r.samples {
            if !s.flagged {
                assert_eq!(s.log_value, 0.0);
            }
        }
    }

    #[test]
    fn off_spine_roots_carry_jump_marks() {
        let s = fixtures::m2();
        let ctl = SimControls { max_generation: 3, min_size: 0.01, horizon: f64::INFINITY };
        let tree = simulate_tree(&s, 1.0, 1, 0.0, &ctl, &mut stream(6, 0)).unwrap();
        for c in &tree.cells {
            let marks: Vec<TypeIndex> = c.path.jumps().iter().filter(|j| j.post < j.pre).map(|j| j.type_mark).collect();
            let mut a = marks.clone();
            let mut b: Vec<TypeIndex> = c.offspring.iter().map(|o| o.type_).collect();
            a.sort();
            b.sort();
            assert_eq!(a, b);
        }
    }
}
