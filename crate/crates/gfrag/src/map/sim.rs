//! Exact event-driven simulation of atomic MAPs.

use rand::Rng as _;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::spec::{MapSpec, TypeIndex};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum JumpKind {
    LevyAtom,
    Transition,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub time: f64,
    pub size: f64,
    pub type_mark: TypeIndex,
    pub kind: JumpKind,
    pub from_type: TypeIndex,
    pub to_type: TypeIndex,
}

/// Continuous stretch between two events (or chunk boundaries). `gauss_incr` is the realised
/// Gaussian increment over the stretch; `bridge_seed` regenerates interior
/// Brownian-bridge points on demand.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_time: f64,
    pub duration: f64,
    pub start_value: f64,
    pub type_: TypeIndex,
    pub drift: f64,
    pub sigma: f64,
    pub gauss_incr: f64,
    pub bridge_seed: u64,
}

impl Segment {
    pub fn end_time(&self) -> f64 {
        self.start_time + self.duration
    }

    /// Value just before the end of the stretch.
    pub fn end_value(&self) -> f64 {
        self.start_value + self.drift * self.duration + self.gauss_incr
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapPath {
    pub start_type: TypeIndex,
    pub segments: Vec<Segment>,
    pub jumps: Vec<JumpRecord>,
    pub horizon: f64,
    pub killed_at: Option<f64>,
}

impl MapPath {
    /// Value at the horizon (or just before killing).
    pub fn end_value(&self) -> f64 {
        self.segments.last().expect("paths have at least one segment").end_value()
    }

    pub fn end_type(&self) -> TypeIndex {
        self.segments.last().expect("paths have at least one segment").type_
    }

    /// Rebuilds the end value from drift, Gaussian and jump parts.
    pub fn reconstruct_end(&self) -> f64 {
        let mut v = self.segments[0].start_value;
        let mut k = 0;
        for s in &self.segments {
            v = v + s.drift * s.duration + s.gauss_incr;
            while k < self.jumps.len() && self.jumps[k].time <= s.end_time() {
                v += self.jumps[k].size;
                k += 1;
            }
        }
        v
    }

    /// `(xi(t), Theta(t))` with linear interpolation of the Gaussian part
    /// inside a stretch.
    pub fn value_at(&self, t: f64) -> Option<(f64, TypeIndex)> {
        if t > self.horizon || self.killed_at.is_some_and(|k| t >= k) {
            return None;
        }
        let k = self.segments.partition_point(|s| s.end_time() <= t);
        if k >= self.segments.len() {
            return Some((self.end_value(), self.end_type()));
        }
        let s = &self.segments[k];
        let u = t - s.start_time;
        let frac = if s.duration > 0.0 { u / s.duration } else { 0.0 };
        Some((s.start_value + s.drift * u + frac * s.gauss_incr, s.type_))
    }
}

#[derive(Clone, Debug)]
struct TypeTable {
    total: f64,
    chain: f64,
    kill: f64,
    drift: f64,
    sigma: f64,
    atoms: Vec<(f64, f64, TypeIndex)>,
    targets: Vec<(f64, TypeIndex)>,
    trans: Vec<Vec<(f64, f64, TypeIndex)>>,
}

/// Spec with precomputed event tables; cheap to share across threads.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub spec: MapSpec<f64>,
    tables: Vec<TypeTable>,
}

impl Prepared {
    pub fn new(spec: &MapSpec<f64>) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_types;
        let tables = (0..n)
            .map(|i| {
                let l = &spec.levy[i];
                let chain = -spec.q(i, i);
                let atoms: Vec<_> = l.atoms.iter().filter(|a| a.weight > 0.0).map(|a| (a.weight, a.size, a.type_mark)).collect();
                let targets = (0..n).filter(|j| *j != i && spec.q(i, *j) > 0.0).map(|j| (spec.q(i, j), j)).collect();
                let trans = (0..n)
                    .map(|j| spec.trans[i][j].atoms.iter().map(|a| (a.weight, a.size, a.type_mark)).collect())
                    .collect();
                TypeTable {
                    total: chain + l.kill_rate + atoms.iter().map(|a| a.0).sum::<f64>(),
                    chain,
                    kill: l.kill_rate,
                    drift: l.drift,
                    sigma: l.gauss_var.sqrt(),
                    atoms,
                    targets,
                    trans,
                }
            })
            .collect();
        Ok(Self { spec: spec.clone(), tables })
    }

    pub fn n_types(&self) -> usize {
        self.spec.n_types
    }

    pub fn sigma(&self, i: TypeIndex) -> f64 {
        self.tables[i].sigma
    }
}

/// What ended a stretch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Event {
    Jump(JumpRecord),
    Killed,
    Horizon,
}

/// Streaming sampler; produces one stretch and its closing event per call.
#[derive(Clone, Debug)]
pub struct MapSampler<'a> {
    prep: &'a Prepared,
    pub time: f64,
    pub value: f64,
    pub type_: TypeIndex,
    pub dead: bool,
}

fn pick<T: Copy>(items: &[(f64, T)], total: f64, rng: &mut Rng) -> T {
    let mut u = rng.gen::<f64>() * total;
    for (w, x) in items {
        if u < *w {
            return *x;
        }
        u -= w;
    }
    items.last().unwrap().1
}

impl<'a> MapSampler<'a> {
    pub fn new(prep: &'a Prepared, start_type: TypeIndex, start_value: f64) -> Self {
        Self { prep, time: 0.0, value: start_value, type_: start_type, dead: false }
    }

    /// Advances to the next event or to `horizon`, whichever comes first.
    pub fn step(&mut self, horizon: f64, rng: &mut Rng) -> (Segment, Event) {
        let tb = &self.prep.tables[self.type_];
        let e: f64 = Exp1.sample(rng);
        let wait = if tb.total > 0.0 { e / tb.total } else { f64::INFINITY };
        let hit_horizon = self.time + wait >= horizon;
        let dur = if hit_horizon { (horizon - self.time).max(0.0) } else { wait };
        let (gauss, seed) = if tb.sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            (tb.sigma * dur.sqrt() * z, rng.gen::<u64>())
        } else {
            (0.0, 0)
        };
        let seg = Segment {
            start_time: self.time,
            duration: dur,
            start_value: self.value,
            type_: self.type_,
            drift: tb.drift,
            sigma: tb.sigma,
            gauss_incr: gauss,
            bridge_seed: seed,
        };
        self.time += dur;
        self.value = seg.end_value();
        if hit_horizon {
            self.time = horizon;
            return (seg, Event::Horizon);
        }
        let u = rng.gen::<f64>() * tb.total;
        let from = self.type_;
        if u < tb.kill {
            self.dead = true;
            return (seg, Event::Killed);
        }
        let u = u - tb.kill;
        let rec = if u < tb.chain {
            let j = pick(&tb.targets, tb.chain, rng);
            let law = &tb.trans[j];
            let (size, mark) = if law.is_empty() {
                (0.0, j)
            } else {
                let mut v = rng.gen::<f64>();
                let mut out = (law[law.len() - 1].1, law[law.len() - 1].2);
                for a in law {
                    if v < a.0 {
                        out = (a.1, a.2);
                        break;
                    }
                    v -= a.0;
                }
                out
            };
            JumpRecord { time: self.time, size, type_mark: mark, kind: JumpKind::Transition, from_type: from, to_type: j }
        } else {
            let mut v = u - tb.chain;
            let mut a = tb.atoms[tb.atoms.len() - 1];
            for x in &tb.atoms {
                if v < x.0 {
                    a = *x;
                    break;
                }
                v -= x.0;
            }
            JumpRecord { time: self.time, size: a.1, type_mark: a.2, kind: JumpKind::LevyAtom, from_type: from, to_type: from }
        };
        self.value += rec.size;
        self.type_ = rec.to_type;
        (seg, Event::Jump(rec))
    }
}

/// Exact path of `(xi, Theta)` on `[0, horizon]` started from `(0, start_type)`.
pub fn sample_map_path(spec: &MapSpec<f64>, start_type: TypeIndex, horizon: f64, rng: &mut Rng) -> Result<MapPath> {
    let prep = Prepared::new(spec)?;
    sample_prepared(&prep, start_type, horizon, rng)
}

pub fn sample_prepared(prep: &Prepared, start_type: TypeIndex, horizon: f64, rng: &mut Rng) -> Result<MapPath> {
    if !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
    }
    if start_type >= prep.n_types() {
        return Err(Error::InvalidArgument(format!("start type {start_type} out of range")));
    }
    let mut s = MapSampler::new(prep, start_type, 0.0);
    let mut path = MapPath { start_type, segments: vec![], jumps: vec![], horizon, killed_at: None };
    loop {
        let (seg, ev) = s.step(horizon, rng);
        path.segments.push(seg);
        match ev {
            Event::Jump(j) => path.jumps.push(j),
            Event::Killed => {
                path.killed_at = Some(s.time);
                break;
            }
            Event::Horizon => break,
        }
    }
    Ok(path)
}

/// Terminal `(xi(t), Theta(t))`, or `None` if killed, without storing the path.
pub fn sample_endpoint(prep: &Prepared, start_type: TypeIndex, t: f64, rng: &mut Rng) -> Option<(f64, TypeIndex)> {
    let mut s = MapSampler::new(prep, start_type, 0.0);
    loop {
        match s.step(t, rng).1 {
            Event::Horizon => return Some((s.value, s.type_)),
            Event::Killed => return None,
            Event::Jump(_) => {}
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::rng::stream;

    #[test]
    fn deterministic_drift() {
        let p = sample_map_path(&fixtures::drift(1.0), 0, 2.5, &mut stream(1, 0)).unwrap();
        assert_eq!(p.end_value(), 2.5);
        assert_eq!(p.value_at(1.25).unwrap().0, 1.25);
    }

    #[test]
    fn reconstruction_is_exact() {
        let s = fixtures::m2();
        for k in 0..50 {
            let p = sample_map_path(&s, k % 2, 5.0, &mut stream(2, k as u64)).unwrap();
            assert_eq!(p.reconstruct_end(), p.end_value());
            for w in p.jumps.windows(2) {
                assert!(w[0].time < w[1].time);
            }
            for (j, seg) in p.jumps.iter().zip(p.segments.iter().skip(1)) {
                assert_eq!(seg.type_, j.to_type);
            }
        }
    }

    #[test]
    fn pure_chain_has_zero_ordinator() {
        let mut s = fixtures::m2();
        for l in s.levy.iter_mut() {
            l.drift = 0.0;
            l.gauss_var = 0.0;
            l.atoms.clear();
        }
        s.trans[0][1] = crate::map::TransitionJump::zero_jump(1);
        let p = sample_map_path(&s, 0, 10.0, &mut stream(3, 0)).unwrap();
        assert_eq!(p.end_value(), 0.0);
        assert!(p.jumps.iter().all(|j| j.kind == JumpKind::Transition));
    }

    #[test]
    fn same_seed_same_path() {
        let s = fixtures::m2();
        let a = sample_map_path(&s, 0, 3.0, &mut stream(9, 1)).unwrap();
        let b = sample_map_path(&s, 0, 3.0, &mut stream(9, 1)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bad_horizon() {
        assert!(sample_map_path(&fixtures::m2(), 0, 0.0, &mut stream(1, 0)).is_err());
    }
}
