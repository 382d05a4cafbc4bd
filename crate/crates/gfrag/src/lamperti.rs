//! Lamperti-Kiu transform, exponential functionals and the entrance law.

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::map::{
    chi, chi_prime, chi_w, dual_spec, stationary_distribution, Event, JumpKind, MapPath, MapSampler, MapSpec, Prepared,
    Segment, TypeIndex,
};
use crate::rng::{from_key, mix, replicate, Rng};
use crate::stats::{ks_two_sample_weighted, mean_se, KsResult, MeanSe};

/// Default bound on `|alpha| sigma sqrt(h)` for the clock grid.
pub const CLOCK_TOL: f64 = 0.05;

const GL_NODES: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const GL_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];

/// Stretch of the additive clock `C(s) = int_0^s e^{alpha xi}`.
///
/// With `exact` the ordinator is linear on the piece and the clock is
/// integrated in closed form; otherwise the piece joins two Brownian-bridge
/// points and the clock uses the bridge conditional mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Piece {
    pub s0: f64,
    pub s1: f64,
    pub xi0: f64,
    pub xi1: f64,
    pub c0: f64,
    pub c1: f64,
    pub type_: TypeIndex,
    pub exact: bool,
}

impl Piece {
    fn slope(&self) -> f64 {
        if self.s1 > self.s0 {
            (self.xi1 - self.xi0) / (self.s1 - self.s0)
        } else {
            0.0
        }
    }

    /// MAP time at which the clock reaches `c`, for `c0 <= c <= c1`.
    fn invert(&self, c: f64, alpha: f64) -> f64 {
        if c <= self.c0 {
            return self.s0;
        }
        if c >= self.c1 {
            return self.s1;
        }
        if self.exact {
            let a = self.slope();
            let dc = (c - self.c0) * (-alpha * self.xi0).exp();
            let k = alpha * a;
            let u = if k.abs() < 1e-14 { dc } else { (dc * k).ln_1p() / k };
            (self.s0 + u).min(self.s1)
        } else {
            self.s0 + (self.s1 - self.s0) * (c - self.c0) / (self.c1 - self.c0)
        }
    }

    fn value_at(&self, s: f64) -> f64 {
        if self.s1 > self.s0 {
            self.xi0 + (self.xi1 - self.xi0) * (s - self.s0) / (self.s1 - self.s0)
        } else {
            self.xi0
        }
    }
}

fn exact_clock(xi0: f64, slope: f64, d: f64, alpha: f64) -> f64 {
    let k = alpha * slope;
    let e = (alpha * xi0).exp();
    if (k * d).abs() < 1e-12 {
        e * d * (1.0 + 0.5 * k * d)
    } else {
        e * (k * d).exp_m1() / k
    }
}

/// `int_0^h exp(alpha (y0 + (y1 - y0) u / h) + alpha^2 s2 u (h - u) / (2 h)) du`.
fn bridge_clock(y0: f64, y1: f64, h: f64, alpha: f64, s2: f64) -> f64 {
    let mut acc = 0.0;
    for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
        let u = x * h;
        acc += w * (alpha * (y0 + (y1 - y0) * x) + 0.5 * alpha * alpha * s2 * u * (h - u) / h).exp();
    }
    acc * h
}

/// Splits a stretch into clock pieces, calling `f` for each.
fn segment_pieces(seg: &Segment, alpha: f64, tol: f64, c_start: f64, mut f: impl FnMut(Piece) -> bool) {
    let end = seg.end_value();
    if seg.sigma == 0.0 || alpha == 0.0 || seg.duration == 0.0 {
        let c = if alpha == 0.0 { seg.duration } else { exact_clock(seg.start_value, seg.drift + seg.gauss_incr / seg.duration.max(1e-300), seg.duration, alpha) };
        let p = Piece {
            s0: seg.start_time,
            s1: seg.end_time(),
            xi0: seg.start_value,
            xi1: end,
            c0: c_start,
            c1: c_start + c,
            type_: seg.type_,
            exact: seg.sigma == 0.0 || alpha == 0.0,
        };
        f(p);
        return;
    }
    let h = (tol / (alpha.abs() * seg.sigma)).powi(2);
    let s2 = seg.sigma * seg.sigma;
    let mut r = from_key(seg.bridge_seed);
    let total = seg.duration;
    let mut t = 0.0;
    let mut b = 0.0;
    let mut c = c_start;
    while t < total {
        let dt = h.min(total - t);
        let t1 = if total - t - dt < 1e-12 * total { total } else { t + dt };
        let dt = t1 - t;
        let b1 = if t1 >= total {
            seg.gauss_incr
        } else {
            let rem = total - t;
            let mean = b + (seg.gauss_incr - b) * dt / rem;
            let var = s2 * dt * (total - t1) / rem;
            let z: f64 = StandardNormal.sample(&mut r);
            mean + var.sqrt() * z
        };
        let y0 = seg.start_value + seg.drift * t + b;
        let y1 = seg.start_value + seg.drift * t1 + b1;
        let dc = bridge_clock(y0, y1, dt, alpha, s2);
        let p = Piece { s0: seg.start_time + t, s1: seg.start_time + t1, xi0: y0, xi1: y1, c0: c, c1: c + dc, type_: seg.type_, exact: false };
        if !f(p) {
            return;
        }
        c += dc;
        t = t1;
        b = b1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndReason {
    /// Killed (cemetery).
    Killed,
    /// Reached the requested real-time horizon.
    Horizon,
    /// Size fell below the requested floor.
    Small,
    /// Reached the requested MAP-time horizon.
    MapHorizon,
    /// `alpha xi` fell so low that the remaining clock is negligible: `X`
    /// reaches the cemetery at the recorded lifetime.
    Absorbed,
}

/// Below this value of `alpha xi` the rest of the clock is treated as zero.
const ABSORB: f64 = -50.0;

/// State of a self-similar process with types at a given time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum State {
    Alive { size: f64, type_: TypeIndex },
    Cemetery,
}

impl State {
    pub fn alive(&self) -> Option<(f64, TypeIndex)> {
        match self {
            State::Alive { size, type_ } => Some((*size, *type_)),
            State::Cemetery => None,
        }
    }
}

/// Jump of `X` in real time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmpJump {
    pub time: f64,
    pub pre: f64,
    pub post: f64,
    pub type_mark: TypeIndex,
    pub kind: JumpKind,
    pub to_type: TypeIndex,
}

impl SsmpJump {
    /// `|Delta X|`; the size of the child spawned by a negative jump.
    pub fn child_size(&self) -> f64 {
        self.pre - self.post
    }
}

/// `X(t) = x0 exp(xi(phi(t x0^{-alpha})))` for a sampled MAP path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmpPath {
    pub base: MapPath,
    pub x0: f64,
    pub alpha: f64,
    /// Lifetime when the path was killed, otherwise `+inf`.
    pub lifetime: f64,
    pub pieces: Vec<Piece>,
    pub end: EndReason,
}

impl SsmpPath {
    fn scale(&self) -> f64 {
        self.x0.powf(self.alpha)
    }

    /// Last real time covered by the sample.
    pub fn end_time(&self) -> f64 {
        self.pieces.last().map_or(0.0, |p| p.c1) * self.scale()
    }

    /// Clock value in real time at MAP time `s` on a piece boundary.
    pub fn real_time_of(&self, s: f64) -> f64 {
        let k = self.pieces.partition_point(|p| p.s1 < s);
        let p = &self.pieces[k.min(self.pieces.len() - 1)];
        if s <= p.s0 {
            p.c0 * self.scale()
        } else if s >= p.s1 {
            p.c1 * self.scale()
        } else {
            let c = if p.exact {
                p.c0 + exact_clock(p.xi0, p.slope(), s - p.s0, self.alpha)
            } else {
                p.c0 + (p.c1 - p.c0) * (s - p.s0) / (p.s1 - p.s0)
            };
            c * self.scale()
        }
    }

    /// MAP time `phi(t x0^{-alpha})`.
    pub fn phi(&self, t: f64) -> Result<f64> {
        let c = t / self.scale();
        let k = self.pieces.partition_point(|p| p.c1 < c);
        if k >= self.pieces.len() {
            return Err(Error::BeyondRange(t));
        }
        Ok(self.pieces[k].invert(c, self.alpha))
    }

    /// `(X(t), J(t))`, the cemetery after the lifetime.
    pub fn state_at(&self, t: f64) -> Result<State> {
        if t >= self.lifetime {
            return Ok(State::Cemetery);
        }
        let mut c = t / self.scale();
        let mut k = self.pieces.partition_point(|p| p.c1 < c);
        if k >= self.pieces.len() {
            // Rounding slack when `t` is the horizon the path was cut at.
            let last = self.pieces.last().map_or(0.0, |p| p.c1);
            if self.end == EndReason::Horizon && c <= last * (1.0 + 1e-12) + 1e-300 {
                c = last;
                k = self.pieces.len() - 1;
            } else {
                return Err(Error::BeyondRange(t));
            }
        }
        let p = &self.pieces[k];
        // Jumps at a piece boundary belong to the next piece.
        let p = if c >= p.c1 && k + 1 < self.pieces.len() { &self.pieces[k + 1] } else { p };
        let s = p.invert(c, self.alpha);
        Ok(State::Alive { size: self.x0 * p.value_at(s).exp(), type_: p.type_ })
    }

    /// Jumps of `X` in real time.
    pub fn jumps(&self) -> Vec<SsmpJump> {
        let sc = self.scale();
        let mut out = Vec::with_capacity(self.base.jumps.len());
        let mut k = 0;
        for j in &self.base.jumps {
            while k + 1 < self.pieces.len() && self.pieces[k].s1 < j.time {
                k += 1;
            }
            let p = &self.pieces[k];
            let pre = self.x0 * p.xi1.exp();
            let post = pre * j.size.exp();
            out.push(SsmpJump { time: p.c1 * sc, pre, post, type_mark: j.type_mark, kind: j.kind, to_type: j.to_type });
        }
        out
    }

    /// `(X, J)` at the end of the sample.
    pub fn end_state(&self) -> (f64, TypeIndex) {
        let p = self.pieces.last().expect("non-empty path");
        (self.x0 * p.xi1.exp(), p.type_)
    }
}

/// Time-changes a sampled MAP path. The path must start at `xi = 0`.
pub fn lamperti_transform(path: &MapPath, x0: f64, alpha: f64) -> Result<SsmpPath> {
    lamperti_transform_tol(path, x0, alpha, CLOCK_TOL)
}

pub fn lamperti_transform_tol(path: &MapPath, x0: f64, alpha: f64, tol: f64) -> Result<SsmpPath> {
    if !(x0 > 0.0) {
        return Err(Error::InvalidArgument(format!("x0 must be positive, got {x0}")));
    }
    let mut pieces = Vec::new();
    let mut c = 0.0;
    for seg in &path.segments {
        segment_pieces(seg, alpha, tol, c, |p| {
            pieces.push(p);
            true
        });
        c = pieces.last().map_or(c, |p: &Piece| p.c1);
    }
    let lifetime = if path.killed_at.is_some() { x0.powf(alpha) * c } else { f64::INFINITY };
    let end = if path.killed_at.is_some() { EndReason::Killed } else { EndReason::MapHorizon };
    Ok(SsmpPath { base: path.clone(), x0, alpha, lifetime, pieces, end })
}

/// When to stop a streaming simulation of `X`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    /// Real-time horizon.
    pub horizon: f64,
    /// Stop once `X` is observed below this size (0 disables).
    pub min_size: f64,
    /// MAP-time horizon.
    pub map_horizon: f64,
    /// Clock grid tolerance.
    pub clock_tol: f64,
}

impl StopRule {
    pub fn horizon(t: f64) -> Self {
        Self { horizon: t, min_size: 0.0, map_horizon: f64::INFINITY, clock_tol: CLOCK_TOL }
    }
}

/// Simulates `X` from `(x0, i)` until the first stop condition.
pub fn simulate_ssmp(prep: &Prepared, x0: f64, i: TypeIndex, alpha: f64, stop: &StopRule, rng: &mut Rng) -> SsmpPath {
    let sc = x0.powf(alpha);
    let c_target = stop.horizon / sc;
    let log_floor = if stop.min_size > 0.0 { (stop.min_size / x0).ln() } else { f64::NEG_INFINITY };
    let mut sampler = MapSampler::new(prep, i, 0.0);
    let mut base = MapPath { start_type: i, segments: vec![], jumps: vec![], horizon: stop.map_horizon, killed_at: None };
    let mut pieces: Vec<Piece> = Vec::new();
    let mut c = 0.0;
    let chunk = 4.0;
    if log_floor > 0.0 {
        pieces.push(Piece { s0: 0.0, s1: 0.0, xi0: 0.0, xi1: 0.0, c0: 0.0, c1: 0.0, type_: i, exact: true });
        base.segments.push(Segment { start_time: 0.0, duration: 0.0, start_value: 0.0, type_: i, drift: 0.0, sigma: 0.0, gauss_incr: 0.0, bridge_seed: 0 });
        base.horizon = 0.0;
        return SsmpPath { base, x0, alpha, lifetime: f64::INFINITY, pieces, end: EndReason::Small };
    }
    loop {
        let target = (sampler.time + chunk).min(stop.map_horizon);
        let (seg, ev) = sampler.step(target, rng);
        // Clock over the stretch, cut at the horizon or at the size floor.
        let mut cut: Option<(f64, f64, EndReason)> = None;
        let start_len = pieces.len();
        segment_pieces(&seg, alpha, stop.clock_tol, c, |p| {
            if p.c1 >= c_target {
                let s = p.invert(c_target, alpha);
                let v = p.value_at(s);
                let mut q = p;
                q.s1 = s;
                q.xi1 = v;
                q.c1 = c_target.max(p.c0);
                pieces.push(q);
                cut = Some((s, v, EndReason::Horizon));
                return false;
            }
            pieces.push(p);
            if p.xi1 < log_floor {
                cut = Some((p.s1, p.xi1, EndReason::Small));
                return false;
            }
            true
        });
        if pieces.len() == start_len {
            pieces.push(Piece { s0: seg.start_time, s1: seg.end_time(), xi0: seg.start_value, xi1: seg.end_value(), c0: c, c1: c, type_: seg.type_, exact: true });
        }
        c = pieces.last().unwrap().c1;
        if let Some((s, v, why)) = cut {
            let mut seg = seg;
            seg.duration = s - seg.start_time;
            seg.gauss_incr = v - seg.start_value - seg.drift * seg.duration;
            base.segments.push(seg);
            base.horizon = s;
            return SsmpPath { base, x0, alpha, lifetime: f64::INFINITY, pieces, end: why };
        }
        base.segments.push(seg);
        if alpha * sampler.value < ABSORB && alpha != 0.0 {
            if let Event::Jump(j) = ev {
                base.jumps.push(j);
            }
            base.horizon = sampler.time;
            return SsmpPath { base, x0, alpha, lifetime: sc * c, pieces, end: EndReason::Absorbed };
        }
        match ev {
            Event::Killed => {
                base.killed_at = Some(sampler.time);
                base.horizon = sampler.time;
                return SsmpPath { base, x0, alpha, lifetime: sc * c, pieces, end: EndReason::Killed };
            }
            Event::Horizon => {
                if sampler.time >= stop.map_horizon {
                    return SsmpPath { base, x0, alpha, lifetime: f64::INFINITY, pieces, end: EndReason::MapHorizon };
                }
                // Chunk boundary: the next stretch continues from here.
            }
            Event::Jump(j) => {
                base.jumps.push(j);
                if sampler.value < log_floor {
                    let t = sampler.time;
                    let v = sampler.value;
                    pieces.push(Piece { s0: t, s1: t, xi0: v, xi1: v, c0: c, c1: c, type_: sampler.type_, exact: true });
                    base.segments.push(Segment { start_time: t, duration: 0.0, start_value: v, type_: sampler.type_, drift: 0.0, sigma: 0.0, gauss_incr: 0.0, bridge_seed: 0 });
                    base.horizon = t;
                    return SsmpPath { base, x0, alpha, lifetime: f64::INFINITY, pieces, end: EndReason::Small };
                }
            }
        }
    }
}

/// `(X(t), J(t))` from `(x0, i)`; the cemetery if killed before `t`.
pub fn state_at(prep: &Prepared, x0: f64, i: TypeIndex, alpha: f64, t: f64, rng: &mut Rng) -> State {
    let p = simulate_ssmp(prep, x0, i, alpha, &StopRule::horizon(t), rng);
    if matches!(p.end, EndReason::Killed | EndReason::Absorbed) {
        State::Cemetery
    } else {
        let (x, j) = p.end_state();
        State::Alive { size: x, type_: j }
    }
}

/// Samples of `c X(c^{-alpha} t)` under `P_{x,i}` and of `X(t)` under `P_{cx,i}`.
#[derive(Clone, Debug)]
pub struct ScalingSamples {
    pub rescaled: Vec<State>,
    pub direct: Vec<State>,
}

pub fn scaling_check(spec: &MapSpec<f64>, x: f64, i: TypeIndex, c: f64, alpha: f64, t: f64, reps: usize, seed: u64) -> Result<ScalingSamples> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument("scaling factor must be positive".into()));
    }
    let prep = Prepared::new(spec)?;
    let rescaled = replicate(mix(seed, 1), reps, |_, r| match state_at(&prep, x, i, alpha, c.powf(-alpha) * t, r) {
        State::Alive { size, type_ } => State::Alive { size: c * size, type_ },
        s => s,
    });
    let direct = replicate(mix(seed, 2), reps, |_, r| state_at(&prep, c * x, i, alpha, t, r));
    Ok(ScalingSamples { rescaled, direct })
}

/// One draw of `int_0^inf weight_{Theta} e^{alpha xi}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpFunctionalSample {
    pub value: f64,
    pub truncation_time: f64,
    pub tail_bound: f64,
    pub weighted: bool,
    pub start_type: TypeIndex,
}

/// Prepared sampler for exponential functionals.
#[derive(Clone, Debug)]
pub struct ExpFunctional {
    prep: Prepared,
    alpha: f64,
    eps_tail: f64,
    weights: Option<Vec<f64>>,
    max_weight: f64,
    gamma: f64,
    rem_w: Vec<f64>,
    rem_min_w: f64,
    rem_chi: f64,
    pub clock_tol: f64,
}

impl ExpFunctional {
    /// `weights[j]` multiplies the integrand while `Theta = j`; ratios
    /// relative to the start type are applied per sample.
    pub fn new(spec: &MapSpec<f64>, alpha: f64, eps_tail: f64, weights: Option<Vec<f64>>) -> Result<Self> {
        if !(eps_tail > 0.0) {
            return Err(Error::InvalidArgument("eps_tail must be positive".into()));
        }
        let prep = Prepared::new(spec)?;
        if spec.is_conservative() {
            let m = chi_prime(spec, 0.0, 1e-5)?;
            if alpha * m >= 0.0 || alpha == 0.0 {
                return Err(Error::Divergent(format!("alpha * chi'(0) = {:.4} is not negative", alpha * m)));
            }
        }
        let mut gamma = 1.0;
        let mut found = None;
        while gamma > 0.05 {
            let c = chi(spec, alpha * gamma)?;
            if c < 0.0 {
                found = Some(c);
                break;
            }
            gamma -= 0.1;
        }
        let rem_chi = found.ok_or_else(|| Error::Divergent("no gamma in (0, 1] with chi(alpha gamma) < 0".into()))?;
        let (_, w) = chi_w(spec, alpha * gamma)?;
        let rem_w: Vec<f64> = w.iter().copied().collect();
        let rem_min_w = rem_w.iter().copied().fold(f64::INFINITY, f64::min);
        let max_weight = weights.as_ref().map_or(1.0, |w| w.iter().copied().fold(0.0, f64::max));
        Ok(Self { prep, alpha, eps_tail, weights, max_weight, gamma, rem_w, rem_min_w, rem_chi, clock_tol: CLOCK_TOL })
    }

    fn remainder(&self, xi: f64, j: TypeIndex, wscale: f64) -> f64 {
        let g = self.gamma;
        let b = (self.alpha * g * xi).exp() * (self.rem_w[j] / self.rem_min_w) / (-self.rem_chi);
        b.powf(1.0 / g) * self.max_weight * wscale
    }

    pub fn sample(&self, start_type: TypeIndex, rng: &mut Rng) -> ExpFunctionalSample {
        let mut s = MapSampler::new(&self.prep, start_type, 0.0);
        let wscale = self.weights.as_ref().map_or(1.0, |w| 1.0 / w[start_type]);
        let mut total = 0.0;
        loop {
            let (seg, ev) = s.step(s.time + 2.0, rng);
            let wt = self.weights.as_ref().map_or(1.0, |w| w[seg.type_]) * wscale;
            let mut acc = 0.0;
            segment_pieces(&seg, self.alpha, self.clock_tol, 0.0, |p| {
                acc = p.c1;
                true
            });
            total += wt * acc;
            if ev == Event::Killed {
                return ExpFunctionalSample { value: total, truncation_time: s.time, tail_bound: 0.0, weighted: self.weights.is_some(), start_type };
            }
            let rem = self.remainder(s.value, s.type_, wscale);
            if rem < self.eps_tail * total {
                return ExpFunctionalSample { value: total, truncation_time: s.time, tail_bound: rem, weighted: self.weights.is_some(), start_type };
            }
        }
    }
}

/// Single draw of `I(alpha xi)`; use [`ExpFunctional`] in loops.
pub fn sample_exp_functional(spec: &MapSpec<f64>, start_type: TypeIndex, alpha: f64, eps_tail: f64, rng: &mut Rng) -> Result<ExpFunctionalSample> {
    Ok(ExpFunctional::new(spec, alpha, eps_tail, None)?.sample(start_type, rng))
}

/// Monte Carlo `E[I(alpha xi)^gamma]`, refused unless `chi(alpha gamma) < 0`.
pub fn exp_functional_moment(spec: &MapSpec<f64>, start_type: TypeIndex, alpha: f64, gamma: f64, reps: usize, seed: u64) -> Result<MeanSe> {
    if gamma > 0.0 {
        let c = chi(spec, alpha * gamma)?;
        if !(c < 0.0) {
            return Err(Error::MomentGuard(format!("chi(alpha * gamma) = {c:.4} >= 0")));
        }
    }
    let ef = ExpFunctional::new(spec, alpha, 1e-6, None)?;
    let xs = replicate(seed, reps, |_, r| ef.sample(start_type, r).value.powf(gamma));
    Ok(mean_se(&xs))
}

/// Importance-weighted draw from the entrance law at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntranceSample {
    pub size: f64,
    pub type_: TypeIndex,
    pub weight: f64,
}

/// `eta_t f = (1/(alpha m)) sum_i pi_i E'_i[ f((t/I)^{1/alpha}, i) / I ]`
/// with `I = I(alpha xi')` under the dual MAP.
pub fn entrance_law_sample(spec: &MapSpec<f64>, alpha: f64, t: f64, reps: usize, seed: u64) -> Result<Vec<EntranceSample>> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument("entrance law needs alpha > 0".into()));
    }
    let m = chi_prime(spec, 0.0, 1e-5)?;
    if !(m > 0.0) {
        return Err(Error::InvalidArgument(format!("mean drift chi'(0) = {m:.4} is not positive")));
    }
    let dual = dual_spec(spec)?;
    let pi = stationary_distribution(spec)?;
    let ef = ExpFunctional::new(&dual, alpha, 1e-6, None)?;
    let n = spec.n_types;
    Ok(replicate(seed, reps, |_, r| {
        let mut u = r.gen::<f64>();
        let mut i = n - 1;
        for k in 0..n {
            if u < pi[k] {
                i = k;
                break;
            }
            u -= pi[k];
        }
        let s = ef.sample(i, r);
        EntranceSample { size: (t / s.value).powf(1.0 / alpha), type_: i, weight: 1.0 / (alpha * m * s.value) }
    }))
}

/// Per-type comparison of `eta_t` with `(X(t), J(t))` started near 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntranceTypeCheck {
    pub type_: TypeIndex,
    pub ks: KsResult,
    pub direct_share: f64,
    pub eta_share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntranceComparison {
    pub per_type: Vec<EntranceTypeCheck>,
    /// Mean importance weight, i.e. the total mass of `eta_t`.
    pub mass: MeanSe,
}

/// Weighted `eta_t` samples against direct simulation from `(x0, 0)`.
pub fn entrance_check(spec: &MapSpec<f64>, alpha: f64, t: f64, x0: f64, reps: usize, seed: u64) -> Result<EntranceComparison> {
    let eta = entrance_law_sample(spec, alpha, t, reps, mix(seed, 1))?;
    let prep = Prepared::new(spec)?;
    let direct = replicate(mix(seed, 2), reps, |_, r| state_at(&prep, x0, 0, alpha, t, r));
    let w: Vec<f64> = eta.iter().map(|e| e.weight).collect();
    let wt: f64 = w.iter().sum();
    let mut per_type = Vec::new();
    for j in 0..spec.n_types {
        let (ea, eb): (Vec<f64>, Vec<f64>) = eta.iter().filter(|e| e.type_ == j).map(|e| (e.size, e.weight)).unzip();
        let da: Vec<f64> = direct.iter().filter_map(|s| s.alive().filter(|a| a.1 == j).map(|a| a.0)).collect();
        let ones = vec![1.0; da.len()];
        per_type.push(EntranceTypeCheck {
            type_: j,
            ks: ks_two_sample_weighted(&da, &ones, &ea, &eb),
            direct_share: da.len() as f64 / reps as f64,
            eta_share: eb.iter().sum::<f64>() / wt,
        });
    }
    Ok(EntranceComparison { per_type, mass: mean_se(&w) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::map::sample_map_path;
    use crate::rng::stream;

    #[test]
    fn zero_ordinator_is_constant() {
        let mut s = fixtures::drift(0.0);
        s.levy[0].drift = 0.0;
        let p = sample_map_path(&s, 0, 10.0, &mut stream(1, 0)).unwrap();
        let x = lamperti_transform(&p, 3.0, 1.0).unwrap();
        assert_eq!(x.state_at(5.0).unwrap(), State::Alive { size: 3.0, type_: 0 });
        assert!(x.lifetime.is_infinite());
    }

    #[test]
    fn alpha_zero_is_exponential() {
        let s = fixtures::m2();
        let p = sample_map_path(&s, 0, 3.0, &mut stream(2, 0)).unwrap();
        let x = lamperti_transform(&p, 2.0, 0.0).unwrap();
        for t in [0.3, 1.1, 2.9] {
            let (xi, j) = p.value_at(t).unwrap();
            let st = x.state_at(t).unwrap().alive().unwrap();
            assert!((st.0 - 2.0 * xi.exp()).abs() < 1e-12);
            assert_eq!(st.1, j);
        }
    }

    #[test]
    fn pure_drift_closed_form() {
        let p = sample_map_path(&fixtures::drift(1.0), 0, 5.0, &mut stream(3, 0)).unwrap();
        let x = lamperti_transform(&p, 1.0, 1.0).unwrap();
        for t in [0.5, 2.0, 100.0] {
            let (sz, _) = x.state_at(t).unwrap().alive().unwrap();
            assert!((sz - (1.0 + t)).abs() < 1e-12 * (1.0 + t), "{t} {sz}");
        }
        assert!(x.state_at(1e9).is_err());
    }

    #[test]
    fn clock_inversion_on_jump_grid() {
        let s = fixtures::m2();
        let p = sample_map_path(&s, 0, 4.0, &mut stream(4, 0)).unwrap();
        let x = lamperti_transform(&p, 1.5, -0.7).unwrap();
        for j in &p.jumps {
            let t = x.real_time_of(j.time);
            let s_back = x.phi(t).unwrap();
            assert!((s_back - j.time).abs() <= 1e-12 * j.time.max(1.0), "{} {}", s_back, j.time);
        }
    }

    #[test]
    fn streaming_and_transform_agree_without_gaussian() {
        let s = fixtures::e2();
        let prep = Prepared::new(&s).unwrap();
        let a = simulate_ssmp(&prep, 1.0, 0, 0.8, &StopRule::horizon(3.0), &mut stream(5, 0));
        let (x, _) = a.end_state();
        assert!((a.end_time() - 3.0).abs() < 1e-9);
        assert!(x > 0.0);
        let b = lamperti_transform(&a.base, 1.0, 0.8).unwrap();
        assert!((b.end_time() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn exp_functional_of_linear_descent() {
        let s = fixtures::drift(-1.0);
        let v = sample_exp_functional(&s, 0, 1.0, 1e-10, &mut stream(6, 0)).unwrap();
        assert!((v.value - 1.0).abs() < 1e-9);
        assert!(sample_exp_functional(&fixtures::drift(1.0), 0, 1.0, 1e-6, &mut stream(6, 0)).is_err());
        let m = exp_functional_moment(&s, 0, 1.0, 1.0, 10, 1).unwrap();
        assert!((m.mean - 1.0).abs() < 1e-5);
    }

    #[test]
    fn moment_guard() {
        let s = fixtures::brownian(2.0, 1.0);
        // chi(q) = q^2/2 - 2q, positive beyond the Cramer number 4.
        assert!(matches!(exp_functional_moment(&s, 0, 1.0, 5.0, 10, 1), Err(Error::MomentGuard(_))));
    }
}
