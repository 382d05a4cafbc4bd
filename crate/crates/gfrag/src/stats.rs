//! Estimators used by the verification suites.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn ksum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut k = Kahan::default();
    xs.into_iter().for_each(|x| k.add(x));
    k.value()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// Number of standard errors separating the mean from `target`.
    pub fn z(&self, target: f64) -> f64 {
        if self.se == 0.0 {
            if self.mean == target {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (self.mean - target).abs() / self.se
        }
    }
}

pub fn mean_se(xs: &[f64]) -> MeanSe {
    let n = xs.len();
    if n == 0 {
        return MeanSe { mean: f64::NAN, se: f64::NAN, n };
    }
    let mean = ksum(xs.iter().copied()) / n as f64;
    let var = if n > 1 {
        ksum(xs.iter().map(|x| (x - mean) * (x - mean))) / (n - 1) as f64
    } else {
        0.0
    };
    MeanSe { mean, se: (var / n as f64).sqrt(), n }
}

/// Empirical quantile of a sorted slice, linear interpolation.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn quantile(xs: &[f64], p: f64) -> f64 {
    let mut s = xs.to_vec();
    s.sort_by(f64::total_cmp);
    quantile_sorted(&s, p)
}

/// Kolmogorov survival function `Q(l) = 2 sum (-1)^(k-1) exp(-2 k^2 l^2)`.
pub fn kolmogorov_q(l: f64) -> f64 {
    if l < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * l * l).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-17 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub d: f64,
    pub p: f64,
    pub n_a: f64,
    pub n_b: f64,
}

/// Two-sample Kolmogorov-Smirnov test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let wa = vec![1.0; a.len()];
    let wb = vec![1.0; b.len()];
    ks_two_sample_weighted(a, &wa, b, &wb)
}

/// Weighted two-sample KS; sample sizes are replaced by the effective sizes
/// `(sum w)^2 / sum w^2`.
pub fn ks_two_sample_weighted(a: &[f64], wa: &[f64], b: &[f64], wb: &[f64]) -> KsResult {
    let prep = |x: &[f64], w: &[f64]| {
        let mut v: Vec<(f64, f64)> = x.iter().copied().zip(w.iter().copied()).filter(|p| p.1 > 0.0).collect();
        v.sort_by(|p, q| p.0.total_cmp(&q.0));
        let tot = ksum(v.iter().map(|p| p.1));
        let sq = ksum(v.iter().map(|p| p.1 * p.1));
        let neff = if sq > 0.0 { tot * tot / sq } else { 0.0 };
        (v, tot, neff)
    };
    let (va, ta, na) = prep(a, wa);
    let (vb, tb, nb) = prep(b, wb);
    if va.is_empty() || vb.is_empty() {
        return KsResult { d: f64::NAN, p: f64::NAN, n_a: na, n_b: nb };
    }
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0, 0.0);
    let mut d: f64 = 0.0;
    while i < va.len() || j < vb.len() {
        let x = match (va.get(i), vb.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            _ => unreachable!(),
        };
        while i < va.len() && va[i].0 <= x {
            fa += va[i].1 / ta;
            i += 1;
        }
        while j < vb.len() && vb[j].0 <= x {
            fb += vb[j].1 / tb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    let ne = na * nb / (na + nb);
    let s = ne.sqrt();
    let p = kolmogorov_q((s + 0.12 + 0.11 / s) * d);
    KsResult { d, p, n_a: na, n_b: nb }
}

/// Hill estimate of the tail index from the `k` largest values.
///
/// `desc` must hold at least `k + 1` values sorted in decreasing order.
pub fn hill_sorted(desc: &[f64], k: usize) -> f64 {
    let xk = desc[k].ln();
    let s = ksum(desc[..k].iter().map(|x| x.ln() - xk));
    k as f64 / s
}

fn top_desc(xs: &[f64], m: usize) -> Vec<f64> {
    let mut v = xs.to_vec();
    let m = m.min(v.len());
    if m < v.len() {
        v.select_nth_unstable_by(m, |a, b| b.total_cmp(a));
        v.truncate(m + 1);
    }
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// Tail-index estimate with bootstrap interval, in the estimator-report layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub k_frac: f64,
    pub n: usize,
    pub rank_slope: f64,
}

pub const DEFAULT_K_FRACS: [f64; 4] = [0.005, 0.01, 0.02, 0.05];

/// Hill estimator for each fraction in `k_fracs`, with a `resamples`-fold
/// bootstrap 95% interval and a log-log rank-regression cross-check.
pub fn tail_exponent(
    samples: &[f64],
    k_fracs: &[f64],
    resamples: usize,
    min_samples: usize,
    rng: &mut Rng,
) -> Result<Vec<TailEstimate>> {
    let n = samples.len();
    if n < min_samples {
        return Err(Error::TooFewSamples { need: min_samples, got: n });
    }
    if samples.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidArgument("tail samples must be positive and finite".into()));
    }
    let ks: Vec<usize> = k_fracs.iter().map(|f| ((f * n as f64).round() as usize).clamp(2, n - 1)).collect();
    let kmax = *ks.iter().max().unwrap();
    let top = top_desc(samples, kmax + 1);
    let mut boots: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); ks.len()];
    let mut buf = vec![0.0; n];
    for _ in 0..resamples {
        for b in buf.iter_mut() {
            *b = samples[rng.gen_range(0..n)];
        }
        let t = top_desc(&buf, kmax + 1);
        for (slot, &k) in boots.iter_mut().zip(&ks) {
            slot.push(hill_sorted(&t, k));
        }
    }
    Ok(ks
        .iter()
        .zip(k_fracs)
        .zip(boots)
        .map(|((&k, &f), mut b)| {
            b.sort_by(f64::total_cmp);
            let est = hill_sorted(&top, k);
            let se = mean_se(&b).se * (b.len() as f64).sqrt();
            TailEstimate {
                estimate: est,
                se,
                ci_lo: quantile_sorted(&b, 0.025),
                ci_hi: quantile_sorted(&b, 0.975),
                k_frac: f,
                n,
                rank_slope: rank_slope_sorted(&top, k, n),
            }
        })
        .collect())
}

/// Tail index from least squares of `log(rank/n)` on `log x` over the top `k`.
fn rank_slope_sorted(desc: &[f64], k: usize, n: usize) -> f64 {
    let pts: Vec<(f64, f64)> =
        (0..k).map(|r| (desc[r].ln(), ((r as f64 + 0.5) / n as f64).ln())).collect();
    let mx = ksum(pts.iter().map(|p| p.0)) / k as f64;
    let my = ksum(pts.iter().map(|p| p.1)) / k as f64;
    let sxy = ksum(pts.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let sxx = ksum(pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    -sxy / sxx
}

pub fn rank_slope(samples: &[f64], k: usize) -> f64 {
    let top = top_desc(samples, k + 1);
    rank_slope_sorted(&top, k, samples.len())
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn pareto(a: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut r = stream(seed, 0);
        (0..n).map(|_| (1.0 - r.gen::<f64>()).powf(-1.0 / a)).collect()
    }

    #[test]
    fn loglog_slope_of_power() {
        let x = [1.0, 2.0, 5.0, 10.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-1.7)).collect();
        assert!((loglog_slope(&x, &y) + 1.7).abs() < 1e-12);
    }

    #[test]
    fn kahan_recovers_small_terms() {
        let mut k = Kahan::default();
        k.add(1.0);
        for _ in 0..10 {
            k.add(1e-16);
        }
        assert!((k.value() - (1.0 + 1e-15)).abs() < 1e-16);
    }

    #[test]
    fn kolmogorov_known_values() {
        assert!((kolmogorov_q(1.0) - 0.26999967).abs() < 1e-6);
        assert!((kolmogorov_q(1.36) - 0.0494).abs() < 1e-3);
    }

    #[test]
    fn ks_same_and_shifted() {
        let mut r = stream(1, 0);
        let a: Vec<f64> = (0..4000).map(|_| r.gen()).collect();
        let b: Vec<f64> = (0..4000).map(|_| r.gen()).collect();
        let c: Vec<f64> = b.iter().map(|x| x + 0.1).collect();
        assert!(ks_two_sample(&a, &b).p > 0.01);
        assert!(ks_two_sample(&a, &c).p < 1e-6);
    }

    #[test]
    fn hill_on_pareto() {
        let xs = pareto(2.0, 20_000, 3);
        let mut r = stream(4, 0);
        let est = tail_exponent(&xs, &[0.05], 200, 10_000, &mut r).unwrap();
        assert!(est[0].ci_lo < 2.0 && 2.0 < est[0].ci_hi, "{:?}", est);
        assert!((est[0].rank_slope - 2.0).abs() < 0.3);
    }

    #[test]
    fn too_few_samples() {
        let mut r = stream(4, 0);
        assert!(tail_exponent(&[1.0, 2.0], &[0.1], 10, 100, &mut r).is_err());
    }
}
