use gfrag::cumulants::*;
use gfrag::fixtures;
use gfrag::map::{matrix_exponent, tilt_spec, validate_spec};

// Independent dense solve of the coupled system K_1 = K_2 = 0 in (omega, v_2).
const OMEGA_MINUS: f64 = 1.1890554123966788;
const V_MINUS: f64 = 1.010032912467555;
const OMEGA_PLUS: f64 = 7.11413906899863;
const V_PLUS: f64 = 0.9381448936849632;

fn m2_pairs() -> (AdmissiblePair<f64>, AdmissiblePair<f64>) {
    let a = find_admissible(&fixtures::m2(), 0.05, 30.0, Which::Both).unwrap();
    (a.lower.unwrap(), a.upper.unwrap())
}

#[test]
fn m2_roots_match_dense_solve() {
    let (lo, hi) = m2_pairs();
    assert!((lo.omega - OMEGA_MINUS).abs() < 1e-9, "{}", lo.omega);
    assert!((hi.omega - OMEGA_PLUS).abs() < 1e-9, "{}", hi.omega);
    assert!((lo.v[1] - V_MINUS).abs() < 1e-9);
    assert!((hi.v[1] - V_PLUS).abs() < 1e-9);
    assert!(lo.residual < 1e-9 && hi.residual < 1e-9);
    let s = fixtures::m2();
    for p in [&lo, &hi] {
        for i in 0..2 {
            assert!(multitype_cumulant(&s, i, p.omega, &p.v).abs() < 1e-9);
        }
    }
}

#[test]
fn m2_cumulant_matrix_by_hand() {
    let s = fixtures::m2();
    let a = cumulant_matrix(&s, 1.0);
    let psi1 = 0.07 + 0.01 + 0.8 * (0.5 - 1.0) + 0.3 * (1.0 / 3.0 - 1.0);
    let g12 = 0.5 * (-0.2f64).exp() + 0.5 * 0.1f64.exp();
    let k1 = psi1 - 1.0 + 0.8 * 0.5 + 0.5 * (1.0 - (-0.2f64).exp());
    let psi2 = 0.12 + 0.5 - 1.0;
    let k2 = psi2 - 2.0 + 0.5;
    assert!((a[(0, 0)] - k1).abs() < 1e-14);
    assert!((a[(0, 1)] - (0.3 * 2.0 / 3.0 + g12)).abs() < 1e-14);
    assert!((a[(1, 0)] - 2.0).abs() < 1e-14);
    assert!((a[(1, 1)] - k2).abs() < 1e-14);
}

#[test]
fn drifted_split_roots_bracket_minimum() {
    // kappa(q) = 0.1 q + 2^{1-q} - 1, minimised near q = 3.79.
    let s = fixtures::drifted_split(0.1);
    let k = |q: f64| 0.1 * q + 2f64.powf(1.0 - q) - 1.0;
    let r1 = bisect(k, 0.5, 3.79);
    let r2 = bisect(k, 3.79, 30.0);
    let a = find_admissible(&s, 0.05, 30.0, Which::Both).unwrap();
    assert!((a.lower.unwrap().omega - r1).abs() < 1e-9);
    assert!((a.upper.unwrap().omega - r2).abs() < 1e-9);
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if f(a).signum() == f(m).signum() {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

#[test]
fn lambda_convex_on_grid() {
    let s = fixtures::m2();
    let qs: Vec<f64> = (0..20).map(|k| 0.2 + 0.45 * k as f64).collect();
    let l: Vec<f64> = qs.iter().map(|q| lambda_tilde(&s, *q).unwrap()).collect();
    for k in 1..19 {
        assert!(l[k + 1] - 2.0 * l[k] + l[k - 1] >= -1e-8);
    }
}

#[test]
fn spine_exponent_properties() {
    let s = fixtures::m2();
    let (lo, hi) = m2_pairs();
    let sm = spine_exponent(&s, &lo);
    let sp = spine_exponent(&s, &hi);
    assert!(sm.chi(0.0).unwrap().abs() < 1e-10);
    assert!(sp.chi(0.0).unwrap().abs() < 1e-10);
    let h = 1e-5;
    let dm = (sm.chi(h).unwrap() - sm.chi(-h).unwrap()) / (2.0 * h);
    let dp = (sp.chi(h).unwrap() - sp.chi(-h).unwrap()) / (2.0 * h);
    assert!(dm < 0.0 && dp > 0.0, "{dm} {dp}");

    // Two-exponent identity and its eigenvector.
    let (c, w) = sm.chi_w(hi.omega - lo.omega).unwrap();
    assert!(c.abs() < 1e-8, "{c}");
    let ratio = (hi.v[1] / lo.v[1]) / (hi.v[0] / lo.v[0]);
    assert!((w[1] / w[0] - ratio).abs() < 1e-8);

    // Off-diagonal rates and sanity of the geometric sums.
    let f0 = sm.eval(0.0);
    assert!((f0[(0, 1)] - sm.rate(0, 1)).abs() < 1e-15);
    assert!((f0[(1, 0)] - sm.rate(1, 0)).abs() < 1e-15);
    for i in 0..2 {
        assert!(sm.mu(i) < 1.0 && sp.mu(i) < 1.0);
    }
}

#[test]
fn materialised_spine_matches_evaluator() {
    let s = fixtures::m2();
    let (lo, hi) = m2_pairs();
    for p in [&lo, &hi] {
        let se = spine_exponent(&s, p);
        let spec = se.spine_spec();
        validate_spec(&spec).unwrap();
        for z in [-1.0, -0.5, 0.0, 0.5, 1.0] {
            let d = (matrix_exponent(&spec, z) - se.eval(z)).amax();
            assert!(d < 1e-10, "{d}");
        }
    }
}

#[test]
fn spines_related_by_tilt() {
    let s = fixtures::m2();
    let (lo, hi) = m2_pairs();
    let minus = spine_exponent(&s, &lo).spine_spec();
    let plus = spine_exponent(&s, &hi);
    let tilted = tilt_spec(&minus, hi.omega - lo.omega).unwrap();
    for z in [-1.0, -0.5, 0.0, 0.5, 1.0] {
        let d = (matrix_exponent(&tilted, z) - plus.eval(z)).amax();
        assert!(d < 1e-9, "{d}");
    }
}

#[test]
fn single_type_spine_is_shifted_kappa() {
    let s = fixtures::drifted_split(0.1);
    let a = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap();
    let p = a.lower.unwrap();
    let se = spine_exponent(&s, &p);
    for q in [-0.5, 0.3, 1.0] {
        assert!((se.eval(q)[(0, 0)] - kappa(&s, 0, p.omega + q)).abs() < 1e-14);
    }
}

#[test]
fn stopped_martingale_recovers_v() {
    let s = fixtures::m2();
    let (lo, hi) = m2_pairs();
    for p in [&lo, &hi] {
        for i in 0..2 {
            let m = stopped_martingale_mean(&s, p, i, 20_000, 11 + i as u64).unwrap();
            assert!(m.z(p.v[i]).abs() < 3.0, "omega {} type {i}: {:?} vs {}", p.omega, m, p.v[i]);
        }
    }
}

#[test]
fn uneven_split_exact_roots() {
    let a = find_admissible(&fixtures::uneven_split(), 0.05, 30.0, Which::Both).unwrap();
    assert!((a.lower.unwrap().omega - 2.0).abs() < 1e-12);
    assert!((a.upper.unwrap().omega - 3.0).abs() < 1e-12);
}
