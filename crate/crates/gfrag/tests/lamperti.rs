use gfrag::fixtures;
use gfrag::lamperti::{entrance_check, exp_functional_moment, scaling_check, State};
use gfrag::stats::ks_two_sample;

#[test]
fn dufresne_mean() {
    // I(2 xi) for xi = B - 2s is 1 / (2 Gamma(2, 1)), with mean 1/2.
    let m = exp_functional_moment(&fixtures::brownian(2.0, 1.0), 0, 2.0, 1.0, 20_000, 11).unwrap();
    assert!(m.z(0.5).abs() < 4.0, "{m:?}");
}

#[test]
fn moment_guard_refuses_infinite_moments() {
    // chi(2 * 3) = 18 - 12 > 0.
    assert!(exp_functional_moment(&fixtures::brownian(2.0, 1.0), 0, 2.0, 3.0, 1000, 1).is_err());
}

#[test]
fn entrance_law_matches_small_start() {
    let r = entrance_check(&fixtures::e2(), 1.0, 1.0, 1e-3, 5000, 12).unwrap();
    for t in &r.per_type {
        assert!(t.ks.p > 1e-3, "type {}: {:?}", t.type_, t.ks);
    }
    assert!(r.mass.z(1.0).abs() < 4.0, "{:?}", r.mass);
}

#[test]
fn self_similarity_of_m2() {
    let s = scaling_check(&fixtures::m2(), 1.0, 0, 2.0, 0.5, 1.0, 5000, 13).unwrap();
    // Cemetery maps to 0 so both arms keep their killed mass.
    let size = |v: &[State]| -> Vec<f64> {
        v.iter()
            .map(|x| match x {
                State::Alive { size, .. } => *size,
                State::Cemetery => 0.0,
            })
            .collect()
    };
    assert!(ks_two_sample(&size(&s.rescaled), &size(&s.direct)).p > 1e-3);
}
