use gfrag::cellsystem::SimControls;
use gfrag::cumulants::{find_admissible, Which};
use gfrag::fixtures;
use gfrag::spine::{rebuild_check, spine_equivalence_test};

#[test]
fn tagged_leaf_matches_direct_spine_on_m2() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let ctl = SimControls { max_generation: 200, min_size: 1e-3, horizon: 1.0 };
    let r = spine_equivalence_test(&s, &lo, 1.0, 0, -0.5, 1.0, &ctl, 2000, 31).unwrap();
    for t in &r.per_type {
        assert!(t.ks.p > 1e-3, "type {}: {:?}", t.type_, t.ks);
    }
    for m in &r.many_to_one {
        assert!(m.z.abs() < 4.0, "{m:?}");
    }
    assert!(r.flagged_weight < 0.01);
}

#[test]
fn subtrees_off_the_spine_are_fresh() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let ctl = SimControls { max_generation: 6, min_size: 1e-3, horizon: f64::INFINITY };
    let r = rebuild_check(&s, &lo, 1.0, 0, -0.5, &ctl, 4, 0.05, 2000, 2000, 32).unwrap();
    assert!(r.subtrees > 0);
    for t in r.per_type.iter().chain(&r.counts) {
        assert!(t.ks.p > 1e-3, "type {}: {:?}", t.type_, t.ks);
    }
}

#[test]
fn tagging_generation_must_be_simulated() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let ctl = SimControls { max_generation: 4, min_size: 1e-3, horizon: f64::INFINITY };
    assert!(rebuild_check(&s, &lo, 1.0, 0, -0.5, &ctl, 4, 0.05, 10, 10, 1).is_err());
}
