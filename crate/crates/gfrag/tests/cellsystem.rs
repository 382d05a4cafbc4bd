use gfrag::cellsystem::{
    genealogical_martingale, martingale_limit_samples, simulate_tree, snapshot, temporal_martingale, terminal_value, SimControls,
};
use gfrag::cumulants::{find_admissible, Which};
use gfrag::fixtures;
use gfrag::rng::{replicate, stream};
use gfrag::stats::mean_se;
use rand::Rng as _;

#[test]
fn uneven_split_martingales_have_unit_mean() {
    // Roots 2 and 3 with v = (1).
    let s = fixtures::uneven_split();
    let a = find_admissible(&s, 0.05, 30.0, Which::Both).unwrap();
    let lo = a.lower.unwrap();
    let hi = a.upper.unwrap();
    assert!((lo.omega - 2.0).abs() < 1e-9 && (hi.omega - 3.0).abs() < 1e-9);
    let ctl = SimControls { max_generation: 4, min_size: 1e-3, horizon: f64::INFINITY };
    let vals = replicate(21, 2000, |_, r| {
        let tree = simulate_tree(&s, 1.0, 0, 0.0, &ctl, r).unwrap();
        (0..4)
            .map(|n| {
                let a = genealogical_martingale(&tree, lo.omega, &lo.v, n).unwrap().total();
                let b = genealogical_martingale(&tree, hi.omega, &hi.v, n).unwrap().total();
                (a, b)
            })
            .collect::<Vec<_>>()
    });
    for n in 0..4 {
        let a = mean_se(&vals.iter().map(|v| v[n].0).collect::<Vec<_>>());
        let b = mean_se(&vals.iter().map(|v| v[n].1).collect::<Vec<_>>());
        assert!(a.z(1.0).abs() < 4.0, "omega- n = {n}: {a:?}");
        assert!(b.z(1.0).abs() < 4.0, "omega+ n = {n}: {b:?}");
    }
}

#[test]
fn temporal_martingale_with_ledger_has_mean_v() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let ctl = SimControls { max_generation: 200, min_size: 1e-3, horizon: 1.0 };
    let vals = replicate(22, 1000, |_, r| {
        let tree = simulate_tree(&s, 1.0, 0, -0.5, &ctl, r).unwrap();
        temporal_martingale(&snapshot(&tree, 1.0).unwrap(), lo.omega, &lo.v).total()
    });
    let m = mean_se(&vals);
    assert!(m.z(lo.v[0]).abs() < 4.0, "{m:?}");
}

#[test]
fn limit_samples_agree_with_terminal_values() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let ctl = SimControls { max_generation: 6, min_size: 1e-2, horizon: f64::INFINITY };
    let xs = martingale_limit_samples(&s, 1.0, 0, 0.0, &lo, &ctl, 2000, 23).unwrap();
    let m = mean_se(&xs.iter().map(|x| x.value).collect::<Vec<_>>());
    assert!(m.z(1.0).abs() < 4.0, "{m:?}");
    let mut r = stream(24, 0);
    for _ in 0..20 {
        let tree = simulate_tree(&s, 1.0, 1, 0.0, &ctl, &mut stream(r.gen(), 0)).unwrap();
        let g = genealogical_martingale(&tree, lo.omega, &lo.v, ctl.max_generation).unwrap();
        assert!((g.total() - terminal_value(&tree, lo.omega, &lo.v)).abs() < 1e-9 * g.total().max(1.0));
    }
}

#[test]
fn snapshot_sizes_are_sorted_and_below_horizon() {
    let s = fixtures::m2();
    let ctl = SimControls { max_generation: 50, min_size: 1e-3, horizon: 2.0 };
    let tree = simulate_tree(&s, 1.0, 0, -0.5, &ctl, &mut stream(25, 0)).unwrap();
    let snap = snapshot(&tree, 1.5).unwrap();
    assert!(snap.particles.windows(2).all(|w| w[0].size >= w[1].size));
    assert!(snap.ledger.iter().all(|x| x.time <= 1.5));
    assert!(snapshot(&tree, 3.0).is_err());
}
