use gfrag::cellsystem::{martingale_limit_samples, SimControls};
use gfrag::cumulants::{find_admissible, Which};
use gfrag::fixtures;
use gfrag::renewal::{affine_fixed_point, find_alpha, kesten_fixture, population_dynamics, tail_verify, OffspringLaw, SmoothingSpec, TailStatus};
use gfrag::rng::replicate;
use gfrag::stats::ks_two_sample;
use rand::Rng as _;

#[test]
fn pareto_tails_are_recovered() {
    for (k, a) in [2.0, 0.7].into_iter().enumerate() {
        let xs = replicate(40 + k as u64, 100_000, |_, r| (1.0 - r.gen::<f64>()).powf(-1.0 / a));
        let rep = tail_verify(&xs, a, 10_000, 50 + k as u64).unwrap();
        assert_eq!(rep.status, TailStatus::Pass, "{rep:?}");
    }
}

#[test]
fn exponential_tail_is_not_a_power_law() {
    let xs = replicate(41, 100_000, |_, r| -(1.0 - r.gen::<f64>()).ln());
    let rep = tail_verify(&xs, 1.0, 10_000, 51).unwrap();
    assert_ne!(rep.status, TailStatus::Pass);
}

#[test]
fn kesten_fixture_has_tail_two() {
    let kf = kesten_fixture();
    assert!(kf.contraction().unwrap() < 0.0);
    let xs: Vec<f64> = affine_fixed_point(&kf, None, 0, 100_000, 42).unwrap().into_iter().map(|x| x.value).collect();
    let rep = tail_verify(&xs, 2.0, 10_000, 52).unwrap();
    assert!((rep.primary.estimate / 2.0 - 1.0).abs() < 0.15, "{rep:?}");
}

#[test]
fn cascade_of_m2_matches_cell_trees() {
    let s = fixtures::m2();
    let lo = find_admissible(&s, 0.05, 30.0, Which::Lower).unwrap().lower.unwrap();
    let sm = SmoothingSpec { n_types: 2, law: OffspringLaw::CellBridge { spec: s.clone(), alpha: 0.0, omega: lo.omega, min_size: 0.1 }, v: lo.v.clone() };
    let bank = sm.bank(5000, 43).unwrap();
    let fa = find_alpha(&sm, 0.3, 3.0, Some(&bank)).unwrap();
    assert!((fa.alpha - 1.0).abs() < 0.05, "{fa:?}");
    let pd = population_dynamics(&sm, &bank, 5000, 10, 100, 44).unwrap();
    let ctl = SimControls { max_generation: 30, min_size: 1e-2, horizon: f64::INFINITY };
    let trees: Vec<f64> = martingale_limit_samples(&s, 1.0, 0, 0.0, &lo, &ctl, 5000, 45).unwrap().into_iter().map(|x| x.value).collect();
    let ks = ks_two_sample(&pd.pools[0], &trees);
    for m in pd.means.last().unwrap() {
        assert!(m.z(1.0).abs() < 4.0, "{m:?}");
    }
    assert!(ks.p > 1e-3, "{ks:?}");
}
