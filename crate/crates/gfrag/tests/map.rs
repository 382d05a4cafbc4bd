use gfrag::fixtures;
use gfrag::map::{chi, empirical_laplace_matrix, negated_spec, wald_martingale_mean};

#[test]
fn laplace_matrix_on_e2_matches_expm() {
    let s = fixtures::e2();
    for (k, z) in [0.0, 0.5].into_iter().enumerate() {
        let e = empirical_laplace_matrix(&s, z, 1.0, 20_000, 100 + k as u64).unwrap();
        assert!(e.max_z() < 4.0, "z = {z}: {}", e.max_z());
    }
}

#[test]
fn wald_martingale_on_e2_has_unit_mean() {
    let s = fixtures::e2();
    for (k, g) in [0.5, 1.5].into_iter().enumerate() {
        for i in 0..2 {
            let m = wald_martingale_mean(&s, g, 1.0, i, 20_000, 200 + k as u64).unwrap();
            assert!(m.z(1.0).abs() < 4.0, "gamma {g} type {i}: {m:?}");
        }
    }
}

#[test]
fn negation_of_brownian_drift() {
    // chi(z) = z^2 / 2 - 2 z for B - 2s.
    let s = negated_spec(&fixtures::brownian(2.0, 1.0));
    for z in [-1.0, 0.0, 0.7, 3.0] {
        assert!((chi(&s, z).unwrap() - (0.5 * z * z + 2.0 * z)).abs() < 1e-12);
    }
}
