use std::f64::consts::PI;

use laminate::limits::{annulus_k, annulus_mesh_k, compute_k, estimate_l, stretch_set};
use laminate::mesh::{build_annulus, RadialGrading, build_torus, linear_covector, EquivariantField, Homomorphism};
use laminate::penergy::report_for;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    /// Every ratio is `|w . g| / |g| <= |w|`, and some lattice direction is
    /// close to `w` once the box is large.
    #[test]
    fn k_is_bounded_by_the_affine_slope(
        s in -1.0f64..1.0, h in 0.5f64..2.0, r1 in -2.0f64..2.0, r2 in -2.0f64..2.0,
    ) {
        prop_assume!(r1.abs() + r2.abs() > 1e-3);
        let basis = [[1.0, 0.0], [s, h]];
        let w = linear_covector(basis, [r1, r2]);
        let l = w[0].hypot(w[1]);
        let k = compute_k(basis, &Homomorphism::new(vec![r1, r2]), 30).unwrap();
        prop_assert!(k.k <= l * (1.0 + 1e-12));
        prop_assert!(k.k >= 0.99 * l, "K {} vs |w| {}", k.k, l);
        let [m, n] = k.argmax.unwrap();
        prop_assert!(m > 0 || (m == 0 && n > 0));
    }

    #[test]
    fn k_scales_linearly_in_rho(a in 0.1f64..5.0) {
        let basis = [[1.0, 0.0], [0.3, 1.1]];
        let k1 = compute_k(basis, &Homomorphism::new(vec![1.0, 0.5]), 20).unwrap().k;
        let ka = compute_k(basis, &Homomorphism::new(vec![a, 0.5 * a]), 20).unwrap().k;
        prop_assert!((ka - a * k1).abs() < 1e-12 * ka);
    }
}

#[test]
fn annulus_constants() {
    assert!((annulus_k(2.0 * PI, 1.0) - 1.0).abs() < 1e-15);
    assert!((annulus_k(-PI, 0.5) - 1.0).abs() < 1e-15);
    let m = build_annulus(1.0, 2.0, 64, 4).unwrap();
    let k = annulus_mesh_k(&m, 2.0 * PI).unwrap();
    // the ring metric sits a third of the way into the first ring
    let r = RadialGrading::GeometricQuadratic.radii(1.0, 2.0, 4);
    assert!((k - 1.0 / (1.0 + (r[1] - 1.0) / 3.0)).abs() < 1e-12, "{k}");
    assert!(annulus_mesh_k(&build_torus([[1.0, 0.0], [0.0, 1.0]], 2).unwrap(), 1.0).is_none());
}

#[test]
fn affine_field_stretches_everywhere() {
    let basis = [[1.0, 0.0], [0.4, 1.2]];
    let m = build_torus(basis, 5).unwrap();
    let rho = Homomorphism::new(vec![1.0, 0.5]);
    let w = linear_covector(basis, [1.0, 0.5]);
    let u = EquivariantField::from_fn(&m, rho, |x| w[0] * x[0] + w[1] * x[1]);
    let l = w[0].hypot(w[1]);
    let set = stretch_set(&m, &u, l, 0.1).unwrap();
    assert_eq!(set.components.iter().map(|c| c.triangles.len()).sum::<usize>(), m.n_triangles());

    let reports: Vec<_> = [2.0, 4.0, 8.0].iter().map(|&p| report_for(&m, &u, p, 0.0)).collect();
    let est = estimate_l(&reports).unwrap();
    assert!((est.l_hat - l).abs() < 1e-12 && est.monotone);
    assert!(estimate_l(&reports[..1]).is_err());
    let mut shuffled = reports.clone();
    shuffled.swap(0, 2);
    assert!(estimate_l(&shuffled).is_err());
}
