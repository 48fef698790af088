use std::f64::consts::PI;

use laminate::duality::{conjugate, conjugate_exponent, dual_of, inverse_dual, mass_bound, pairing};
use laminate::mesh::{build_annulus, build_torus, EquivariantField, Homomorphism, PLOneForm};
use laminate::penergy::{minimize, SolverConfig};
use proptest::prelude::*;

fn random_form(n: usize, seed: &[f64]) -> PLOneForm {
    PLOneForm {
        covectors: (0..n).map(|t| [seed[t % seed.len()], seed[(t * 7 + 3) % seed.len()] - 0.2]).collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exponents_are_conjugate(p in 1.01f64..500.0) {
        let q = conjugate_exponent(p);
        prop_assert!((1.0 / p + 1.0 / q - 1.0).abs() < 1e-14);
    }

    /// `V = |U|^(p-2) *U` has `|V|^q = |U|^p` and maps back to `-U`.
    #[test]
    fn duality_map_is_an_involution_up_to_sign(
        seed in prop::collection::vec(-2.0f64..2.0, 5..12),
        p in 2.0f64..40.0,
    ) {
        let m = build_annulus(1.0, 2.0, 12, 4).unwrap();
        let u = random_form(m.n_triangles(), &seed);
        let q = conjugate_exponent(p);
        let v = dual_of(&m, &u, p);
        let back = inverse_dual(&m, &v, q);
        for t in 0..m.n_triangles() {
            let (nu, nv) = (m.norm(t, u.covectors[t]), m.norm(t, v.covectors[t]));
            prop_assert!((nv.powf(q) - nu.powf(p)).abs() <= 1e-9 * (1.0 + nu.powf(p)));
            let e = [back.covectors[t][0] + u.covectors[t][0], back.covectors[t][1] + u.covectors[t][1]];
            prop_assert!(m.norm(t, e) <= 1e-10 * (1.0 + nu));
            // U ^ V = |U|^p vol
            let w = m.wedge(t, u.covectors[t], v.covectors[t]);
            prop_assert!((w - nu.powf(p)).abs() <= 1e-9 * (1.0 + nu.powf(p)));
        }
    }

    #[test]
    fn pairing_is_antisymmetric(seed in prop::collection::vec(-1.0f64..1.0, 4..9)) {
        let m = build_torus([[1.0, 0.0], [0.2, 1.3]], 3).unwrap();
        let a = random_form(m.n_triangles(), &seed);
        let b = random_form(m.n_triangles(), &seed.iter().rev().cloned().collect::<Vec<_>>());
        prop_assert!((pairing(&m, &a, &b) + pairing(&m, &b, &a)).abs() < 1e-12);
    }
}

#[test]
fn conjugate_of_theta_on_annulus() {
    let m = build_annulus(1.0, 2.0, 32, 12).unwrap();
    let rho = Homomorphism::new(vec![2.0 * PI]);
    let st = minimize(&m, &rho, &SolverConfig::with_schedule(vec![2.0, 4.0, 8.0]), None).unwrap();
    for s in &st {
        let p = s.report.p;
        let c = conjugate(&m, &s.field, p).unwrap();
        assert!((c.pairing - 1.0).abs() < 1e-3, "p={p}: {}", c.pairing);
        assert!(c.form_mass <= mass_bound(m.total_area(), c.k_p, p) * (1.0 + 1e-12));
        assert!(c.dual.v.check(&m).is_ok());
    }
}

#[test]
fn conjugate_rejects_subquadratic_exponents() {
    let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 2).unwrap();
    let u = EquivariantField::from_fn(&m, Homomorphism::new(vec![1.0, 0.0]), |x| x[0]);
    assert!(conjugate(&m, &u, 1.5).is_err());
}
