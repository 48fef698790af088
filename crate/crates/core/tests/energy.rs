use std::f64::consts::PI;

use laminate::mesh::{build_annulus, build_torus, linear_covector, EquivariantField, Homomorphism};
use laminate::penergy::{energy, gradient, kp_from_energy, minimize, SolverConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// The affine map has `|du| = |w|` everywhere.
    #[test]
    fn affine_energy_is_slope_power_times_area(s in -0.8f64..0.8, h in 0.6f64..1.5, p in 2.0f64..12.0) {
        let basis = [[1.0, 0.0], [s, h]];
        let rho = [0.7, -0.4];
        let m = build_torus(basis, 4).unwrap();
        let w = linear_covector(basis, rho);
        let u = EquivariantField::from_fn(&m, Homomorphism::new(rho.to_vec()), |x| w[0] * x[0] + w[1] * x[1]);
        let want = w[0].hypot(w[1]).powf(p) * h;
        prop_assert!((energy(&m, &u, p, 0.0) - want).abs() <= 1e-10 * want);
    }

    #[test]
    fn gradient_matches_finite_differences(seed in 0u64..1000, p in 2.0f64..8.0) {
        let m = build_torus([[1.0, 0.0], [0.3, 1.1]], 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free: Vec<f64> = (0..m.n_classes()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let rho = Homomorphism::new(vec![1.0, 0.5]);
        let u = EquivariantField::from_free(&m, &free, rho.clone());
        let delta = 1e-3;
        let g = gradient(&m, &u, p, delta);
        let h = 1e-6;
        for c in 0..m.n_classes() {
            let mut a = free.clone();
            let mut b = free.clone();
            a[c] += h;
            b[c] -= h;
            let fd = (energy(&m, &EquivariantField::from_free(&m, &a, rho.clone()), p, delta)
                - energy(&m, &EquivariantField::from_free(&m, &b, rho.clone()), p, delta))
                / (2.0 * h);
            prop_assert!((g[c] - fd).abs() <= 1e-5 * (1.0 + fd.abs()), "class {}: {} vs {}", c, g[c], fd);
        }
    }
}

#[test]
fn kp_law_normalizes_the_energy() {
    for (e, p) in [(2.0, 4.0), (0.3, 8.0), (17.0, 64.0)] {
        let k = kp_from_energy(e, p).unwrap();
        // int |k du|^p = k^p E = k
        assert!((k.powf(p) * e - k).abs() < 1e-12 * k);
    }
    assert!(kp_from_energy(0.0, 4.0).is_err());
}

#[test]
fn dirichlet_energy_of_theta_on_annulus() {
    let m = build_annulus(1.0, 2.0, 48, 16).unwrap();
    let rho = Homomorphism::new(vec![2.0 * PI]);
    let stages = minimize(&m, &rho, &SolverConfig::with_schedule(vec![2.0, 4.0]), None).unwrap();
    let e2 = stages[0].report.energy;
    assert!((e2 - 2.0 * PI * 2f64.ln()).abs() < 0.01 * e2, "{e2}");
    let e4 = stages[1].report.energy;
    let exact = 2.0 * PI * (1.0 - 0.25) / 2.0;
    assert!((e4 - exact).abs() < 0.01 * exact, "{e4} vs {exact}");
    assert!(stages.iter().all(|s| s.report.converged));
}

#[test]
fn torus_minimizer_is_affine() {
    let basis = [[1.0, 0.0], [0.25, 0.9]];
    let m = build_torus(basis, 6).unwrap();
    let rho = Homomorphism::new(vec![0.8, -0.3]);
    let st = minimize(&m, &rho, &SolverConfig::with_schedule(vec![2.0, 6.0]), None).unwrap();
    let w = linear_covector(basis, [0.8, -0.3]);
    let l = w[0].hypot(w[1]);
    for s in &st {
        assert!((s.report.max_du - l).abs() < 1e-8, "{} vs {l}", s.report.max_du);
    }
}
