use laminate::lamination::{bv_decompose, current_check, staircase_trace, BvOptions, MeasuredLamination};
use laminate::mesh::build_torus;
use proptest::prelude::*;

fn lamination() -> impl Strategy<Value = MeasuredLamination> {
    (
        prop::sample::select(vec![[1i64, 0], [0, 1], [1, 1], [2, 1], [1, -2], [3, 2]]),
        prop::collection::vec((0.01f64..0.99, 0.1f64..2.0), 1..5),
    )
        .prop_map(|(class, leaves)| {
            let (o, w): (Vec<f64>, Vec<f64>) = leaves.into_iter().unzip();
            MeasuredLamination::parallel(class, &o, &w).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn json_round_trip(lam in lamination()) {
        let back = MeasuredLamination::from_json(&lam.to_json()).unwrap();
        prop_assert_eq!(back, lam);
    }

    /// One unit step per leaf: the trace varies by the total weight.
    #[test]
    fn staircase_variation_is_total_weight(lam in lamination()) {
        let tr = staircase_trace(&lam, 4000);
        let tv: f64 = tr.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum();
        prop_assert!((tv - lam.total_weight()).abs() < 1e-12 * lam.total_weight());
    }

    #[test]
    fn step_functions_decompose_into_atoms(jumps in prop::collection::vec((-3.0f64..3.0, 1usize..999), 1..6)) {
        let mut samples: Vec<(f64, f64)> = (0..1000).map(|k| (k as f64, 0.0)).collect();
        let mut at: Vec<usize> = jumps.iter().map(|j| j.1).collect();
        at.sort_unstable();
        at.dedup();
        prop_assume!(at.len() == jumps.len());
        prop_assume!(jumps.iter().all(|j| j.0.abs() > 0.2));
        let mut sorted = jumps.clone();
        sorted.sort_by_key(|j| j.1);
        for (size, k) in &sorted {
            for s in samples.iter_mut().skip(*k) {
                s.1 += size;
            }
        }
        let d = bv_decompose(&samples, BvOptions::default()).unwrap();
        let mass: f64 = jumps.iter().map(|j| j.0.abs()).sum();
        prop_assert_eq!(d.atoms.len(), jumps.len());
        prop_assert!((d.atom_mass - mass).abs() < 1e-12 * mass);
        prop_assert!(d.cantor_mass == 0.0 && d.ac_mass == 0.0);
    }

    #[test]
    fn current_matches_dual_primitive(lam in lamination(), s in -0.5f64..0.5, h in 0.7f64..1.4) {
        let m = build_torus([[1.0, 0.0], [s, h]], 6).unwrap();
        let c = current_check(&m, &lam, 4, 11).unwrap();
        prop_assert!(c.closedness < 1e-10);
        prop_assert!(c.max_error <= 1e-8 * lam.total_weight());
    }
}

#[test]
fn cantor_lamination_has_unit_mass() {
    let lam = MeasuredLamination::cantor([1, 0], 5).unwrap();
    assert!((lam.total_weight() - 1.0).abs() < 1e-12);
    assert_eq!(lam.leaves.iter().filter(|l| l.weight > 0.0).count(), 32);
}

#[test]
fn invalid_laminations_are_rejected() {
    assert!(MeasuredLamination::parallel([2, 4], &[0.5], &[1.0]).is_err());
    assert!(MeasuredLamination::parallel([1, 0], &[0.5], &[-1.0]).is_err());
    assert!(MeasuredLamination::parallel([1, 0], &[0.5, 0.1], &[1.0]).is_err());
    assert!(MeasuredLamination::from_json("{\"leaves\": [], \"bogus\": 1}").is_err());
}
