//! Limit objects of the p-continuation: the best Lipschitz constant `L`, the
//! homological ratio `K`, the maximum-stretch set and least-gradient checks.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::duality::DualField;
use crate::mesh::{differential_unchecked, AnnulusChart, Domain, EquivariantField, Homomorphism, PLOneForm, Point, SurfaceMesh};
use crate::par;
use crate::penergy::SolveReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LimitError {
    #[error("need at least two solve reports, got {0}")]
    TooFewReports(usize),
    #[error("solve reports are not ordered by strictly increasing p")]
    UnorderedReports,
    #[error("search radius must be at least 1")]
    SearchRadius,
    #[error("lattice basis is degenerate")]
    DegenerateLattice,
    #[error("threshold eps = {0} is outside (0, 1)")]
    Threshold(f64),
    #[error("stretch set is empty at eps = {eps}; max |du|/L_hat = {max_ratio}")]
    EmptyStretchSet { eps: f64, max_ratio: f64 },
    #[error("trials must be at least 1")]
    NoTrials,
}

/// Three estimates of `L` taken at the largest exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LEstimate {
    pub l_hat: f64,
    pub from_max_du: f64,
    pub from_lp_mean: f64,
    pub from_inv_kp: Option<f64>,
    pub spread: f64,
    /// `max_du` non-increasing and `lp_mean` non-decreasing along p.
    pub monotone: bool,
}

pub fn estimate_l(reports: &[SolveReport]) -> Result<LEstimate, LimitError> {
    if reports.len() < 2 {
        return Err(LimitError::TooFewReports(reports.len()));
    }
    if reports.windows(2).any(|w| !(w[1].p > w[0].p)) {
        return Err(LimitError::UnorderedReports);
    }
    let last = reports.last().expect("non-empty");
    let inv_kp = last.k_p.map(|k| 1.0 / k);
    let mut all = vec![last.max_du, last.lp_mean];
    all.extend(inv_kp);
    let hi = all.iter().cloned().fold(f64::MIN, f64::max);
    let lo = all.iter().cloned().fold(f64::MAX, f64::min);
    let tol = 1e-8 * (1.0 + hi.abs());
    let monotone = reports.windows(2).all(|w| {
        w[1].max_du <= w[0].max_du + tol && w[1].lp_mean >= w[0].lp_mean - tol
    });
    Ok(LEstimate {
        l_hat: last.max_du,
        from_max_du: last.max_du,
        from_lp_mean: last.lp_mean,
        from_inv_kp: inv_kp,
        spread: hi - lo,
        monotone,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KResult {
    pub k: f64,
    /// `None` when every ratio is zero.
    pub argmax: Option<[i64; 2]>,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// `max |m rho_1 + n rho_2| / |m e_1 + n e_2|` over primitive `(m, n)` with
/// `max(|m|, |n|) <= radius`. Each class is visited once with its first
/// nonzero coordinate positive.
pub fn compute_k(basis: [[f64; 2]; 2], rho: &Homomorphism, radius: i64) -> Result<KResult, LimitError> {
    if radius < 1 {
        return Err(LimitError::SearchRadius);
    }
    let [e1, e2] = basis;
    if (e1[0] * e2[1] - e1[1] * e2[0]).abs() < 1e-12 {
        return Err(LimitError::DegenerateLattice);
    }
    let (r1, r2) = (rho.periods[0], rho.periods[1]);
    let mut best = KResult { k: 0.0, argmax: None };
    for m in 0..=radius {
        for n in -radius..=radius {
            if (m == 0 && n <= 0) || gcd(m, n) != 1 {
                continue;
            }
            let (mf, nf) = (m as f64, n as f64);
            let len = (mf * e1[0] + nf * e2[0]).hypot(mf * e1[1] + nf * e2[1]);
            let ratio = (mf * r1 + nf * r2).abs() / len;
            if ratio > best.k {
                best = KResult { k: ratio, argmax: Some([m, n]) };
            }
        }
    }
    Ok(best)
}

/// `K` on the annulus: the inner circle is the shortest loop in its class.
pub fn annulus_k(rho: f64, r0: f64) -> f64 {
    rho.abs() / (2.0 * PI * r0)
}

/// `K` of a meshed annulus: `|rho|` over the shorter boundary loop, measured
/// in the metric of the triangles along it. Both loops generate the class,
/// and no loop in the class is shorter on the discrete surface, so this is the
/// bound the discrete field actually obeys. `None` off the annulus.
pub fn annulus_mesh_k(mesh: &SurfaceMesh, rho: f64) -> Option<f64> {
    let Some(Domain::Annulus { r0, r1, options, .. }) = mesh.domain() else {
        return None;
    };
    let mut owner = HashMap::new();
    for (t, tri) in mesh.triangles().iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            owner.insert((a.min(b), a.max(b)), t);
        }
    }
    let radius = |x: Point| match options.chart {
        AnnulusChart::Polar => x[0],
        _ => x[0].hypot(x[1]),
    };
    let mid = 0.5 * (r0 + r1);
    let (mut inner, mut outer) = (0.0, 0.0);
    for &[a, b] in mesh.boundary_edges() {
        let t = *owner.get(&(a.min(b), a.max(b)))?;
        let (xa, xb) = (mesh.vertices()[a], mesh.vertices()[b]);
        let e = [xb[0] - xa[0], xb[1] - xa[1]];
        let g = mesh.metric(t).0;
        let len = (e[0] * (g[0][0] * e[0] + g[0][1] * e[1]) + e[1] * (g[1][0] * e[0] + g[1][1] * e[1])).sqrt();
        if radius(xa) + radius(xb) < 2.0 * mid {
            inner += len;
        } else {
            outer += len;
        }
    }
    Some(rho.abs() / inner.min(outer))
}

/// Length of the affine minimizer's gradient on a flat torus; equals `L`.
pub fn torus_dual_norm(basis: [[f64; 2]; 2], rho: [f64; 2]) -> f64 {
    let a = crate::mesh::linear_covector(basis, rho);
    a[0].hypot(a[1])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub point: Point,
    pub direction: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchComponent {
    pub triangles: Vec<usize>,
    /// Total-least-squares line through the unwrapped barycenters.
    pub fit: Line,
    /// Largest distance from a barycenter to the fitted line (chart units).
    pub max_deviation: f64,
    /// `max_deviation` divided by the mesh size.
    pub deviation_in_h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StretchSet {
    pub eps: f64,
    pub triangles: Vec<usize>,
    pub components: Vec<StretchComponent>,
    pub max_ratio: f64,
}

/// Triangles with `|du| >= (1 - eps) L_hat`, grouped into components across
/// interior and glued edges.
pub fn stretch_set(mesh: &SurfaceMesh, u: &EquivariantField, l_hat: f64, eps: f64) -> Result<StretchSet, LimitError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LimitError::Threshold(eps));
    }
    let du = differential_unchecked(mesh, u);
    let norms = du.norms(mesh);
    let max_ratio = norms.iter().cloned().fold(0.0, f64::max) / l_hat;
    let inside: Vec<bool> = norms.iter().map(|n| *n >= (1.0 - eps) * l_hat).collect();
    let triangles: Vec<usize> = (0..mesh.n_triangles()).filter(|&t| inside[t]).collect();
    if triangles.is_empty() {
        return Err(LimitError::EmptyStretchSet { eps, max_ratio });
    }
    let h = mesh.mesh_size();
    let components = components_of(mesh, &inside)
        .into_iter()
        .map(|(tris, pts)| {
            let (fit, dev) = tls_fit(&pts);
            StretchComponent {
                triangles: tris,
                fit,
                max_deviation: dev,
                deviation_in_h: dev / h,
            }
        })
        .collect();
    Ok(StretchSet {
        eps,
        triangles,
        components,
        max_ratio,
    })
}

/// Connected components of the masked triangles, each lifted to the cover by
/// BFS: every triangle carries the deck shift of the sheet it was reached on.
/// Triangles are sorted by index within a component.
pub(crate) fn lifted_components(mesh: &SurfaceMesh, mask: &[bool]) -> Vec<Vec<(usize, Vec<i64>)>> {
    let nb = mesh.n_generators();
    let mut seen = vec![false; mesh.n_triangles()];
    let mut out = Vec::new();
    for start in 0..mesh.n_triangles() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        let mut sheet: Vec<(usize, Vec<i64>)> = Vec::new();
        let mut queue = VecDeque::from([(start, vec![0i64; nb])]);
        while let Some((t, s)) = queue.pop_front() {
            for n in mesh.neighbors(t).iter().flatten() {
                if mask[n.triangle] && !seen[n.triangle] {
                    seen[n.triangle] = true;
                    let ns: Vec<i64> = s.iter().zip(&n.sheet_shift).map(|(a, b)| a + b).collect();
                    queue.push_back((n.triangle, ns));
                }
            }
            sheet.push((t, s));
        }
        sheet.sort_by_key(|(t, _)| *t);
        out.push(sheet);
    }
    out
}

/// Components with their centroids unwrapped into the cover chart.
pub(crate) fn components_of(mesh: &SurfaceMesh, mask: &[bool]) -> Vec<(Vec<usize>, Vec<Point>)> {
    lifted_components(mesh, mask)
        .into_iter()
        .map(|sheet| {
            let pts = sheet
                .iter()
                .map(|(t, s)| {
                    let c = mesh.centroid(*t);
                    let d = mesh.deck_displacement(s);
                    [c[0] + d[0], c[1] + d[1]]
                })
                .collect();
            (sheet.into_iter().map(|(t, _)| t).collect(), pts)
        })
        .collect()
}

pub(crate) fn tls_fit(pts: &[Point]) -> (Line, f64) {
    let n = pts.len() as f64;
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in pts {
        let (dx, dy) = (p[0] - cx, p[1] - cy);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let dir = [angle.cos(), angle.sin()];
    let dev = pts
        .iter()
        .map(|p| ((p[0] - cx) * dir[1] - (p[1] - cy) * dir[0]).abs())
        .fold(0.0, f64::max);
    (
        Line {
            point: [cx, cy],
            direction: dir,
        },
        dev,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trial: usize,
    pub t: f64,
    pub base_mass: f64,
    pub perturbed_mass: f64,
    /// Perturbation values per vertex class.
    pub phi: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeastGradientRecord {
    pub trials: usize,
    pub seed: u64,
    pub tol: f64,
    pub base_mass: f64,
    /// Smallest `perturbed - base` over all trials and step sizes.
    pub worst_margin: f64,
    pub violations: Vec<Violation>,
}

impl LeastGradientRecord {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const PERTURBATION_STEPS: [f64; 4] = [1.0, -1.0, 0.1, -0.1];

/// Random mean-zero perturbation with zero periods and `sum |d phi| area = 1`.
pub fn random_perturbation(mesh: &SurfaceMesh, seed: u64, trial: usize) -> EquivariantField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    let free: Vec<f64> = (0..mesh.n_classes()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut phi = EquivariantField::from_free(mesh, &free, Homomorphism::zero(mesh.n_generators()));
    let mean = phi.mean(mesh);
    phi.add_constant(-mean);
    let bv = differential_unchecked(mesh, &phi).mass(mesh);
    if bv > 0.0 {
        for v in &mut phi.values {
            *v /= bv;
        }
    }
    phi
}

/// Checks `||dv + t d phi|| >= ||dv|| - tol` for seeded perturbations.
pub fn least_gradient_test(
    mesh: &SurfaceMesh,
    v: &DualField,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<LeastGradientRecord, LimitError> {
    if trials == 0 {
        return Err(LimitError::NoTrials);
    }
    let dv = differential_unchecked(mesh, &v.v);
    let base = dv.mass(mesh);
    let per_trial = par::map_range(trials, |trial| {
        let phi = random_perturbation(mesh, seed, trial);
        let dphi = differential_unchecked(mesh, &phi);
        PERTURBATION_STEPS
            .iter()
            .map(|&t| {
                let m = mass_of_sum(mesh, &dv, t, &dphi);
                (trial, t, m, phi.free_values(mesh))
            })
            .collect::<Vec<_>>()
    });
    let mut worst = f64::INFINITY;
    let mut violations = Vec::new();
    for (trial, t, m, phi) in per_trial.into_iter().flatten() {
        worst = worst.min(m - base);
        if m < base - tol {
            violations.push(Violation {
                trial,
                t,
                base_mass: base,
                perturbed_mass: m,
                phi,
            });
        }
    }
    Ok(LeastGradientRecord {
        trials,
        seed,
        tol,
        base_mass: base,
        worst_margin: worst,
        violations,
    })
}

fn mass_of_sum(mesh: &SurfaceMesh, a: &PLOneForm, t: f64, b: &PLOneForm) -> f64 {
    (0..mesh.n_triangles())
        .map(|i| {
            let w = [a.covectors[i][0] + t * b.covectors[i][0], a.covectors[i][1] + t * b.covectors[i][1]];
            mesh.norm(i, w) * mesh.area(i)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub p: f64,
    pub max_du: f64,
    pub lp_mean: f64,
    pub inv_k_p: Option<f64>,
    pub mass: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub eps: f64,
    pub triangles: usize,
    pub components: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentSummary {
    pub size: usize,
    pub max_deviation: f64,
    pub deviation_in_h: f64,
    pub fit: Line,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitReport {
    #[serde(rename = "L_hat")]
    pub l_hat: f64,
    #[serde(rename = "K_hat")]
    pub k_hat: f64,
    pub argmax_class: Option<[i64; 2]>,
    pub traces: Vec<ConvergenceRow>,
    pub stretch_components: Vec<ComponentSummary>,
    pub estimate: LEstimate,
    pub stretch_eps: f64,
    pub stretch_triangles: usize,
    pub sweep: Vec<SweepEntry>,
    pub least_gradient: Option<LeastGradientRecord>,
}

pub fn summarize(set: &StretchSet) -> Vec<ComponentSummary> {
    set.components
        .iter()
        .map(|c| ComponentSummary {
            size: c.triangles.len(),
            max_deviation: c.max_deviation,
            deviation_in_h: c.deviation_in_h,
            fit: c.fit.clone(),
        })
        .collect()
}

/// Sizes of the stretch set at several thresholds.
pub fn sweep(mesh: &SurfaceMesh, u: &EquivariantField, l_hat: f64, eps_list: &[f64]) -> Vec<SweepEntry> {
    eps_list
        .iter()
        .map(|&eps| match stretch_set(mesh, u, l_hat, eps) {
            Ok(s) => SweepEntry {
                eps,
                triangles: s.triangles.len(),
                components: s.components.len(),
            },
            Err(_) => SweepEntry {
                eps,
                triangles: 0,
                components: 0,
            },
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::conjugate;
    use crate::mesh::{build_annulus, build_torus, RadialGrading};
    use crate::penergy::{minimize, report_for, SolverConfig};

    #[test]
    fn k_examples() {
        let unit = [[1.0, 0.0], [0.0, 1.0]];
        let k = compute_k(unit, &Homomorphism::new(vec![1.0, 0.0]), 5).unwrap();
        assert!((k.k - 1.0).abs() < 1e-15);
        assert_eq!(k.argmax, Some([1, 0]));
        assert_eq!(compute_k(unit, &Homomorphism::zero(2), 5).unwrap(), KResult { k: 0.0, argmax: None });
        assert!(compute_k(unit, &Homomorphism::zero(2), 0).is_err());
    }

    #[test]
    fn sheared_k_matches_dual_norm() {
        let basis = [[1.0, 0.0], [0.5, 1.0]];
        let k = compute_k(basis, &Homomorphism::new(vec![1.0, 0.0]), 50).unwrap();
        // oracle: the minimizer a with a.e1 = 1, a.e2 = 0 is (1, -0.5)
        let l = 1.25f64.sqrt();
        assert!((k.k - l).abs() < 1e-9, "{} vs {}", k.k, l);
        assert_eq!(k.argmax, Some([5, -2]));
        assert!((torus_dual_norm(basis, [1.0, 0.0]) - l).abs() < 1e-15);
    }

    #[test]
    fn k_never_exceeds_l() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let basis = [[1.0, rng.random_range(-0.3..0.3)], [rng.random_range(-0.6..0.6), rng.random_range(0.7..1.3)]];
            let rho = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let k = compute_k(basis, &Homomorphism::new(rho.to_vec()), 20).unwrap();
            assert!(k.k <= torus_dual_norm(basis, rho) * (1.0 + 1e-12));
        }
    }

    fn fake_report(p: f64, max_du: f64, lp_mean: f64) -> SolveReport {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 2).unwrap();
        let mut r = report_for(&m, &EquivariantField::constant(&m, 0.0), p, 0.0);
        r.max_du = max_du;
        r.lp_mean = lp_mean;
        r.k_p = Some(1.0 / lp_mean);
        r
    }

    #[test]
    fn l_estimate_flags_non_monotone_traces() {
        let ok = [fake_report(2.0, 1.2, 0.8), fake_report(4.0, 1.1, 0.9)];
        let e = estimate_l(&ok).unwrap();
        assert!(e.monotone);
        assert_eq!(e.l_hat, 1.1);
        let bad = [fake_report(2.0, 1.0, 0.8), fake_report(4.0, 1.1, 0.9)];
        assert!(!estimate_l(&bad).unwrap().monotone);
        assert_eq!(estimate_l(&ok[..1]), Err(LimitError::TooFewReports(1)));
        assert_eq!(estimate_l(&[ok[1].clone(), ok[0].clone()]), Err(LimitError::UnorderedReports));
    }

    #[test]
    fn unit_torus_stretch_is_everything() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 6).unwrap();
        let u = EquivariantField::from_fn(&m, Homomorphism::new(vec![1.0, 0.0]), |x| x[0]);
        let s = stretch_set(&m, &u, 1.0, 0.1).unwrap();
        assert_eq!(s.triangles.len(), m.n_triangles());
        assert_eq!(s.components.len(), 1);
        assert!(matches!(stretch_set(&m, &u, 2.0, 0.1), Err(LimitError::EmptyStretchSet { .. })));
    }

    #[test]
    fn annulus_stretch_criterion_and_monotonicity() {
        let a = build_annulus(1.0, 2.0, 32, 16).unwrap();
        let u = EquivariantField::from_fn(&a, Homomorphism::new(vec![2.0 * PI]), |x| x[1]);
        let du = differential_unchecked(&a, &u);
        let l = du.norms(&a).into_iter().fold(0.0, f64::max);
        let s = stretch_set(&a, &u, l, 0.1).unwrap();
        for t in 0..a.n_triangles() {
            let r = a.centroid(t)[0];
            let inside = s.triangles.contains(&t);
            // |du| = 1/r_c exactly on the polar chart
            assert_eq!(inside, 1.0 / r >= 0.9 * l, "triangle {t} at r = {r}");
        }
        assert_eq!(s.components.len(), 1);
        let small = stretch_set(&a, &u, l, 0.05).unwrap().triangles;
        let big = stretch_set(&a, &u, l, 0.2).unwrap().triangles;
        assert!(small.iter().all(|t| s.triangles.contains(t)));
        assert!(s.triangles.iter().all(|t| big.contains(t)));
    }

    #[test]
    fn mesh_k_measures_the_discrete_inner_loop() {
        let a = build_annulus(1.0, 2.0, 64, 32).unwrap();
        let radii = RadialGrading::GeometricQuadratic.radii(1.0, 2.0, 32);
        // inner boundary edges sit in triangles with centroid r0 + dr/3
        let want = 1.0 / (1.0 + (radii[1] - 1.0) / 3.0);
        let k = annulus_mesh_k(&a, 2.0 * PI).unwrap();
        assert!((k - want).abs() < 1e-12, "{k} vs {want}");
        assert!(k < annulus_k(2.0 * PI, 1.0));
        // theta attains the bound on the innermost triangles
        let u = EquivariantField::from_fn(&a, Homomorphism::new(vec![2.0 * PI]), |x| x[1]);
        let l = differential_unchecked(&a, &u).norms(&a).into_iter().fold(0.0, f64::max);
        assert!((l - k).abs() < 1e-12);

        let planar = crate::mesh::build_annulus_with(
            1.0,
            2.0,
            16,
            4,
            crate::mesh::AnnulusOptions {
                chart: AnnulusChart::Planar,
                grading: RadialGrading::Uniform,
            },
        )
        .unwrap();
        // inscribed polygon is shorter than the circle
        let k = annulus_mesh_k(&planar, 2.0 * PI).unwrap();
        let perimeter = 16.0 * 2.0 * (PI / 16.0).sin();
        assert!((k - 2.0 * PI / perimeter).abs() < 1e-12);
        assert!(annulus_mesh_k(&build_torus([[1.0, 0.0], [0.0, 1.0]], 3).unwrap(), 1.0).is_none());
    }

    #[test]
    fn least_gradient_on_torus() {
        let m = build_torus([[1.0, 0.0], [0.4, 1.0]], 6).unwrap();
        let st = minimize(&m, &Homomorphism::new(vec![1.0, 0.3]), &SolverConfig::with_schedule(vec![2.0, 8.0]), None).unwrap();
        let c = conjugate(&m, &st[1].field, 8.0).unwrap();
        let rec = least_gradient_test(&m, &c.dual, 20, 5, 1e-8).unwrap();
        assert!(rec.passed(), "{:?}", rec.worst_margin);
        assert!(least_gradient_test(&m, &c.dual, 0, 5, 1e-8).is_err());
    }

    #[test]
    fn perturbations_are_normalized() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 5).unwrap();
        let a = random_perturbation(&m, 3, 7);
        assert!(a.mean(&m).abs() < 1e-14);
        assert!((differential_unchecked(&m, &a).mass(&m) - 1.0).abs() < 1e-12);
        assert_eq!(a, random_perturbation(&m, 3, 7));
        assert_ne!(a, random_perturbation(&m, 3, 8));
    }

    #[test]
    fn tls_recovers_a_line() {
        let pts: Vec<Point> = (0..10).map(|i| [i as f64, 2.0 * i as f64 + 1.0]).collect();
        let (fit, dev) = tls_fit(&pts);
        assert!(dev < 1e-12);
        assert!((fit.direction[1] / fit.direction[0] - 2.0).abs() < 1e-12);
    }
}
