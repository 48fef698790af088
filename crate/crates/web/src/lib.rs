//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Every export has a plain Rust counterpart returning a serializable value so
//! the numerics can be tested natively; the exported wrappers only turn those
//! into JSON strings or JS errors.

use std::f64::consts::PI;

use laminate::duality::conjugate;
use laminate::hyperbolic::cone_profile;
use laminate::limits::{annulus_mesh_k, compute_k, estimate_l};
use laminate::mesh::{build_annulus, build_torus, differential, Homomorphism};
use laminate::penergy::{annulus_energy_exact, minimize, SolverConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Meshes larger than this are refused to keep the page responsive.
const MAX_TRIANGLES: usize = 20_000;

#[derive(Debug, Serialize)]
pub struct ProfileCurve {
    pub p: f64,
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub sup_deviation: f64,
}

/// Radial profiles `f_p` on `[0, t_max]` for each exponent in `ps`.
pub fn cone_curves(n: u32, ps: &[f64], t_max: f64, steps: usize) -> Result<Vec<ProfileCurve>, String> {
    ps.iter()
        .map(|&p| {
            let prof = cone_profile(n, p, t_max, steps).map_err(|e| e.to_string())?;
            let sup_deviation = prof.sup_deviation(t_max);
            let mut t = vec![0.0];
            let mut f = vec![0.0];
            t.extend(prof.t);
            f.extend(prof.f);
            Ok(ProfileCurve { p, t, f, sup_deviation })
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct AnnulusView {
    pub p: f64,
    pub energy: f64,
    pub exact_energy: f64,
    pub k_p: f64,
    pub max_du: f64,
    pub k_mesh: f64,
    pub pairing: f64,
    /// Share of the conjugate mass in `r > (r0 + r1) / 2`.
    pub outer_fraction: f64,
    /// Triangle corners in the plane, three `[x, y]` pairs each.
    pub triangles: Vec<[[f64; 2]; 3]>,
    /// `|dv_q|` per triangle.
    pub dv: Vec<f64>,
}

/// Solve on the round annulus for `u = theta` with exponents doubling up to
/// `p_max`, then conjugate at `p_max`.
pub fn annulus_view(r0: f64, r1: f64, n_theta: usize, n_r: usize, p_max: f64) -> Result<AnnulusView, String> {
    if 2 * n_theta * n_r > MAX_TRIANGLES {
        return Err(format!("mesh too large for the demo ({} triangles)", 2 * n_theta * n_r));
    }
    if !(p_max >= 2.0) || !(p_max <= 256.0) {
        return Err(format!("p must lie in [2, 256], got {p_max}"));
    }
    let mesh = build_annulus(r0, r1, n_theta, n_r).map_err(|e| e.to_string())?;
    let mut schedule = vec![2.0];
    while schedule.last().unwrap() * 2.0 < p_max {
        schedule.push(schedule.last().unwrap() * 2.0);
    }
    if p_max > 2.0 {
        schedule.push(p_max);
    }
    let rho = Homomorphism::new(vec![2.0 * PI]);
    let stages = minimize(&mesh, &rho, &SolverConfig::with_schedule(schedule), None).map_err(|e| e.to_string())?;
    let last = stages.last().expect("schedule is non-empty");
    let c = conjugate(&mesh, &last.field, p_max).map_err(|e| e.to_string())?;
    let dv = differential(&mesh, &c.dual.v).map_err(|e| e.to_string())?;
    let norms: Vec<f64> = (0..mesh.n_triangles()).map(|t| mesh.norm(t, dv.covectors[t])).collect();
    let mid = 0.5 * (r0 + r1);
    let (mut outer, mut total) = (0.0, 0.0);
    for (t, n) in norms.iter().enumerate() {
        let w = n * mesh.area(t);
        total += w;
        if mesh.centroid(t)[0] > mid {
            outer += w;
        }
    }
    let v = mesh.vertices();
    let triangles = mesh
        .triangles()
        .iter()
        .map(|tri| tri.map(|i| [v[i][0] * v[i][1].cos(), v[i][0] * v[i][1].sin()]))
        .collect();
    Ok(AnnulusView {
        p: p_max,
        energy: last.report.energy,
        exact_energy: annulus_energy_exact(r0, r1, p_max),
        k_p: c.k_p,
        max_du: last.report.max_du,
        k_mesh: annulus_mesh_k(&mesh, 2.0 * PI).unwrap_or(f64::NAN),
        pairing: c.pairing,
        outer_fraction: if total > 0.0 { outer / total } else { 0.0 },
        triangles,
        dv: norms,
    })
}

#[derive(Debug, Serialize)]
pub struct TorusComparison {
    pub k: f64,
    pub argmax: Option<[i64; 2]>,
    pub l_hat: f64,
    /// `(p, max |du_p|, 1/k_p)` along the schedule.
    pub trace: Vec<(f64, f64, f64)>,
}

/// `K` by lattice search against `L_hat` from a p-schedule on the torus with
/// basis `(1, 0), (shear, height)` and periods `rho`.
pub fn torus_comparison(shear: f64, height: f64, rho: [f64; 2], resolution: usize) -> Result<TorusComparison, String> {
    if resolution > 40 {
        return Err("resolution above 40 is too slow for the demo".into());
    }
    let basis = [[1.0, 0.0], [shear, height]];
    let mesh = build_torus(basis, resolution).map_err(|e| e.to_string())?;
    let hom = Homomorphism::new(rho.to_vec());
    let k = compute_k(basis, &hom, 50).map_err(|e| e.to_string())?;
    let cfg = SolverConfig::with_schedule(vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
    let stages = minimize(&mesh, &hom, &cfg, None).map_err(|e| e.to_string())?;
    let reports: Vec<_> = stages.iter().map(|s| s.report.clone()).collect();
    let est = estimate_l(&reports).map_err(|e| e.to_string())?;
    Ok(TorusComparison {
        k: k.k,
        argmax: k.argmax,
        l_hat: est.l_hat,
        trace: reports
            .iter()
            .map(|r| (r.p, r.max_du, r.k_p.map_or(f64::NAN, |k| 1.0 / k)))
            .collect(),
    })
}

fn to_js<T: Serialize>(r: Result<T, String>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = coneCurves)]
pub fn cone_curves_js(n: u32, ps: Vec<f64>, t_max: f64, steps: usize) -> Result<String, JsError> {
    to_js(cone_curves(n, &ps, t_max, steps))
}

#[wasm_bindgen(js_name = annulusView)]
pub fn annulus_view_js(r0: f64, r1: f64, n_theta: usize, n_r: usize, p_max: f64) -> Result<String, JsError> {
    to_js(annulus_view(r0, r1, n_theta, n_r, p_max))
}

#[wasm_bindgen(js_name = torusComparison)]
pub fn torus_comparison_js(shear: f64, height: f64, rho1: f64, rho2: f64, resolution: usize) -> Result<String, JsError> {
    to_js(torus_comparison(shear, height, [rho1, rho2], resolution))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cone_curves_start_at_origin_and_tighten() {
        let c = cone_curves(2, &[8.0, 64.0], 2.0, 40).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!((c[0].t[0], c[0].f[0]), (0.0, 0.0));
        assert_eq!(c[0].t.len(), 41);
        assert!(c[1].sup_deviation < c[0].sup_deviation);
        assert!(cone_curves(3, &[2.5], 2.0, 40).is_err());
    }

    #[test]
    fn annulus_view_matches_theta() {
        let v = annulus_view(1.0, 2.0, 32, 10, 16.0).unwrap();
        assert_eq!(v.triangles.len(), v.dv.len());
        assert!((v.energy - v.exact_energy).abs() < 0.02 * v.exact_energy);
        assert!((v.pairing - 1.0).abs() < 1e-3);
        assert!(v.max_du <= v.k_mesh * (1.0 + 1e-9));
        assert!(v.outer_fraction < 0.2, "{}", v.outer_fraction);
        assert!(annulus_view(1.0, 2.0, 400, 400, 8.0).is_err());
        assert!(annulus_view(1.0, 2.0, 8, 4, 1.5).is_err());
    }

    #[test]
    fn torus_k_matches_l() {
        let c = torus_comparison(0.3, 1.1, [1.0, 0.5], 6).unwrap();
        assert!((c.k - c.l_hat).abs() < 0.02 * c.l_hat);
        assert!(c.k <= c.l_hat * (1.0 + 1e-9));
        assert_eq!(c.trace.len(), 6);
    }

    #[test]
    fn outputs_serialize() {
        let s = serde_json::to_string(&torus_comparison(0.0, 1.0, [1.0, 0.0], 4).unwrap()).unwrap();
        assert!(s.contains("\"l_hat\""));
    }
}
