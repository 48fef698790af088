//! Conjugate fields: the normalized dual form `V_q = |U_p|^(p-2) * U_p` with
//! `U_p = k_p du_p`, its periods, a least-squares primitive `v_q`, and the
//! diagnostics that compare `u_p` with `v_q`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::SymmetricBuilder;
use crate::mesh::{
    differential_unchecked, hodge_star, period_integral, Covector, EquivariantField, Homomorphism,
    MeshError, PLOneForm, SurfaceMesh,
};
use crate::penergy::{kp_from_energy, SolveError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualityError {
    #[error("exponent p = {0} must be at least 2")]
    Exponent(f64),
    #[error("least-squares system is singular")]
    Singular,
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

/// Conjugate exponent `q` with `1/p + 1/q = 1`.
pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

fn power_map(mesh: &SurfaceMesh, t: usize, w: Covector, exponent: f64) -> Covector {
    let n = mesh.norm(t, w);
    if n == 0.0 {
        return [0.0, 0.0];
    }
    let s = mesh.star(t, w);
    let c = n.powf(exponent - 2.0);
    [c * s[0], c * s[1]]
}

/// `V_q = |U|^(p-2) * U` with `U = k_p du_p`, triangle by triangle.
pub fn dual_form(mesh: &SurfaceMesh, u_p: &EquivariantField, p: f64, k_p: f64) -> Result<PLOneForm, DualityError> {
    if !(p >= 2.0) {
        return Err(DualityError::Exponent(p));
    }
    u_p.check(mesh)?;
    let u = differential_unchecked(mesh, u_p).scaled(k_p);
    Ok(dual_of(mesh, &u, p))
}

/// `|U|^(p-2) * U` for a given form `U`.
pub fn dual_of(mesh: &SurfaceMesh, u: &PLOneForm, p: f64) -> PLOneForm {
    PLOneForm {
        covectors: u
            .covectors
            .iter()
            .enumerate()
            .map(|(t, w)| power_map(mesh, t, *w, p))
            .collect(),
    }
}

/// The q-duality map `|V|^(q-2) * V`; it sends `V_q` back to `-U_p`.
pub fn inverse_dual(mesh: &SurfaceMesh, v: &PLOneForm, q: f64) -> PLOneForm {
    dual_of(mesh, v, q)
}

pub fn dual_periods(mesh: &SurfaceMesh, v: &PLOneForm) -> Result<Homomorphism, MeshError> {
    mesh.homology_basis()
        .iter()
        .map(|l| period_integral(mesh, v, l))
        .collect::<Result<Vec<_>, _>>()
        .map(Homomorphism::new)
}

/// `sum_T (a_T ^ b_T) area(T)`.
pub fn pairing(mesh: &SurfaceMesh, a: &PLOneForm, b: &PLOneForm) -> f64 {
    a.covectors
        .iter()
        .zip(&b.covectors)
        .enumerate()
        .map(|(t, (x, y))| (x[0] * y[1] - x[1] * y[0]) * mesh.coord_area(t))
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualField {
    pub v: EquivariantField,
    pub q: f64,
    /// `sqrt(sum_T |dv_T - V_T|^2 area(T))`.
    pub residual: f64,
    /// `sum_T |dv_T| area(T)`.
    pub mass: f64,
}

impl DualField {
    pub fn alpha(&self) -> &Homomorphism {
        &self.v.rho
    }
}

/// Least-squares primitive of `form` with prescribed periods, normalized to
/// mean zero over the cut domain. `q` is only recorded.
pub fn primitive(mesh: &SurfaceMesh, form: &PLOneForm, alpha: &Homomorphism, q: f64) -> Result<DualField, DualityError> {
    if alpha.periods.len() != mesh.n_generators() {
        return Err(MeshError::SizeMismatch {
            what: "periods",
            expected: mesh.n_generators(),
            got: alpha.periods.len(),
        }
        .into());
    }
    if form.covectors.len() != mesh.n_triangles() {
        return Err(MeshError::SizeMismatch {
            what: "covectors",
            expected: mesh.n_triangles(),
            got: form.covectors.len(),
        }
        .into());
    }
    let nc = mesh.n_classes();
    let base = EquivariantField::from_free(mesh, &vec![0.0; nc], alpha.clone());
    let d0 = differential_unchecked(mesh, &base);
    let mut k = SymmetricBuilder::new(nc - 1);
    let mut b = vec![0.0; nc - 1];
    for t in 0..mesh.n_triangles() {
        let tri = mesh.triangles()[t];
        let gr = mesh.triangle_grad(t);
        let m = mesh.inv_metric(t);
        let a = mesh.area(t);
        let r = [
            form.covectors[t][0] - d0.covectors[t][0],
            form.covectors[t][1] - d0.covectors[t][1],
        ];
        let mr = [m[0][0] * r[0] + m[0][1] * r[1], m[1][0] * r[0] + m[1][1] * r[1]];
        let cls = tri.map(|v| mesh.class_of(v));
        for kk in 0..3 {
            if cls[kk] == 0 {
                continue;
            }
            let i = cls[kk] - 1;
            b[i] += a * (gr[0][kk] * mr[0] + gr[1][kk] * mr[1]);
            for l in 0..=kk {
                if cls[l] == 0 {
                    continue;
                }
                let j = cls[l] - 1;
                let s = a
                    * (gr[0][kk] * (m[0][0] * gr[0][l] + m[0][1] * gr[1][l])
                        + gr[1][kk] * (m[1][0] * gr[0][l] + m[1][1] * gr[1][l]));
                if kk == l {
                    k.add(i, i, s);
                } else if i == j {
                    k.add(i, i, 2.0 * s);
                } else {
                    k.add(i, j, s);
                }
            }
        }
    }
    let x = if nc > 1 {
        k.cholesky().ok_or(DualityError::Singular)?.solve(&b)
    } else {
        Vec::new()
    };
    let mut free = vec![0.0];
    free.extend(x);
    let mut v = EquivariantField::from_free(mesh, &free, alpha.clone());
    let mean = v.mean(mesh);
    v.add_constant(-mean);
    let dv = differential_unchecked(mesh, &v);
    let residual = (0..mesh.n_triangles())
        .map(|t| {
            let e = [
                dv.covectors[t][0] - form.covectors[t][0],
                dv.covectors[t][1] - form.covectors[t][1],
            ];
            mesh.norm_sq(t, e) * mesh.area(t)
        })
        .sum::<f64>()
        .sqrt();
    let mass = dv.mass(mesh);
    Ok(DualField { v, q, residual, mass })
}

/// Named set of triangles for region masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub triangles: Vec<usize>,
}

impl Region {
    /// Triangles whose centroid lies at radius greater than `r` (annulus).
    pub fn radius_above(mesh: &SurfaceMesh, r: f64) -> Self {
        Self {
            name: format!("r>{r}"),
            triangles: (0..mesh.n_triangles()).filter(|&t| centroid_radius(mesh, t) > r).collect(),
        }
    }

    pub fn everything(mesh: &SurfaceMesh) -> Self {
        Self {
            name: "all".into(),
            triangles: (0..mesh.n_triangles()).collect(),
        }
    }
}

/// Radius of a triangle centroid for either annulus chart.
pub fn centroid_radius(mesh: &SurfaceMesh, t: usize) -> f64 {
    use crate::mesh::{AnnulusChart, Domain};
    let c = mesh.centroid(t);
    match mesh.domain() {
        Some(Domain::Annulus { options, .. }) if options.chart == AnnulusChart::Polar => c[0],
        _ => c[0].hypot(c[1]),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionMass {
    pub region: String,
    pub mass: f64,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `sum_T |U|^(p-2) |U - du_ref|^2 area(T)`.
    pub g2: f64,
    /// `sum_T |*du_ref ^ V| area(T)`.
    pub orth: f64,
    pub regions: Vec<RegionMass>,
}

pub fn concentration_diagnostics(
    mesh: &SurfaceMesh,
    p: f64,
    u_form: &PLOneForm,
    v_form: &PLOneForm,
    u_ref: &EquivariantField,
    regions: &[Region],
) -> Diagnostics {
    let du_ref = differential_unchecked(mesh, u_ref);
    let star_ref = hodge_star(mesh, &du_ref);
    let mut g2 = 0.0;
    let mut orth = 0.0;
    for t in 0..mesh.n_triangles() {
        let u = u_form.covectors[t];
        let r = du_ref.covectors[t];
        let diff = [u[0] - r[0], u[1] - r[1]];
        g2 += mesh.norm(t, u).powf(p - 2.0) * mesh.norm_sq(t, diff) * mesh.area(t);
        let s = star_ref.covectors[t];
        let v = v_form.covectors[t];
        orth += (s[0] * v[1] - s[1] * v[0]).abs() * mesh.coord_area(t);
    }
    let norms = v_form.norms(mesh);
    let total: f64 = (0..mesh.n_triangles()).map(|t| norms[t] * mesh.area(t)).sum();
    let regions = regions
        .iter()
        .map(|r| {
            let mass: f64 = r.triangles.iter().map(|&t| norms[t] * mesh.area(t)).sum();
            RegionMass {
                region: r.name.clone(),
                mass,
                fraction: if total > 0.0 { mass / total } else { 0.0 },
            }
        })
        .collect();
    Diagnostics { g2, orth, regions }
}

/// Everything derived from one p-solve.
#[derive(Clone, Debug)]
pub struct Conjugate {
    pub p: f64,
    pub k_p: f64,
    pub u_form: PLOneForm,
    pub v_form: PLOneForm,
    pub dual: DualField,
    /// `pairing(du_p, dv_q)`.
    pub pairing: f64,
    /// `sum_T |U|^(p-1) area(T)`.
    pub form_mass: f64,
}

pub fn conjugate(mesh: &SurfaceMesh, u_p: &EquivariantField, p: f64) -> Result<Conjugate, DualityError> {
    if !(p >= 2.0) {
        return Err(DualityError::Exponent(p));
    }
    u_p.check(mesh)?;
    let du = differential_unchecked(mesh, u_p);
    let energy: f64 = (0..mesh.n_triangles())
        .map(|t| mesh.norm(t, du.covectors[t]).powf(p) * mesh.area(t))
        .sum();
    let k_p = kp_from_energy(energy, p)?;
    let u_form = du.scaled(k_p);
    let v_form = dual_of(mesh, &u_form, p);
    let alpha = dual_periods(mesh, &v_form)?;
    let dual = primitive(mesh, &v_form, &alpha, conjugate_exponent(p))?;
    let dv = differential_unchecked(mesh, &dual.v);
    let pairing = self::pairing(mesh, &du, &dv);
    let form_mass = (0..mesh.n_triangles())
        .map(|t| mesh.norm(t, u_form.covectors[t]).powf(p - 1.0) * mesh.area(t))
        .sum();
    Ok(Conjugate {
        p,
        k_p,
        u_form,
        v_form,
        dual,
        pairing,
        form_mass,
    })
}

/// Upper bound `area^(1/p) k_p^((p-1)/p)` for the mass of `V_q`.
pub fn mass_bound(area: f64, k_p: f64, p: f64) -> f64 {
    area.powf(1.0 / p) * k_p.powf((p - 1.0) / p)
}

/// Largest relative error of `|V|^(q-2) * V = -U` over triangles with `U != 0`.
pub fn conjugacy_residual(mesh: &SurfaceMesh, u_form: &PLOneForm, v_form: &PLOneForm, q: f64) -> f64 {
    let back = inverse_dual(mesh, v_form, q);
    let mut worst: f64 = 0.0;
    for t in 0..mesh.n_triangles() {
        let u = u_form.covectors[t];
        let n = mesh.norm(t, u);
        if n == 0.0 {
            continue;
        }
        let b = back.covectors[t];
        let e = [b[0] + u[0], b[1] + u[1]];
        worst = worst.max(mesh.norm(t, e) / n);
    }
    worst
}

/// Largest relative error of `tau_2 = (tau_1 / k_p)^(p-1)` with
/// `tau_1 = 1/|du_p|` and `tau_2 = 1/|V_q|`.
pub fn adapted_coordinate_residual(mesh: &SurfaceMesh, du: &PLOneForm, v_form: &PLOneForm, k_p: f64, p: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for t in 0..mesh.n_triangles() {
        let a = mesh.norm(t, du.covectors[t]);
        let b = mesh.norm(t, v_form.covectors[t]);
        if a == 0.0 || b == 0.0 {
            continue;
        }
        let tau2 = (1.0 / (a * k_p)).powf(p - 1.0);
        worst = worst.max(((1.0 / b) - tau2).abs() / tau2);
    }
    worst
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualReport {
    pub q: f64,
    pub p: f64,
    pub k_p: f64,
    pub alpha: Vec<f64>,
    pub residual: f64,
    pub mass: f64,
    pub form_mass: f64,
    pub mass_bound: f64,
    pub pairing: f64,
    pub conjugacy_residual: f64,
    pub diagnostics: Diagnostics,
}

impl Conjugate {
    pub fn report(&self, mesh: &SurfaceMesh, diagnostics: Diagnostics) -> DualReport {
        DualReport {
            q: self.dual.q,
            p: self.p,
            k_p: self.k_p,
            alpha: self.dual.alpha().periods.clone(),
            residual: self.dual.residual,
            mass: self.dual.mass,
            form_mass: self.form_mass,
            mass_bound: mass_bound(mesh.total_area(), self.k_p, self.p),
            pairing: self.pairing,
            conjugacy_residual: conjugacy_residual(mesh, &self.u_form, &self.v_form, self.dual.q),
            diagnostics,
        }
    }
}
