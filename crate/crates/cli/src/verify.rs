//! Re-executes the invariant suites against a stored artifact tree.
//!
//! Missing files, unreadable artifacts and a mesh that no longer matches its
//! manifest hash are fatal (exit 5). Any other hash mismatch fails the
//! `manifest.integrity` suite and the remaining suites still run, so a
//! planted defect is reported by the suite whose invariant it breaks.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use laminate::duality::{concentration_diagnostics, conjugacy_residual, dual_of, dual_periods, mass_bound, pairing, Region};
use laminate::hyperbolic::cone_profile;
use laminate::limits::{least_gradient_test, stretch_set, sweep, LimitReport};
use laminate::mesh::{differential, Domain, EquivariantField, PLOneForm, SurfaceMesh};
use laminate::penergy::{annulus_energy_exact, kp_from_energy, report_for};
use laminate::lamination::{bv_decompose, current_check, BvOptions};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::artifacts::{sha256_hex, Manifest, MANIFEST};
use crate::config::{DomainSpec, ExperimentConfig};
use crate::error::RunError;
use crate::records::*;
use crate::run::{annulus_lamination, cone_csv, cone_summary, k_of, torus_lamination};

/// Asymptotic criteria apply once the schedule reaches this exponent.
pub const ASYMPTOTIC_P: f64 = 64.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    /// Reason the suite did not apply to this run.
    pub skipped: Option<String>,
    pub checks: Vec<Check>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            skipped: None,
            checks: Vec::new(),
        }
    }

    fn skipped(name: &str, why: &str) -> Self {
        Self {
            skipped: Some(why.into()),
            ..Self::new(name)
        }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.into(),
            passed,
            detail: detail.into(),
        });
    }

    /// `|a - b| <= tol * max(1, |b|)`.
    fn close(&mut self, name: impl Into<String>, a: f64, b: f64, tol: f64) {
        let err = (a - b).abs() / b.abs().max(1.0);
        self.check(name, err <= tol, format!("{a:e} vs {b:e} (rel err {err:.2e}, tol {tol:.0e})"));
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failure_summary(&self) -> String {
        self.checks
            .iter()
            .filter(|c| !c.passed)
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.suites.iter().all(SuiteResult::passed)
    }

    pub fn first_failure(&self) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| !s.passed())
    }

    pub fn suite(&self, name: &str) -> Option<&SuiteResult> {
        self.suites.iter().find(|s| s.name == name)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<26} {:<7} {:>6}  detail\n", "suite", "status", "checks");
        for s in &self.suites {
            let (status, detail) = match (&s.skipped, s.passed()) {
                (Some(why), _) => ("skip", why.clone()),
                (None, true) => ("pass", String::new()),
                (None, false) => ("FAIL", s.failure_summary()),
            };
            let _ = writeln!(out, "{:<26} {:<7} {:>6}  {detail}", s.name, status, s.checks.len());
        }
        out
    }
}

struct Tree<'a> {
    root: &'a Path,
    listed: BTreeMap<String, String>,
}

impl Tree<'_> {
    fn read(&self, rel: &str) -> Result<String, RunError> {
        if !self.listed.contains_key(rel) {
            return Err(RunError::Missing(format!("{rel} is not listed in the manifest")));
        }
        fs::read_to_string(self.root.join(rel)).map_err(|e| RunError::Missing(format!("{rel}: {e}")))
    }

    fn json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, RunError> {
        serde_json::from_str(&self.read(rel)?).map_err(|e| RunError::Missing(format!("{rel} is unreadable: {e}")))
    }
}

struct Stored {
    solves: Vec<SolveRecord>,
    duals: Vec<DualRecord>,
    limits: Option<LimitReport>,
}

pub fn verify(root: &Path) -> Result<VerifyReport, RunError> {
    let manifest_text =
        fs::read_to_string(root.join(MANIFEST)).map_err(|e| RunError::Missing(format!("{MANIFEST}: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| RunError::Missing(format!("{MANIFEST} is unreadable: {e}")))?;
    let mut integrity = SuiteResult::new("manifest.integrity");
    let mut listed = BTreeMap::new();
    for entry in &manifest.files {
        let bytes = fs::read(root.join(&entry.path)).map_err(|e| RunError::Missing(format!("{}: {e}", entry.path)))?;
        let ok = sha256_hex(&bytes) == entry.sha256;
        if !ok && entry.path == MESH {
            return Err(RunError::Missing(format!("{MESH} does not match its manifest hash (stale mesh)")));
        }
        integrity.check(format!("hash {}", entry.path), ok, if ok { "" } else { "content hash differs" });
        listed.insert(entry.path.clone(), entry.sha256.clone());
    }
    let tree = Tree { root, listed };
    let cfg: ExperimentConfig = tree.json(CONFIG)?;
    let mesh = SurfaceMesh::from_json(&tree.read(MESH)?).map_err(|e| RunError::Missing(format!("{MESH}: {e}")))?;

    let solves = cfg
        .solver
        .p_schedule
        .iter()
        .map(|&p| tree.json::<SolveRecord>(&solve_path(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let duals = if cfg.analysis.duality {
        cfg.solver
            .p_schedule
            .iter()
            .map(|&p| tree.json::<DualRecord>(&dual_path(p / (p - 1.0))))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        Vec::new()
    };
    let limits = if cfg.analysis.limits { Some(tree.json::<LimitReport>(LIMITS)?) } else { None };
    let st = Stored { solves, duals, limits };

    let mut suites = vec![
        mesh_topology(&cfg, &mesh),
        penergy_reports(&cfg, &mesh, &st),
        penergy_kp_law(&mesh, &st),
        penergy_annulus_oracle(&cfg, &mesh, &st),
    ];
    if cfg.analysis.duality {
        suites.push(duality_mass_law(&mesh, &st));
        suites.push(duality_pairing(&mesh, &st));
        suites.push(duality_conjugacy(&mesh, &st));
        suites.push(duality_concentration(&cfg, &mesh, &st));
    } else {
        for name in ["duality.mass-law", "duality.pairing", "duality.conjugacy", "duality.concentration"] {
            suites.push(SuiteResult::skipped(name, "analysis.duality is off"));
        }
    }
    if cfg.analysis.limits {
        suites.push(limits_k_vs_l(&cfg, &mesh, &st)?);
        suites.push(limits_max_estimate(&cfg, &mesh, &st)?);
        suites.push(limits_stretch(&cfg, &mesh, &st));
        suites.push(limits_least_gradient(&cfg, &mesh, &st));
    } else {
        for name in ["limits.k-vs-l", "limits.max-estimate", "limits.stretch", "limits.least-gradient"] {
            suites.push(SuiteResult::skipped(name, "analysis.limits is off"));
        }
    }
    if cfg.analysis.cones {
        suites.push(hyperbolic_cones(&cfg, &tree)?);
    } else {
        suites.push(SuiteResult::skipped("hyperbolic.cones", "analysis.cones is off"));
    }
    if cfg.analysis.lamination {
        suites.extend(lamination_suites(&cfg, &mesh, &st, &tree)?);
    } else {
        for name in ["lamination.cocycle", "lamination.current", "lamination.bv"] {
            suites.push(SuiteResult::skipped(name, "analysis.lamination is off"));
        }
    }
    suites.push(integrity);
    Ok(VerifyReport { suites })
}

/// Differential of a stored field; a field that fails its equivariance
/// check yields the zero form, and the failure is reported by the suites
/// that check equivariance.
fn diff(mesh: &SurfaceMesh, u: &EquivariantField) -> PLOneForm {
    differential(mesh, u).unwrap_or_else(|_| PLOneForm::zero(mesh.n_triangles()))
}

fn last_p(cfg: &ExperimentConfig) -> f64 {
    *cfg.solver.p_schedule.last().expect("validated schedule")
}

fn asymptotic(cfg: &ExperimentConfig) -> bool {
    last_p(cfg) >= ASYMPTOTIC_P
}

fn annulus_radii(mesh: &SurfaceMesh) -> Option<(f64, f64)> {
    match mesh.domain() {
        Some(Domain::Annulus { r0, r1, .. }) => Some((*r0, *r1)),
        _ => None,
    }
}

fn mesh_topology(cfg: &ExperimentConfig, mesh: &SurfaceMesh) -> SuiteResult {
    let mut s = SuiteResult::new("mesh.topology");
    match cfg.build_mesh() {
        Ok(rebuilt) => s.check(
            "rebuild matches stored mesh",
            rebuilt.document() == mesh.document(),
            "mesh.json differs from the configured domain",
        ),
        Err(e) => s.check("rebuild matches stored mesh", false, e.to_string()),
    }
    let chi = mesh.euler_characteristic();
    s.check("euler characteristic 0", chi == 0, format!("chi = {chi}"));
    let want = match cfg.domain {
        DomainSpec::Torus { .. } => 2,
        DomainSpec::Annulus { .. } => 1,
    };
    s.check(
        "homology generators",
        mesh.n_generators() == want,
        format!("{} generators, expected {want}", mesh.n_generators()),
    );
    let positive = (0..mesh.n_triangles()).all(|t| mesh.area(t) > 0.0);
    s.check("positive triangle areas", positive, "");
    s
}

fn penergy_reports(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let mut s = SuiteResult::new("penergy.reports");
    let rho = cfg.rho();
    for (rec, &p) in st.solves.iter().zip(&cfg.solver.p_schedule) {
        let r = &rec.report;
        s.check(format!("p={p} exponent"), r.p == p, format!("stored p = {}", r.p));
        s.check(
            format!("p={p} equivariance"),
            rec.field.check(mesh).is_ok() && rec.field.rho == rho,
            "field is not equivariant for the configured periods",
        );
        s.check(format!("p={p} converged"), r.converged && !r.stalled, format!("grad {:e}", r.grad_norm));
        let again = report_for(mesh, &rec.field, p, r.delta);
        s.close(format!("p={p} energy"), r.energy, again.energy, 1e-10);
        s.close(format!("p={p} max_du"), r.max_du, again.max_du, 1e-12);
        s.close(format!("p={p} lp_mean"), r.lp_mean, again.lp_mean, 1e-10);
    }
    s
}

fn penergy_kp_law(mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let mut s = SuiteResult::new("penergy.kp-law");
    for rec in &st.solves {
        let r = &rec.report;
        match (r.k_p, kp_from_energy(r.energy, r.p)) {
            (Some(k), Ok(want)) => {
                s.close(format!("p={} k_p = J^(-1/(p-1))", r.p), k, want, 1e-12);
                let du = diff(mesh, &rec.field).scaled(k);
                let int: f64 = (0..mesh.n_triangles())
                    .map(|t| mesh.norm(t, du.covectors[t]).powf(r.p) * mesh.area(t))
                    .sum();
                s.close(format!("p={} int |k_p du|^p = k_p", r.p), int, k, 1e-9);
            }
            (k, want) => s.check(format!("p={} k_p defined", r.p), false, format!("{k:?} / {want:?}")),
        }
    }
    s
}

fn penergy_annulus_oracle(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let Some((r0, r1)) = annulus_radii(mesh) else {
        return SuiteResult::skipped("penergy.annulus-oracle", "annulus only");
    };
    let mut s = SuiteResult::new("penergy.annulus-oracle");
    // u = (rho / 2 pi) theta is the minimizer for every p
    let scale = cfg.rho().periods[0].abs() / (2.0 * PI);
    for rec in st.solves.iter().filter(|r| r.report.p >= 8.0) {
        let p = rec.report.p;
        let exact = scale.powf(p) * annulus_energy_exact(r0, r1, p);
        let err = (rec.report.energy - exact).abs() / exact;
        s.check(format!("p={p} energy within 1%"), err <= 0.01, format!("rel err {err:.3e}"));
        let du = diff(mesh, &rec.field);
        let worst = (0..mesh.n_triangles())
            .map(|t| {
                let want = scale / mesh.centroid(t)[0];
                (mesh.norm(t, du.covectors[t]) - want).abs() / want
            })
            .fold(0.0, f64::max);
        s.check(format!("p={p} |du| = 1/r within 2%"), worst <= 0.02, format!("max rel err {worst:.3e}"));
    }
    s
}

fn forms(mesh: &SurfaceMesh, solve: &SolveRecord, dual: &DualRecord) -> (PLOneForm, PLOneForm, PLOneForm, PLOneForm) {
    let du = diff(mesh, &solve.field);
    let u_form = du.scaled(dual.report.k_p);
    let v_form = dual_of(mesh, &u_form, solve.report.p);
    let dv = diff(mesh, &dual.v);
    (du, u_form, v_form, dv)
}

fn duality_mass_law(mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let mut s = SuiteResult::new("duality.mass-law");
    for (sol, d) in st.solves.iter().zip(&st.duals) {
        let (p, r) = (sol.report.p, &d.report);
        s.check(format!("p={p} pairs with its solve"), r.p == p, format!("dual p = {}", r.p));
        match kp_from_energy(sol.report.energy, p) {
            Ok(k) => s.close(format!("p={p} k_p from energy"), r.k_p, k, 1e-12),
            Err(e) => s.check(format!("p={p} k_p from energy"), false, e.to_string()),
        }
        s.close(format!("p={p} q conjugate to p"), r.q, p / (p - 1.0), 1e-14);
        let (_, u_form, _, dv) = forms(mesh, sol, d);
        let form_mass: f64 = (0..mesh.n_triangles())
            .map(|t| mesh.norm(t, u_form.covectors[t]).powf(p - 1.0) * mesh.area(t))
            .sum();
        s.close(format!("p={p} form mass"), r.form_mass, form_mass, 1e-9);
        let bound = mass_bound(mesh.total_area(), r.k_p, p);
        s.check(
            format!("p={p} form mass below Holder bound"),
            form_mass <= bound * (1.0 + 1e-9),
            format!("{form_mass:e} vs {bound:e}"),
        );
        s.close(format!("p={p} dual mass"), r.mass, dv.mass(mesh), 1e-9);
    }
    s
}

fn duality_pairing(mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let mut s = SuiteResult::new("duality.pairing");
    for (sol, d) in st.solves.iter().zip(&st.duals) {
        let p = sol.report.p;
        let (du, _, _, dv) = forms(mesh, sol, d);
        let pr = pairing(mesh, &du, &dv);
        s.close(format!("p={p} stored pairing"), d.report.pairing, pr, 1e-9);
        s.check(format!("p={p} pairing = 1"), (pr - 1.0).abs() <= 1e-3, format!("{pr:.9}"));
    }
    s
}

fn duality_conjugacy(mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let mut s = SuiteResult::new("duality.conjugacy");
    for (sol, d) in st.solves.iter().zip(&st.duals) {
        let p = sol.report.p;
        let (_, u_form, v_form, dv) = forms(mesh, sol, d);
        let res = conjugacy_residual(mesh, &u_form, &v_form, d.report.q);
        s.check(format!("p={p} involution"), res <= 1e-10, format!("residual {res:.2e}"));
        match dual_periods(mesh, &v_form) {
            Ok(alpha) => {
                let same = alpha
                    .periods
                    .iter()
                    .zip(&d.v.rho.periods)
                    .all(|(a, b)| (a - b).abs() <= 1e-10 * (1.0 + b.abs()));
                s.check(format!("p={p} periods of V"), same && d.report.alpha == d.v.rho.periods, format!("{:?}", alpha.periods));
            }
            Err(e) => s.check(format!("p={p} periods of V"), false, e.to_string()),
        }
        s.check(format!("p={p} equivariance of v"), d.v.check(mesh).is_ok(), "");
        let lsq: f64 = (0..mesh.n_triangles())
            .map(|t| {
                let (a, b) = (dv.covectors[t], v_form.covectors[t]);
                mesh.norm_sq(t, [a[0] - b[0], a[1] - b[1]]) * mesh.area(t)
            })
            .sum::<f64>()
            .sqrt();
        s.close(format!("p={p} primitive residual"), d.report.residual, lsq, 1e-9);
    }
    s
}

fn duality_concentration(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let Some((r0, _)) = annulus_radii(mesh) else {
        return SuiteResult::skipped("duality.concentration", "annulus only");
    };
    let mut s = SuiteResult::new("duality.concentration");
    let u_ref = &st.solves.last().expect("non-empty").field;
    let region = Region::radius_above(mesh, cfg.limits.region_factor * r0);
    let regions = [Region::everything(mesh), region.clone()];
    let mut fractions = Vec::new();
    for (sol, d) in st.solves.iter().zip(&st.duals) {
        let p = sol.report.p;
        let (_, u_form, v_form, _) = forms(mesh, sol, d);
        let diag = concentration_diagnostics(mesh, p, &u_form, &v_form, u_ref, &regions);
        let same = diag
            .regions
            .iter()
            .zip(&d.report.diagnostics.regions)
            .all(|(a, b)| a.region == b.region && (a.mass - b.mass).abs() <= 1e-9 * (1.0 + b.mass.abs()));
        s.check(format!("p={p} stored region masses"), same, "");
        fractions.push((p, diag.regions[1].fraction));
    }
    if asymptotic(cfg) {
        let (p, f) = *fractions.last().expect("non-empty");
        s.check(format!("fraction in {} below 5% at p={p}", region.name), f < 0.05, format!("{f:.4}"));
        let tail = &fractions[fractions.len().saturating_sub(3)..];
        let dec = tail.windows(2).all(|w| w[1].1 < w[0].1);
        s.check("fraction decreasing over the last three exponents", dec, format!("{tail:?}"));
    }
    s
}

fn limits_k_vs_l(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> Result<SuiteResult, RunError> {
    let lim = st.limits.as_ref().expect("limits on");
    let mut s = SuiteResult::new("limits.k-vs-l");
    let (k, argmax) = k_of(cfg, mesh)?;
    s.close("K recomputed", lim.k_hat, k, 1e-14);
    s.check("argmax class", lim.argmax_class == argmax, format!("{argmax:?}"));
    let tol = 1e-9 * (1.0 + lim.l_hat);
    s.check("K <= L_hat", k <= lim.l_hat + tol, format!("K = {k:e}, L_hat = {:e}", lim.l_hat));
    if asymptotic(cfg) {
        let rel = (k - lim.l_hat).abs() / lim.l_hat;
        s.check("K = L_hat within 2%", rel <= 0.02, format!("rel {rel:.3e}"));
        let last = &st.solves.last().expect("non-empty").report;
        if let Some(kp) = last.k_p {
            let rel = (kp - 1.0 / lim.l_hat).abs() * lim.l_hat;
            s.check(format!("k_p = 1/L within 5% at p={}", last.p), rel <= 0.05, format!("rel {rel:.3e}"));
        }
        if let Some(d) = st.duals.last() {
            let rel = (d.report.mass - 1.0 / lim.l_hat).abs() * lim.l_hat;
            s.check(format!("mass of dv = 1/L within 5% at p={}", d.report.p), rel <= 0.05, format!("rel {rel:.3e}"));
        }
    }
    Ok(s)
}

fn limits_max_estimate(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> Result<SuiteResult, RunError> {
    let lim = st.limits.as_ref().expect("limits on");
    let mut s = SuiteResult::new("limits.max-estimate");
    let last = &st.solves.last().expect("non-empty").report;
    s.close("L_hat = max |du| at the last exponent", lim.l_hat, last.max_du, 1e-14);
    let rows_match = lim.traces.len() == st.solves.len()
        && lim.traces.iter().zip(&st.solves).all(|(t, r)| {
            t.p == r.report.p && t.max_du == r.report.max_du && t.lp_mean == r.report.lp_mean
        });
    s.check("convergence rows match solves", rows_match, "");
    s.check("estimators monotone along p", lim.estimate.monotone, "");
    if asymptotic(cfg) {
        let (k, _) = k_of(cfg, mesh)?;
        let rel = (last.max_du - k).abs() / k;
        s.check(format!("max |du| within 5% of L at p={}", last.p), rel <= 0.05, format!("rel {rel:.3e}"));
        let tail: Vec<f64> = st.solves.iter().rev().take(3).rev().map(|r| r.report.max_du).collect();
        let dec = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
        s.check("max |du| decreasing over the last three exponents", dec, format!("{tail:?}"));
    }
    Ok(s)
}

fn limits_stretch(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let lim = st.limits.as_ref().expect("limits on");
    let mut s = SuiteResult::new("limits.stretch");
    let u = &st.solves.last().expect("non-empty").field;
    match stretch_set(mesh, u, lim.l_hat, lim.stretch_eps) {
        Ok(set) => {
            s.check(
                "stretch set recomputed",
                set.triangles.len() == lim.stretch_triangles && set.components.len() == lim.stretch_components.len(),
                format!("{} triangles, {} components", set.triangles.len(), set.components.len()),
            );
            if let Some((r0, _)) = annulus_radii(mesh) {
                let cap = r0 / (1.0 - lim.stretch_eps);
                let outer = set
                    .triangles
                    .iter()
                    .map(|&t| laminate::duality::centroid_radius(mesh, t))
                    .fold(0.0, f64::max);
                s.check(
                    format!("stretch set inside r < r0/(1-eps) = {cap:.4}"),
                    outer < cap,
                    format!("outermost centroid at r = {outer:.4}"),
                );
            }
        }
        Err(e) => s.check("stretch set recomputed", false, e.to_string()),
    }
    s.check("threshold matches config", lim.stretch_eps == cfg.limits.eps, "");
    s.check("sweep recomputed", sweep(mesh, u, lim.l_hat, &cfg.limits.sweep) == lim.sweep, "");
    s
}

fn limits_least_gradient(cfg: &ExperimentConfig, mesh: &SurfaceMesh, st: &Stored) -> SuiteResult {
    let lim = st.limits.as_ref().expect("limits on");
    let Some(rec) = &lim.least_gradient else {
        return SuiteResult::skipped("limits.least-gradient", "closed surfaces only");
    };
    let mut s = SuiteResult::new("limits.least-gradient");
    let Some(d) = st.duals.last() else {
        s.check("dual field available", false, "");
        return s;
    };
    let field = laminate::duality::DualField {
        v: d.v.clone(),
        q: d.report.q,
        residual: d.report.residual,
        mass: d.report.mass,
    };
    match least_gradient_test(mesh, &field, cfg.limits.trials, cfg.seed, cfg.limits.trial_tol) {
        Ok(again) => {
            s.check("trials recomputed", again == *rec, format!("worst margin {:e}", again.worst_margin));
            s.check(
                format!("no violations in {} trials at tol {:e}", again.trials, again.tol),
                again.passed(),
                format!("{} violations", again.violations.len()),
            );
        }
        Err(e) => s.check("trials recomputed", false, e.to_string()),
    }
    s
}

fn hyperbolic_cones(cfg: &ExperimentConfig, tree: &Tree) -> Result<SuiteResult, RunError> {
    let mut s = SuiteResult::new("hyperbolic.cones");
    let stored: Vec<ConeSummary> = tree.json(CONES)?;
    let c = &cfg.cones;
    let mut k = 0;
    for &n in &c.n {
        let mut devs = Vec::new();
        for &p in &c.p {
            let tag = format!("n={n} p={p}");
            let prof = match cone_profile(n, p, c.t_max, c.steps) {
                Ok(prof) => prof,
                Err(e) => {
                    s.check(format!("{tag} profile"), false, e.to_string());
                    continue;
                }
            };
            let table = tree.read(&cone_path(n, p))?;
            s.check(format!("{tag} table recomputed"), table == cone_csv(&prof), "");
            let sum = cone_summary(&prof, c.t_max, c.steps);
            s.check(format!("{tag} summary recomputed"), stored.get(k) == Some(&sum), "");
            k += 1;
            s.check(format!("{tag} sandwich"), sum.sandwich, "");
            s.check(format!("{tag} increasing"), sum.strictly_increasing, "");
            s.check(
                format!("{tag} radial residual"),
                sum.radial_residual <= 1e-8,
                format!("{:.2e}", sum.radial_residual),
            );
            if p == 512.0 {
                s.check(format!("{tag} f(1) near 1"), (sum.f_at_1 - 1.0).abs() <= 1e-2, format!("{:.6}", sum.f_at_1));
            }
            devs.push((p, sum.sup_deviation));
        }
        let dec = devs.windows(2).all(|w| w[1].1 < w[0].1);
        s.check(format!("n={n} sup |f_p - t| decreasing in p"), dec, format!("{devs:?}"));
    }
    s.check("summary count", stored.len() == k, format!("{} stored", stored.len()));
    Ok(s)
}

fn lamination_suites(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    st: &Stored,
    tree: &Tree,
) -> Result<Vec<SuiteResult>, RunError> {
    let record: LaminationRecord = tree.json(LAMINATION)?;
    let lim = st.limits.as_ref().expect("limits on");
    let sol = st.solves.last().expect("non-empty");
    let d = st.duals.last().expect("duality on");
    let dual = laminate::duality::DualField {
        v: d.v.clone(),
        q: d.report.q,
        residual: d.report.residual,
        mass: d.report.mass,
    };
    let set = stretch_set(mesh, &sol.field, lim.l_hat, lim.stretch_eps)
        .map_err(|e| RunError::Failed(format!("stretch set: {e}")))?;
    let bv_opts = BvOptions {
        atom_tol: cfg.lamination.atom_tol,
        ..BvOptions::default()
    };
    let mut bv = SuiteResult::new("lamination.bv");
    let out = match record {
        LaminationRecord::Annulus(rec) => {
            let mut s = SuiteResult::new("lamination.cocycle");
            let (again, _, csv) = annulus_lamination(cfg, mesh, &dual, sol.report.p, &set)?;
            s.check("record recomputed", again == rec, "");
            s.check("cocycle table recomputed", tree.read(COCYCLE_CSV)? == csv, "");
            let ax = &again.axioms;
            s.check(
                format!("all {} transversals admissible", ax.paths),
                ax.rejected.is_empty(),
                format!("rejected {:?}", ax.rejected),
            );
            s.check("additivity exact", ax.additivity_failures.is_empty(), format!("{:?}", ax.additivity_failures));
            s.check("reversal exact", ax.reversal_failures.is_empty(), format!("{:?}", ax.reversal_failures));
            s.check("homotopy exact", ax.homotopy_failures.is_empty(), format!("{:?}", ax.homotopy_failures));
            s.check(
                format!("non-negative on {} positive paths", ax.positive_paths),
                ax.nonneg_failures.is_empty() && ax.positive_paths > 0,
                format!("min {:e}, slack {:e}", ax.min_positive_value, ax.nonneg_tol),
            );
            s.check(
                "plaques constant to plaque_tol",
                again.plaques.iter().all(|p| !p.flagged),
                format!("{} plaques", again.plaques.len()),
            );
            if asymptotic(cfg) {
                s.check(
                    "inner jump = mass / leaf length within 5%",
                    again.jump_rel_error <= 0.05,
                    format!("rel {:.3e}", again.jump_rel_error),
                );
            }
            match bv_decompose(&rec.trace, bv_opts) {
                Ok(b) => {
                    bv.check("decomposition recomputed", b == rec.bv, "");
                    let sum = b.atom_mass + b.cantor_mass + b.ac_mass;
                    bv.close("parts sum to total variation", sum, b.total_variation, 1e-12);
                }
                Err(e) => bv.check("decomposition recomputed", false, e.to_string()),
            }
            vec![s, SuiteResult::skipped("lamination.current", "torus only"), bv]
        }
        LaminationRecord::Torus(rec) => {
            let mut s = SuiteResult::new("lamination.current");
            let again = torus_lamination(cfg, mesh, &dual, &set)?;
            s.check("record recomputed", again == rec, "");
            for (i, e) in again.currents.iter().enumerate() {
                let c = &e.check;
                s.check(format!("lamination {i} closed"), c.closedness <= 1e-10, format!("{:.2e}", c.closedness));
                s.check(
                    format!("lamination {i} pairing = current"),
                    c.max_error <= 1e-8 * c.total_weight,
                    format!("{:.2e} (weight {:.3})", c.max_error, c.total_weight),
                );
                if let Ok(fresh) = current_check(mesh, &e.lamination, cfg.lamination.exact_forms, cfg.seed) {
                    s.check(format!("lamination {i} recomputed"), fresh == *c, "");
                }
            }
            match bv_decompose(&rec.trace, bv_opts) {
                Ok(b) => {
                    bv.check("decomposition recomputed", b == rec.bv, "");
                    let sum = b.atom_mass + b.cantor_mass + b.ac_mass;
                    bv.close("parts sum to total variation", sum, b.total_variation, 1e-12);
                    let w = rec.currents[0].lamination.total_weight();
                    bv.close("variation equals lamination weight", b.total_variation, w, 1e-12);
                }
                Err(e) => bv.check("decomposition recomputed", false, e.to_string()),
            }
            vec![SuiteResult::skipped("lamination.cocycle", "annulus only"), s, bv]
        }
    };
    Ok(out)
}
