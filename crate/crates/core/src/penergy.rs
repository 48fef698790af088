//! Discrete p-energy of equivariant P1 fields and its minimization.
//!
//! The solver works with one unknown per vertex class of the closed surface,
//! class 0 pinned to zero. Each solve minimizes the regularized energy
//! `sum_T (|du_T|^2 + delta^2)^(p/2) area(T)` by damped Newton with Armijo
//! backtracking; an L-BFGS iteration takes over whenever the Hessian cannot
//! be factored.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{dot, SymmetricBuilder};
use crate::mesh::{differential_unchecked, EquivariantField, Homomorphism, MeshError, SurfaceMesh};
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("energy is zero, so k_p is undefined (trivial period class)")]
    ZeroEnergy,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LineSearch {
    pub shrink: f64,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            shrink: 0.5,
            armijo: 1e-4,
            max_backtracks: 60,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub p_schedule: Vec<f64>,
    /// Regularization; `None` means `1e-8 / sqrt(area)`.
    pub delta: Option<f64>,
    /// Sup-norm gradient tolerance; `None` means `1e-9 * p * area`.
    pub grad_tol: Option<f64>,
    pub max_iters: usize,
    pub line_search: LineSearch,
    pub lbfgs_memory: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            p_schedule: vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0],
            delta: None,
            grad_tol: None,
            max_iters: 200,
            line_search: LineSearch::default(),
            lbfgs_memory: 12,
        }
    }
}

impl SolverConfig {
    pub fn with_schedule(p_schedule: Vec<f64>) -> Self {
        Self {
            p_schedule,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SolveError> {
        let bad = |m: String| Err(SolveError::Config(m));
        if self.p_schedule.is_empty() {
            return bad("p_schedule is empty".into());
        }
        if !(self.p_schedule[0] >= 2.0) {
            return bad(format!("p_schedule starts at {} < 2", self.p_schedule[0]));
        }
        if self.p_schedule.iter().any(|p| !p.is_finite()) {
            return bad("p_schedule has a non-finite entry".into());
        }
        if self.p_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("p_schedule is not strictly increasing".into());
        }
        if let Some(d) = self.delta {
            if !(d >= 0.0) || !d.is_finite() {
                return bad(format!("delta must be a finite non-negative number, got {d}"));
            }
        }
        if let Some(t) = self.grad_tol {
            if !(t > 0.0) || !t.is_finite() {
                return bad(format!("grad_tol must be positive, got {t}"));
            }
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return bad(format!("line_search.shrink must lie in (0,1), got {}", ls.shrink));
        }
        if !(ls.armijo > 0.0 && ls.armijo < 0.5) {
            return bad(format!("line_search.armijo must lie in (0,0.5), got {}", ls.armijo));
        }
        if self.lbfgs_memory == 0 {
            return bad("lbfgs_memory must be positive".into());
        }
        Ok(())
    }

    pub fn delta_for(&self, mesh: &SurfaceMesh) -> f64 {
        self.delta.unwrap_or(1e-8 / mesh.length_scale())
    }

    pub fn grad_tol_for(&self, mesh: &SurfaceMesh, p: f64) -> f64 {
        self.grad_tol.unwrap_or(1e-9 * p * mesh.total_area())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    Newton,
    Lbfgs,
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub p: f64,
    /// Unregularized energy of the returned field.
    pub energy: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub max_du: f64,
    pub lp_mean: f64,
    /// `None` when the energy vanishes.
    pub k_p: Option<f64>,
    pub delta: f64,
    pub energy_regularized: f64,
    pub converged: bool,
    pub stalled: bool,
    pub method: SolveMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iter: usize,
    pub energy: f64,
    pub grad_norm: f64,
    pub step: f64,
}

/// Result of one p-solve.
#[derive(Clone, Debug)]
pub struct Stage {
    pub field: EquivariantField,
    pub report: SolveReport,
    pub trace: Vec<TraceRow>,
}

#[inline]
fn phi_derivs(s: f64, p: f64) -> (f64, f64, f64) {
    let h = 0.5 * p;
    let v = s.powf(h);
    let d1 = if s > 0.0 { h * v / s } else if h == 1.0 { 1.0 } else { 0.0 };
    let d2 = if s > 0.0 { (h - 1.0) * d1 / s } else { 0.0 };
    (v, d1, d2)
}

/// Regularized p-energy `sum_T (|du_T|^2 + delta^2)^(p/2) area(T)`.
pub fn energy(mesh: &SurfaceMesh, u: &EquivariantField, p: f64, delta: f64) -> f64 {
    let du = differential_unchecked(mesh, u);
    let parts = par::map_range(mesh.n_triangles(), |t| {
        (mesh.norm_sq(t, du.covectors[t]) + delta * delta).powf(0.5 * p) * mesh.area(t)
    });
    parts.iter().sum()
}

/// Gradient of [`energy`] with respect to the value of each vertex class
/// (periods fixed).
pub fn gradient(mesh: &SurfaceMesh, u: &EquivariantField, p: f64, delta: f64) -> Vec<f64> {
    let local = local_gradients(mesh, u, p, delta);
    let mut g = vec![0.0; mesh.n_classes()];
    for (t, loc) in local.iter().enumerate() {
        let tri = mesh.triangles()[t];
        for k in 0..3 {
            g[mesh.class_of(tri[k])] += loc[k];
        }
    }
    g
}

fn local_gradients(mesh: &SurfaceMesh, u: &EquivariantField, p: f64, delta: f64) -> Vec<[f64; 3]> {
    par::map_range(mesh.n_triangles(), |t| {
        let w = mesh.gradient_of(t, u.corner_values(mesh, t));
        let s = mesh.norm_sq(t, w) + delta * delta;
        let (_, d1, _) = phi_derivs(s, p);
        let m = mesh.inv_metric(t);
        let mg = [m[0][0] * w[0] + m[0][1] * w[1], m[1][0] * w[0] + m[1][1] * w[1]];
        let gr = mesh.triangle_grad(t);
        let c = 2.0 * d1 * mesh.area(t);
        [0, 1, 2].map(|k| c * (mg[0] * gr[0][k] + mg[1] * gr[1][k]))
    })
}

fn local_hessians(mesh: &SurfaceMesh, u: &EquivariantField, p: f64, delta: f64) -> Vec<[[f64; 3]; 3]> {
    par::map_range(mesh.n_triangles(), |t| {
        let w = mesh.gradient_of(t, u.corner_values(mesh, t));
        let s = mesh.norm_sq(t, w) + delta * delta;
        let (_, d1, d2) = phi_derivs(s, p);
        let m = mesh.inv_metric(t);
        let mg = [m[0][0] * w[0] + m[0][1] * w[1], m[1][0] * w[0] + m[1][1] * w[1]];
        let gr = mesh.triangle_grad(t);
        let a = mesh.area(t);
        let proj: [f64; 3] = [0, 1, 2].map(|k| mg[0] * gr[0][k] + mg[1] * gr[1][k]);
        let mut h = [[0.0; 3]; 3];
        for k in 0..3 {
            for l in 0..3 {
                let gkl = gr[0][k] * (m[0][0] * gr[0][l] + m[0][1] * gr[1][l])
                    + gr[1][k] * (m[1][0] * gr[0][l] + m[1][1] * gr[1][l]);
                h[k][l] = a * (2.0 * d1 * gkl + 4.0 * d2 * proj[k] * proj[l]);
            }
        }
        h
    })
}

/// `k_p = J_p^(-1/(p-1))`, the scalar with `int |k_p du_p|^p = k_p`.
pub fn normalization_kp(report: &SolveReport) -> Result<f64, SolveError> {
    kp_from_energy(report.energy, report.p)
}

pub fn kp_from_energy(energy: f64, p: f64) -> Result<f64, SolveError> {
    if !(energy > 0.0) {
        return Err(SolveError::ZeroEnergy);
    }
    Ok(energy.powf(-1.0 / (p - 1.0)))
}

/// Statistics of a field at exponent `p` (regularization only enters
/// `energy_regularized`).
pub fn report_for(mesh: &SurfaceMesh, u: &EquivariantField, p: f64, delta: f64) -> SolveReport {
    let du = differential_unchecked(mesh, u);
    let norms = du.norms(mesh);
    let energy: f64 = norms
        .iter()
        .enumerate()
        .map(|(t, n)| n.powf(p) * mesh.area(t))
        .sum();
    let g = gradient(mesh, u, p, delta);
    SolveReport {
        p,
        energy,
        grad_norm: g.iter().skip(1).fold(0.0, |a, b| a.max(b.abs())),
        iterations: 0,
        max_du: norms.iter().cloned().fold(0.0, f64::max),
        lp_mean: (energy / mesh.total_area()).powf(1.0 / p),
        k_p: kp_from_energy(energy, p).ok(),
        delta,
        energy_regularized: self::energy(mesh, u, p, delta),
        converged: false,
        stalled: false,
        method: SolveMethod::Newton,
    }
}

struct Problem<'a> {
    mesh: &'a SurfaceMesh,
    rho: &'a Homomorphism,
    p: f64,
    delta: f64,
}

impl Problem<'_> {
    fn field(&self, x: &[f64]) -> EquivariantField {
        let mut free = Vec::with_capacity(x.len() + 1);
        free.push(0.0);
        free.extend_from_slice(x);
        EquivariantField::from_free(self.mesh, &free, self.rho.clone())
    }

    fn energy(&self, x: &[f64]) -> f64 {
        energy(self.mesh, &self.field(x), self.p, self.delta)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = gradient(self.mesh, &self.field(x), self.p, self.delta);
        g[1..].to_vec()
    }

    fn hessian(&self, x: &[f64]) -> SymmetricBuilder {
        let u = self.field(x);
        let local = local_hessians(self.mesh, &u, self.p, self.delta);
        let mut h = SymmetricBuilder::new(x.len());
        for (t, loc) in local.iter().enumerate() {
            let tri = self.mesh.triangles()[t];
            let cls = tri.map(|v| self.mesh.class_of(v));
            for k in 0..3 {
                for l in 0..=k {
                    if cls[k] == 0 || cls[l] == 0 {
                        continue;
                    }
                    let (i, j) = (cls[k] - 1, cls[l] - 1);
                    if k == l {
                        h.add(i, i, loc[k][k]);
                    } else if i == j {
                        h.add(i, i, 2.0 * loc[k][l]);
                    } else {
                        h.add(i, j, loc[k][l]);
                    }
                }
            }
        }
        h
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn axpy(x: &[f64], a: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(xi, di)| xi + a * di).collect()
}

enum StepOutcome {
    Accepted { x: Vec<f64>, e: f64, step: f64 },
    /// No decrease at any step size; the model decrease is at roundoff level.
    Flat,
    Failed,
}

fn backtrack(prob: &Problem, ls: &LineSearch, x: &[f64], e0: f64, g: &[f64], d: &[f64]) -> StepOutcome {
    let slope = dot(g, d);
    if !(slope < 0.0) {
        return StepOutcome::Failed;
    }
    if -slope <= 1e-15 * e0.abs().max(f64::MIN_POSITIVE) {
        return StepOutcome::Flat;
    }
    let mut a = 1.0;
    for _ in 0..=ls.max_backtracks {
        let xn = axpy(x, a, d);
        let en = prob.energy(&xn);
        if en.is_finite() && en <= e0 + ls.armijo * a * slope {
            return StepOutcome::Accepted { x: xn, e: en, step: a };
        }
        a *= ls.shrink;
    }
    if -slope <= 1e-11 * e0.abs() {
        StepOutcome::Flat
    } else {
        StepOutcome::Failed
    }
}

/// Minimize the regularized p-energy for a single exponent.
pub fn solve(
    mesh: &SurfaceMesh,
    rho: &Homomorphism,
    p: f64,
    config: &SolverConfig,
    warm_start: Option<&EquivariantField>,
) -> Result<Stage, SolveError> {
    let single = SolverConfig {
        p_schedule: vec![p],
        ..config.clone()
    };
    single.validate()?;
    if rho.periods.len() != mesh.n_generators() {
        return Err(MeshError::SizeMismatch {
            what: "periods",
            expected: mesh.n_generators(),
            got: rho.periods.len(),
        }
        .into());
    }
    let delta = config.delta_for(mesh);
    let tol = config.grad_tol_for(mesh, p);
    let prob = Problem { mesh, rho, p, delta };
    let mut x: Vec<f64> = match warm_start {
        Some(w) => {
            w.check(mesh)?;
            let free = w.free_values(mesh);
            free[1..].iter().map(|v| v - free[0]).collect()
        }
        None => vec![0.0; mesh.n_classes() - 1],
    };
    let mut e = prob.energy(&x);
    let mut g = prob.gradient(&x);
    let mut trace = vec![TraceRow {
        iter: 0,
        energy: e,
        grad_norm: sup_norm(&g),
        step: 0.0,
    }];
    let mut used_newton = false;
    let mut used_lbfgs = false;
    let mut converged = sup_norm(&g) <= tol;
    let mut stalled = false;
    let mut iters = 0;
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
    while !converged && iters < config.max_iters {
        iters += 1;
        let newton_dir = if x.is_empty() {
            None
        } else {
            prob.hessian(&x)
                .cholesky()
                .map(|f| f.solve(&g).into_iter().map(|v| -v).collect::<Vec<_>>())
        };
        let (dir, is_newton) = match newton_dir {
            Some(d) if dot(&d, &g) < 0.0 => (d, true),
            _ => (lbfgs_direction(&g, &memory), false),
        };
        match backtrack(&prob, &config.line_search, &x, e, &g, &dir) {
            StepOutcome::Accepted { x: xn, e: en, step } => {
                let gn = prob.gradient(&xn);
                let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
                let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
                if dot(&s, &y) > 1e-300 {
                    memory.push_back((s, y));
                    if memory.len() > config.lbfgs_memory {
                        memory.pop_front();
                    }
                }
                used_newton |= is_newton;
                used_lbfgs |= !is_newton;
                x = xn;
                e = en;
                g = gn;
                let gnorm = sup_norm(&g);
                trace.push(TraceRow {
                    iter: iters,
                    energy: e,
                    grad_norm: gnorm,
                    step,
                });
                converged = gnorm <= tol;
            }
            StepOutcome::Flat => {
                converged = true;
            }
            StepOutcome::Failed => {
                if !is_newton && memory.is_empty() {
                    stalled = true;
                    break;
                }
                memory.clear();
                if !is_newton {
                    stalled = true;
                    break;
                }
            }
        }
    }
    if !converged {
        stalled = true;
    }
    let field = prob.field(&x);
    let mut report = report_for(mesh, &field, p, delta);
    report.grad_norm = sup_norm(&g);
    report.iterations = iters;
    report.converged = converged;
    report.stalled = stalled;
    report.method = match (used_newton, used_lbfgs) {
        (_, false) => SolveMethod::Newton,
        (false, true) => SolveMethod::Lbfgs,
        (true, true) => SolveMethod::Mixed,
    };
    Ok(Stage {
        field,
        report,
        trace,
    })
}

fn lbfgs_direction(g: &[f64], memory: &VecDeque<(Vec<f64>, Vec<f64>)>) -> Vec<f64> {
    let mut q = g.to_vec();
    let mut alphas = Vec::with_capacity(memory.len());
    for (s, y) in memory.iter().rev() {
        let rho = 1.0 / dot(y, s);
        let a = rho * dot(s, &q);
        for (qi, yi) in q.iter_mut().zip(y) {
            *qi -= a * yi;
        }
        alphas.push((a, rho));
    }
    if let Some((s, y)) = memory.back() {
        let gamma = dot(s, y) / dot(y, y);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    } else {
        let scale = 1.0 / crate::linalg::norm(g).max(1e-300);
        for qi in q.iter_mut() {
            *qi *= scale;
        }
    }
    for ((s, y), (a, rho)) in memory.iter().zip(alphas.iter().rev()) {
        let b = rho * dot(y, &q);
        for (qi, si) in q.iter_mut().zip(s) {
            *qi += (a - b) * si;
        }
    }
    q.iter().map(|v| -v).collect()
}

/// Run the p-continuation schedule; each stage warm-starts the next.
pub fn minimize(
    mesh: &SurfaceMesh,
    rho: &Homomorphism,
    config: &SolverConfig,
    warm_start: Option<&EquivariantField>,
) -> Result<Vec<Stage>, SolveError> {
    config.validate()?;
    let mut stages: Vec<Stage> = Vec::with_capacity(config.p_schedule.len());
    for &p in &config.p_schedule {
        let start = stages.last().map(|s| &s.field).or(warm_start);
        let stage = solve(mesh, rho, p, config, start)?;
        stages.push(stage);
    }
    Ok(stages)
}

/// Exact p-energy of `theta` on the annulus `r0 < r < r1`.
pub fn annulus_energy_exact(r0: f64, r1: f64, p: f64) -> f64 {
    use std::f64::consts::PI;
    if (p - 2.0).abs() < 1e-12 {
        2.0 * PI * (r1 / r0).ln()
    } else {
        2.0 * PI * (r0.powf(2.0 - p) - r1.powf(2.0 - p)) / (p - 2.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_annulus, build_torus, linear_covector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_field(m: &SurfaceMesh, rho: Vec<f64>, seed: u64) -> EquivariantField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let free: Vec<f64> = (0..m.n_classes()).map(|_| rng.random_range(-0.3..0.3)).collect();
        EquivariantField::from_free(m, &free, Homomorphism::new(rho))
    }

    #[test]
    fn energy_examples() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 6).unwrap();
        assert_eq!(energy(&m, &EquivariantField::constant(&m, 3.0), 4.0, 0.0), 0.0);
        let u = EquivariantField::from_fn(&m, Homomorphism::new(vec![1.0, 0.0]), |x| x[0]);
        for p in [2.0, 5.0, 64.0] {
            assert!((energy(&m, &u, p, 0.0) - 1.0).abs() < 1e-12);
        }
        let a = build_annulus(1.0, 2.0, 64, 32).unwrap();
        let th = EquivariantField::from_fn(&a, Homomorphism::new(vec![2.0 * PI]), |x| x[1]);
        let exact = 3.0 * PI / 4.0;
        assert!((energy(&a, &th, 4.0, 0.0) - exact).abs() / exact < 1e-3);
    }

    #[test]
    fn gradient_matches_central_differences() {
        let m = build_torus([[1.0, 0.0], [0.3, 1.1]], 5).unwrap();
        for (probe, p) in [2.0, 3.0, 8.0].into_iter().cycle().take(10).enumerate() {
            let u = random_field(&m, vec![0.6, -0.4], probe as u64);
            let g = gradient(&m, &u, p, 1e-3);
            let c = probe % m.n_classes();
            let h = 1e-7;
            let mut free = u.free_values(&m);
            free[c] += h;
            let ep = energy(&m, &EquivariantField::from_free(&m, &free, u.rho.clone()), p, 1e-3);
            free[c] -= 2.0 * h;
            let em = energy(&m, &EquivariantField::from_free(&m, &free, u.rho.clone()), p, 1e-3);
            let fd = (ep - em) / (2.0 * h);
            assert!((fd - g[c]).abs() <= 1e-6 * g[c].abs().max(1e-3), "{fd} vs {}", g[c]);
        }
    }

    #[test]
    fn hessian_matches_gradient_differences() {
        let m = build_torus([[1.0, 0.0], [0.3, 1.1]], 4).unwrap();
        let rho = Homomorphism::new(vec![0.6, -0.4]);
        let prob = Problem { mesh: &m, rho: &rho, p: 6.0, delta: 1e-2 };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x: Vec<f64> = (0..m.n_classes() - 1).map(|_| rng.random_range(-0.2..0.2)).collect();
        let h = prob.hessian(&x);
        let dirv: Vec<f64> = (0..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let hv = h.mul(&dirv);
        let eps = 1e-6;
        let gp = prob.gradient(&axpy(&x, eps, &dirv));
        let gm = prob.gradient(&axpy(&x, -eps, &dirv));
        for i in 0..x.len() {
            let fd = (gp[i] - gm[i]) / (2.0 * eps);
            assert!((fd - hv[i]).abs() < 1e-5 * (1.0 + hv[i].abs()));
        }
    }

    #[test]
    fn linear_field_is_critical() {
        let basis = [[1.0, 0.0], [0.3, 1.1]];
        let m = build_torus(basis, 5).unwrap();
        let a = linear_covector(basis, [0.7, 0.2]);
        let u = EquivariantField::from_fn(&m, Homomorphism::new(vec![0.7, 0.2]), |x| a[0] * x[0] + a[1] * x[1]);
        for p in [2.0, 8.0] {
            assert!(gradient(&m, &u, p, 0.0).iter().all(|g| g.abs() < 1e-12));
        }
    }

    #[test]
    fn quadratic_gradient_scales_linearly() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 4).unwrap();
        let u = random_field(&m, vec![0.5, 0.5], 2);
        let two = EquivariantField {
            values: u.values.iter().map(|v| 2.0 * v).collect(),
            rho: Homomorphism::new(vec![1.0, 1.0]),
        };
        let g1 = gradient(&m, &u, 2.0, 0.0);
        let g2 = gradient(&m, &two, 2.0, 0.0);
        for (a, b) in g1.iter().zip(&g2) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gauge_invariance() {
        let m = build_torus([[1.0, 0.0], [0.2, 0.9]], 4).unwrap();
        let u = random_field(&m, vec![0.1, 0.3], 6);
        let mut shifted = u.clone();
        shifted.add_constant(4.2);
        assert!((energy(&m, &u, 5.0, 0.0) - energy(&m, &shifted, 5.0, 0.0)).abs() < 1e-12);
        for (a, b) in gradient(&m, &u, 5.0, 0.0).iter().zip(gradient(&m, &shifted, 5.0, 0.0)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn kp_formula() {
        assert!((kp_from_energy(std::f64::consts::E, 2.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(kp_from_energy(0.0, 4.0), Err(SolveError::ZeroEnergy));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig::with_schedule(vec![1.5, 4.0]).validate().is_err());
        assert!(SolverConfig::with_schedule(vec![4.0, 4.0]).validate().is_err());
        assert!(SolverConfig::with_schedule(vec![]).validate().is_err());
        let mut c = SolverConfig::default();
        c.delta = Some(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn torus_minimizer_is_linear() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 8).unwrap();
        let stages = minimize(&m, &Homomorphism::new(vec![1.0, 0.0]), &SolverConfig::default(), None).unwrap();
        for s in &stages {
            assert!(s.report.converged, "{:?}", s.report);
            assert!((s.report.max_du - 1.0).abs() < 1e-8);
            assert!((s.report.energy - 1.0).abs() < 1e-8);
            for w in s.trace.windows(2) {
                assert!(w[1].energy <= w[0].energy);
            }
        }
    }

    #[test]
    fn zero_periods_give_constant() {
        let m = build_torus([[1.0, 0.0], [0.0, 1.0]], 4).unwrap();
        let st = solve(&m, &Homomorphism::zero(2), 4.0, &SolverConfig::default(), None).unwrap();
        assert!(st.report.energy.abs() < 1e-20);
        assert_eq!(st.report.k_p, None);
    }

    #[test]
    fn annulus_recovers_inverse_radius() {
        let a = build_annulus(1.0, 2.0, 32, 16).unwrap();
        let cfg = SolverConfig::with_schedule(vec![2.0, 8.0]);
        let stages = minimize(&a, &Homomorphism::new(vec![2.0 * PI]), &cfg, None).unwrap();
        let last = stages.last().unwrap();
        let du = differential_unchecked(&a, &last.field);
        for t in 0..a.n_triangles() {
            let r = a.centroid(t)[0];
            assert!((a.norm(t, du.covectors[t]) * r - 1.0).abs() < 0.02);
        }
        let exact = annulus_energy_exact(1.0, 2.0, 8.0);
        assert!((last.report.energy - exact).abs() / exact < 0.01);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]
            #[test]
            fn energy_nonnegative_and_gauge_free(seed in 0u64..10_000, p in 2.0f64..20.0, c in -5.0f64..5.0) {
                let m = build_torus([[1.0, 0.1], [0.2, 1.0]], 3).unwrap();
                let u = random_field(&m, vec![0.3, -0.2], seed);
                let mut v = u.clone();
                v.add_constant(c);
                let e = energy(&m, &u, p, 0.0);
                prop_assert!(e >= 0.0);
                prop_assert!((e - energy(&m, &v, p, 0.0)).abs() <= 1e-12 * (1.0 + e));
            }

            #[test]
            fn lp_mean_bounded_by_max(seed in 0u64..10_000, p in 2.0f64..40.0) {
                let m = build_torus([[1.0, 0.1], [0.2, 1.0]], 3).unwrap();
                let u = random_field(&m, vec![0.3, -0.2], seed);
                let r = report_for(&m, &u, p, 0.0);
                prop_assert!(r.max_du >= r.lp_mean - 1e-12);
            }
        }
    }
}
