//! Experiment pipeline. Control flow is sequential; parallelism lives inside
//! the library calls.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use laminate::duality::{concentration_diagnostics, conjugate, Conjugate, DualField, Region};
use laminate::hyperbolic::cone_profile;
use laminate::lamination::{
    bv_decompose, current_check, staircase_trace, BvOptions, CocycleValue, GeneratedPath, MeasuredLamination, PathKind,
    PlaqueDecomposition, PlaqueKind,
};
use laminate::limits::{
    annulus_mesh_k, compute_k, estimate_l, least_gradient_test, stretch_set, summarize, sweep, ConvergenceRow, LimitReport,
    StretchSet,
};
use laminate::mesh::{differential, Domain, EquivariantField, SurfaceMesh};
use laminate::penergy::{solve, Stage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::artifacts::{write_failure, ArtifactWriter, Manifest};
use crate::config::{DomainSpec, ExperimentConfig};
use crate::error::RunError;
use crate::plot::{self, Series};
use crate::records::*;
use crate::verify::{verify, VerifyReport};

/// Number of seeded measured laminations in the torus round trip when the
/// config does not name one.
pub const DEFAULT_LAMINATIONS: usize = 10;

pub struct RunOutcome {
    pub root: PathBuf,
    pub manifest: Manifest,
    pub verify: VerifyReport,
}

fn diff(mesh: &SurfaceMesh, u: &EquivariantField) -> laminate::mesh::PLOneForm {
    differential(mesh, u).expect("solver fields are equivariant")
}

fn failed(what: &str, e: impl std::fmt::Display) -> RunError {
    RunError::Failed(format!("{what}: {e}"))
}

/// Output directory: explicit override, then the config, then `./out`.
pub fn output_dir(cfg: &ExperimentConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Run the pipeline into `root`, then verify the tree. Any error after the
/// directory exists leaves a `failure.json` behind.
pub fn run(cfg: &ExperimentConfig, root: &Path) -> Result<RunOutcome, RunError> {
    cfg.validate()?;
    let result = run_inner(cfg, root);
    if let Err(e) = &result {
        write_failure(root, e)?;
    }
    result
}

fn run_inner(cfg: &ExperimentConfig, root: &Path) -> Result<RunOutcome, RunError> {
    let mut w = ArtifactWriter::create(root)?;
    w.json(CONFIG, cfg, "cli.run")?;
    let mesh = cfg.build_mesh()?;
    let producer = match cfg.domain {
        DomainSpec::Torus { .. } => "mesh.build_torus",
        DomainSpec::Annulus { .. } => "mesh.build_annulus",
    };
    let mut mesh_json = mesh.to_json();
    mesh_json.push('\n');
    w.text(MESH, &mesh_json, producer)?;

    let stages = solve_all(cfg, &mesh, &mut w)?;
    let last = stages.last().expect("schedule is non-empty");

    let mut conj: Vec<Conjugate> = Vec::new();
    if cfg.analysis.duality {
        conj = dual_all(cfg, &mesh, &stages, &mut w)?;
    }
    let mut stretch = None;
    if cfg.analysis.limits {
        stretch = Some(limits(cfg, &mesh, &stages, &conj, &mut w)?);
    }
    if cfg.analysis.cones {
        cones(cfg, &mut w)?;
    }
    if cfg.analysis.lamination {
        let set = stretch.as_ref().expect("validated: lamination needs limits");
        lamination(cfg, &mesh, last, conj.last().expect("validated"), set, &mut w)?;
    }

    let manifest = w.finish()?;
    let report = verify(root)?;
    if let Some(suite) = report.first_failure() {
        return Err(RunError::Invariant {
            name: suite.name.clone(),
            detail: suite.failure_summary(),
        });
    }
    Ok(RunOutcome {
        root: root.to_path_buf(),
        manifest,
        verify: report,
    })
}

fn solve_all(cfg: &ExperimentConfig, mesh: &SurfaceMesh, w: &mut ArtifactWriter) -> Result<Vec<Stage>, RunError> {
    let rho = cfg.rho();
    let mut stages: Vec<Stage> = Vec::new();
    for &p in &cfg.solver.p_schedule {
        let stage = solve(mesh, &rho, p, &cfg.solver, stages.last().map(|s| &s.field))
            .map_err(|e| failed(&format!("solve at p = {p}"), e))?;
        let mut csv = String::from("iter,energy,grad_norm,step\n");
        for r in &stage.trace {
            let _ = writeln!(csv, "{},{},{},{}", r.iter, r.energy, r.grad_norm, r.step);
        }
        w.text(&format!("tables/trace_p{}.csv", num_label(p)), &csv, "penergy.solve")?;
        w.json(
            &solve_path(p),
            &SolveRecord {
                report: stage.report.clone(),
                field: stage.field.clone(),
            },
            "penergy.solve",
        )?;
        if stage.report.stalled {
            return Err(RunError::Stall {
                p,
                detail: format!(
                    "gradient {:e} after {} iterations",
                    stage.report.grad_norm, stage.report.iterations
                ),
            });
        }
        stages.push(stage);
    }
    Ok(stages)
}

fn regions(cfg: &ExperimentConfig, mesh: &SurfaceMesh) -> Vec<Region> {
    match mesh.domain() {
        Some(Domain::Annulus { r0, .. }) => vec![
            Region::everything(mesh),
            Region::radius_above(mesh, cfg.limits.region_factor * r0),
        ],
        _ => vec![Region::everything(mesh)],
    }
}

fn dual_all(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    stages: &[Stage],
    w: &mut ArtifactWriter,
) -> Result<Vec<Conjugate>, RunError> {
    let u_ref = &stages.last().expect("non-empty").field;
    let regions = regions(cfg, mesh);
    let mut out = Vec::new();
    let mut csv = String::from("p,q,region,mass,fraction\n");
    for s in stages {
        let p = s.report.p;
        let c = conjugate(mesh, &s.field, p).map_err(|e| failed(&format!("conjugate at p = {p}"), e))?;
        let diag = concentration_diagnostics(mesh, p, &c.u_form, &c.v_form, u_ref, &regions);
        for r in &diag.regions {
            let _ = writeln!(csv, "{p},{},{},{},{}", c.dual.q, r.region, r.mass, r.fraction);
        }
        w.json(
            &dual_path(c.dual.q),
            &DualRecord {
                report: c.report(mesh, diag),
                v: c.dual.v.clone(),
            },
            "duality.conjugate",
        )?;
        out.push(c);
    }
    w.text("tables/regions.csv", &csv, "duality.concentration_diagnostics")?;
    let last = out.last().expect("non-empty");
    let dv = diff(mesh, &last.dual.v);
    w.text(
        "plots/dv.svg",
        &plot::field(
            mesh,
            &dv.norms(mesh),
            &[],
            &format!("|dv_q|, q = {:.4}", last.dual.q),
        ),
        "duality.conjugate",
    )?;
    Ok(out)
}

/// `K` for the configured domain and its maximizing class. On the annulus
/// the boundary loop is measured on the mesh.
pub fn k_of(cfg: &ExperimentConfig, mesh: &SurfaceMesh) -> Result<(f64, Option<[i64; 2]>), RunError> {
    let rho = cfg.rho();
    match &cfg.domain {
        DomainSpec::Annulus { .. } => annulus_mesh_k(mesh, rho.periods[0])
            .map(|k| (k, None))
            .ok_or_else(|| failed("K", "mesh is not an annulus")),
        DomainSpec::Torus { basis, .. } => {
            let k = compute_k(*basis, &rho, cfg.limits.k_radius).map_err(|e| failed("K search", e))?;
            Ok((k.k, k.argmax))
        }
    }
}

fn limits(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    stages: &[Stage],
    conj: &[Conjugate],
    w: &mut ArtifactWriter,
) -> Result<StretchSet, RunError> {
    let reports: Vec<_> = stages.iter().map(|s| s.report.clone()).collect();
    let est = estimate_l(&reports).map_err(|e| failed("L estimate", e))?;
    let (k_hat, argmax) = k_of(cfg, mesh)?;
    let last = stages.last().expect("non-empty");
    let set = stretch_set(mesh, &last.field, est.l_hat, cfg.limits.eps).map_err(|e| failed("stretch set", e))?;
    let traces: Vec<ConvergenceRow> = reports
        .iter()
        .zip(conj)
        .map(|(r, c)| ConvergenceRow {
            p: r.p,
            max_du: r.max_du,
            lp_mean: r.lp_mean,
            inv_k_p: r.k_p.map(|k| 1.0 / k),
            mass: Some(c.dual.mass),
        })
        .collect();
    let least_gradient = match cfg.domain {
        DomainSpec::Torus { .. } => Some(
            least_gradient_test(
                mesh,
                &conj.last().expect("non-empty").dual,
                cfg.limits.trials,
                cfg.seed,
                cfg.limits.trial_tol,
            )
            .map_err(|e| failed("least-gradient test", e))?,
        ),
        DomainSpec::Annulus { .. } => None,
    };
    let report = LimitReport {
        l_hat: est.l_hat,
        k_hat,
        argmax_class: argmax,
        traces: traces.clone(),
        stretch_components: summarize(&set),
        estimate: est.clone(),
        stretch_eps: cfg.limits.eps,
        stretch_triangles: set.triangles.len(),
        sweep: sweep(mesh, &last.field, est.l_hat, &cfg.limits.sweep),
        least_gradient,
    };
    w.json(LIMITS, &report, "limits.estimate_l")?;

    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut csv = String::from("p,max_du,lp_mean,inv_k_p,mass\n");
    for r in &traces {
        let _ = writeln!(csv, "{},{},{},{},{}", r.p, r.max_du, r.lp_mean, opt(r.inv_k_p), opt(r.mass));
    }
    w.text("tables/convergence.csv", &csv, "limits.estimate_l")?;

    let pts = |f: &dyn Fn(&ConvergenceRow) -> Option<f64>| -> Vec<(f64, f64)> {
        traces.iter().filter_map(|r| f(r).map(|y| (r.p, y))).collect()
    };
    let series = vec![
        Series::new("max |du_p|", pts(&|r| Some(r.max_du))),
        Series::new("L^p mean of |du_p|", pts(&|r| Some(r.lp_mean))),
        Series::new("1 / k_p", pts(&|r| r.inv_k_p)),
        Series::new("mass of dv_q", pts(&|r| r.mass)),
        Series::new("K", traces.iter().map(|r| (r.p, k_hat)).collect()).dashed(),
    ];
    w.text(
        "plots/convergence.svg",
        &plot::lines(&series, "Convergence along the p schedule", "p", "value", true),
        "limits.estimate_l",
    )?;
    let mut mark = vec![false; mesh.n_triangles()];
    for &t in &set.triangles {
        mark[t] = true;
    }
    let du = diff(mesh, &last.field);
    w.text(
        "plots/du.svg",
        &plot::field(mesh, &du.norms(mesh), &mark, &format!("|du_p|, p = {}", last.report.p)),
        "limits.stretch_set",
    )?;
    Ok(set)
}

fn cones(cfg: &ExperimentConfig, w: &mut ArtifactWriter) -> Result<(), RunError> {
    let c = &cfg.cones;
    let mut summaries = Vec::new();
    for &n in &c.n {
        let mut series = Vec::new();
        for &p in &c.p {
            let prof = cone_profile(n, p, c.t_max, c.steps).map_err(|e| failed("cone profile", e))?;
            w.text(&cone_path(n, p), &cone_csv(&prof), "hyperbolic.cone_profile")?;
            summaries.push(cone_summary(&prof, c.t_max, c.steps));
            series.push(Series::new(
                format!("f_{}", num_label(p)),
                prof.t.iter().cloned().zip(prof.f.iter().cloned()).collect(),
            ));
        }
        series.push(Series::new("t", vec![(0.0, 0.0), (c.t_max, c.t_max)]).dashed());
        w.text(
            &format!("plots/cones_n{n}.svg"),
            &plot::lines(&series, &format!("Cone profiles, n = {n}"), "t", "f_p(t)", false),
            "hyperbolic.cone_profile",
        )?;
    }
    w.json(CONES, &summaries, "hyperbolic.cone_profile")
}

pub fn cone_csv(prof: &laminate::hyperbolic::ConeProfile) -> String {
    let mut csv = String::from("t,f_p,lower,upper\n");
    for k in 0..prof.t.len() {
        let _ = writeln!(csv, "{},{},{},{}", prof.t[k], prof.f[k], prof.lower[k], prof.upper[k]);
    }
    csv
}

pub fn cone_summary(prof: &laminate::hyperbolic::ConeProfile, t_max: f64, steps: usize) -> ConeSummary {
    ConeSummary {
        n: prof.n,
        p: prof.p,
        t_max,
        steps,
        beta: prof.beta,
        sandwich: prof.sandwich_holds(1e-12),
        sup_deviation: prof.sup_deviation(2.0),
        f_at_1: prof.value_at(1.0),
        radial_residual: prof.radial_residual(),
        strictly_increasing: prof.strictly_increasing(),
    }
}

/// Seeded parallel-leaf laminations: a small primitive class, up to four
/// leaves with random offsets and weights.
pub fn seeded_laminations(seed: u64, count: usize) -> Vec<MeasuredLamination> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6c61_6d69);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let class = [rng.random_range(-3i64..=3), rng.random_range(-3i64..=3)];
        let leaves = rng.random_range(1..=4usize);
        let offsets: Vec<f64> = (0..leaves).map(|_| rng.random_range(0.0..1.0)).collect();
        let weights: Vec<f64> = (0..leaves).map(|_| rng.random_range(0.1..2.0)).collect();
        if let Ok(lam) = MeasuredLamination::parallel(class, &offsets, &weights) {
            out.push(lam);
        }
    }
    out
}

/// Samples of `v` along the ray `theta = trace_theta` from `r0` to `r1`.
pub fn radial_trace(
    mesh: &SurfaceMesh,
    v: &EquivariantField,
    r0: f64,
    r1: f64,
    theta: f64,
    samples: usize,
) -> Result<Vec<(f64, f64)>, RunError> {
    (0..samples)
        .map(|k| {
            let r = r0 + (r1 - r0) * k as f64 / (samples - 1) as f64;
            v.evaluate(mesh, [r, theta])
                .map(|val| (r, val))
                .map_err(|e| failed("radial trace", e))
        })
        .collect()
}

pub const TRACE_THETA: f64 = PI / 3.0;

fn bv_options(cfg: &ExperimentConfig) -> BvOptions {
    BvOptions {
        atom_tol: cfg.lamination.atom_tol,
        ..BvOptions::default()
    }
}

/// `path_id,kind,nu,subdivision_signs` rows; rejected paths are absent.
pub fn cocycle_csv(paths: &[GeneratedPath], values: &[CocycleValue]) -> String {
    let mut csv = String::from("path_id,kind,nu,subdivision_signs\n");
    for c in values {
        let g = paths.iter().find(|g| g.path.id == c.id).expect("value comes from a path");
        let signs: Vec<String> = c.signs.iter().map(|s| s.to_string()).collect();
        let kind = match g.kind {
            PathKind::Inward => "inward",
            PathKind::Outward => "outward",
            PathKind::InAndOut => "in_and_out",
        };
        let _ = writeln!(csv, "{},{kind},{},{}", c.id, c.value, signs.join(" "));
    }
    csv
}

/// Plaques, cocycle axioms and the radial BV trace of `v` on an annulus.
pub fn annulus_lamination(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    dual: &DualField,
    p: f64,
    set: &StretchSet,
) -> Result<(AnnulusLamination, Vec<GeneratedPath>, String), RunError> {
    let Some(Domain::Annulus { r0, r1, .. }) = mesh.domain() else {
        return Err(failed("annulus lamination", "mesh is not an annulus"));
    };
    let (r0, r1) = (*r0, *r1);
    let lo = &cfg.lamination;
    let dec = PlaqueDecomposition::new(mesh, &dual.v, set, lo.plaque_tol).map_err(|e| failed("plaque decomposition", e))?;
    let paths = dec
        .annulus_transversals(mesh, lo.transversals, cfg.seed)
        .map_err(|e| failed("transversals", e))?;
    let jitter_seed = cfg.seed.wrapping_add(1);
    let ax = dec.axiom_suite(mesh, &paths, jitter_seed);
    let csv = cocycle_csv(&paths, &ax.values);

    let constants: Vec<f64> = dec.plaques.iter().map(|p| p.constant).collect();
    let hi = constants.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo_c = constants.iter().cloned().fold(f64::INFINITY, f64::min);
    let inner_jump = if constants.len() >= 2 { hi - lo_c } else { 0.0 };
    let mass_per_length = dual.mass / (2.0 * PI * r0);
    let trace = radial_trace(mesh, &dual.v, r0, r1, TRACE_THETA, lo.trace_samples)?;
    let bv = bv_decompose(&trace, bv_options(cfg)).map_err(|e| failed("BV decomposition", e))?;
    let record = AnnulusLamination {
        p,
        plaque_tol: dec.plaque_tol,
        plaques: dec
            .plaques
            .iter()
            .map(|p| PlaqueSummary {
                kind: p.kind,
                triangles: p.triangles.len(),
                constant: p.constant,
                spread: p.spread,
                flagged: p.flagged,
            })
            .collect(),
        bands: dec
            .bands
            .iter()
            .map(|b| BandSummary {
                triangles: b.triangles.len(),
                normal: b.normal,
            })
            .collect(),
        inner_jump,
        mass_per_length,
        jump_rel_error: (inner_jump - mass_per_length).abs() / mass_per_length,
        axioms: AxiomSummary {
            paths: ax.paths,
            transversal_seed: cfg.seed,
            jitter_seed,
            passed: ax.passed(),
            rejected: ax.rejected,
            additivity_failures: ax.additivity_failures,
            reversal_failures: ax.reversal_failures,
            homotopy_failures: ax.homotopy_failures,
            positive_paths: ax.positive_paths,
            min_positive_value: ax.min_positive_value,
            nonneg_tol: ax.nonneg_tol,
            nonneg_failures: ax.nonneg_failures,
        },
        trace_theta: TRACE_THETA,
        trace,
        bv,
    };
    Ok((record, paths, csv))
}

/// Current round trips for the configured or seeded laminations on a torus.
pub fn torus_lamination(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    dual: &DualField,
    set: &StretchSet,
) -> Result<TorusLamination, RunError> {
    let lo = &cfg.lamination;
    let plaques = PlaqueDecomposition::new(mesh, &dual.v, set, lo.plaque_tol)
        .map(|d| d.plaques.iter().filter(|p| p.kind == PlaqueKind::Interior).count())
        .map_err(|e| failed("plaque decomposition", e))?;
    let lams = match &lo.measured {
        Some(m) => vec![m.clone()],
        None => seeded_laminations(cfg.seed, DEFAULT_LAMINATIONS),
    };
    let currents = lams
        .into_iter()
        .map(|lam| {
            current_check(mesh, &lam, lo.exact_forms, cfg.seed)
                .map(|check| CurrentEntry { lamination: lam, check })
                .map_err(|e| failed("current check", e))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let trace = staircase_trace(&currents[0].lamination, lo.trace_samples);
    let bv = bv_decompose(&trace, bv_options(cfg)).map_err(|e| failed("BV decomposition", e))?;
    Ok(TorusLamination {
        plaques,
        exact_forms: lo.exact_forms,
        seed: cfg.seed,
        currents,
        trace,
        bv,
    })
}

fn lamination(
    cfg: &ExperimentConfig,
    mesh: &SurfaceMesh,
    last: &Stage,
    conj: &Conjugate,
    set: &StretchSet,
    w: &mut ArtifactWriter,
) -> Result<(), RunError> {
    let (record, trace, title, x_label) = match mesh.domain() {
        Some(Domain::Annulus { .. }) => {
            let (rec, paths, csv) = annulus_lamination(cfg, mesh, &conj.dual, last.report.p, set)?;
            w.text(COCYCLE_CSV, &csv, "lamination.cocycle")?;
            w.json(TRANSVERSALS, &paths, "lamination.annulus_transversals")?;
            let trace = rec.trace.clone();
            (LaminationRecord::Annulus(rec), trace, "Conjugate field along a radial ray", "r")
        }
        _ => {
            let rec = torus_lamination(cfg, mesh, &conj.dual, set)?;
            let trace = rec.trace.clone();
            (LaminationRecord::Torus(rec), trace, "Transverse primitive of the first lamination", "s")
        }
    };
    w.text(
        "plots/bv_trace.svg",
        &plot::lines(&[Series::new("trace", trace)], title, x_label, "value", false),
        "lamination.bv_decompose",
    )?;
    w.json(LAMINATION, &record, "lamination.plaques")
}
