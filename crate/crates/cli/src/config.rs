//! Versioned TOML experiment configuration. Unknown keys are rejected at
//! every level.

use std::f64::consts::PI;
use std::path::PathBuf;

use laminate::lamination::MeasuredLamination;
use laminate::mesh::{build_annulus_with, build_torus, AnnulusChart, AnnulusOptions, Homomorphism, MeshError, RadialGrading, SurfaceMesh};
use laminate::penergy::SolverConfig;
use serde::{Deserialize, Serialize};

use crate::error::RunError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default)]
    pub output: Option<PathBuf>,
    pub domain: DomainSpec,
    /// Periods on the homology basis. Defaults to `2 pi` on the annulus loop.
    #[serde(default)]
    pub rho: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub analysis: Analysis,
    #[serde(default)]
    pub limits: LimitsOptions,
    #[serde(default)]
    pub cones: ConeOptions,
    #[serde(default)]
    pub lamination: LaminationOptions,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Torus {
        basis: [[f64; 2]; 2],
        resolution: usize,
    },
    Annulus {
        r0: f64,
        r1: f64,
        n_theta: usize,
        n_r: usize,
        #[serde(default)]
        chart: AnnulusChart,
        #[serde(default)]
        grading: RadialGrading,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Analysis {
    pub duality: bool,
    pub limits: bool,
    pub cones: bool,
    pub lamination: bool,
}

impl Default for Analysis {
    fn default() -> Self {
        Self {
            duality: true,
            limits: true,
            cones: true,
            lamination: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitsOptions {
    pub eps: f64,
    pub sweep: Vec<f64>,
    pub k_radius: i64,
    /// Least-gradient trials; only run on closed surfaces.
    pub trials: usize,
    pub trial_tol: f64,
    /// Region `r > region_factor * r0` for annulus concentration masses.
    pub region_factor: f64,
}

impl Default for LimitsOptions {
    fn default() -> Self {
        Self {
            eps: 0.1,
            sweep: vec![0.05, 0.1, 0.2],
            k_radius: 50,
            trials: 100,
            trial_tol: 1e-8,
            region_factor: 1.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConeOptions {
    pub n: Vec<u32>,
    pub p: Vec<f64>,
    pub t_max: f64,
    pub steps: usize,
}

impl Default for ConeOptions {
    fn default() -> Self {
        Self {
            n: vec![2, 3],
            p: vec![8.0, 32.0, 128.0, 512.0],
            t_max: 2.0,
            steps: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LaminationOptions {
    pub transversals: usize,
    pub plaque_tol: Option<f64>,
    /// Samples of the radial trace of `v` for the BV split (annulus).
    pub trace_samples: usize,
    pub atom_tol: f64,
    /// Measured lamination for the current round trip (torus).
    pub measured: Option<MeasuredLamination>,
    /// Number of exact test forms in the round trip.
    pub exact_forms: usize,
}

impl Default for LaminationOptions {
    fn default() -> Self {
        Self {
            transversals: 200,
            plaque_tol: None,
            trace_samples: 2000,
            atom_tol: 1e-2,
            measured: None,
            exact_forms: 8,
        }
    }
}

fn bad(field: &str, reason: impl Into<String>) -> RunError {
    RunError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, RunError> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad("<document>", e.to_string().trim().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad("<file>", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if self.version != SCHEMA_VERSION {
            return Err(bad("version", format!("unsupported schema version {}, expected {SCHEMA_VERSION}", self.version)));
        }
        self.solver
            .validate()
            .map_err(|e| bad("solver", e.to_string()))?;
        let n = match &self.domain {
            DomainSpec::Torus { .. } => 2,
            DomainSpec::Annulus { .. } => 1,
        };
        if let Some(rho) = &self.rho {
            if rho.len() != n {
                return Err(bad("rho", format!("expected {n} periods, got {}", rho.len())));
            }
            if rho.iter().any(|x| !x.is_finite()) {
                return Err(bad("rho", "periods must be finite"));
            }
        } else if n == 2 {
            return Err(bad("rho", "required on a torus"));
        }
        let l = &self.limits;
        if !(l.eps > 0.0 && l.eps < 1.0) {
            return Err(bad("limits.eps", format!("must lie in (0, 1), got {}", l.eps)));
        }
        if l.sweep.iter().any(|e| !(*e > 0.0 && *e < 1.0)) {
            return Err(bad("limits.sweep", "thresholds must lie in (0, 1)"));
        }
        if l.k_radius < 1 {
            return Err(bad("limits.k_radius", "must be at least 1"));
        }
        if self.analysis.cones {
            let c = &self.cones;
            if let Some(bad_n) = c.n.iter().find(|n| **n < 2) {
                return Err(bad("cones.n", format!("dimension {bad_n} < 2")));
            }
            for &nn in &c.n {
                if let Some(p) = c.p.iter().find(|p| !(**p > nn as f64)) {
                    return Err(bad("cones.p", format!("exponent {p} must exceed n = {nn}")));
                }
            }
            if !(c.t_max > 0.0) || c.steps < 2 {
                return Err(bad("cones", "t_max must be positive and steps at least 2"));
            }
        }
        if self.analysis.limits && self.solver.p_schedule.len() < 2 {
            return Err(bad("solver.p_schedule", "limit analysis needs at least two exponents"));
        }
        if self.analysis.lamination && !(self.analysis.duality && self.analysis.limits) {
            return Err(bad("analysis.lamination", "requires analysis.duality and analysis.limits"));
        }
        if self.analysis.limits && !self.analysis.duality {
            return Err(bad("analysis.limits", "requires analysis.duality (mass trace)"));
        }
        if let Some(m) = &self.lamination.measured {
            if !matches!(self.domain, DomainSpec::Torus { .. }) {
                return Err(bad("lamination.measured", "measured laminations are supported on tori only"));
            }
            m.validate().map_err(|e| bad("lamination.measured", e.to_string()))?;
        }
        if !(self.lamination.atom_tol > 0.0) || self.lamination.trace_samples < 3 {
            return Err(bad("lamination", "atom_tol must be positive and trace_samples at least 3"));
        }
        self.build_mesh().map(|_| ())
    }

    pub fn build_mesh(&self) -> Result<SurfaceMesh, RunError> {
        let mesh = match &self.domain {
            DomainSpec::Torus { basis, resolution } => build_torus(*basis, *resolution),
            DomainSpec::Annulus {
                r0,
                r1,
                n_theta,
                n_r,
                chart,
                grading,
            } => build_annulus_with(
                *r0,
                *r1,
                *n_theta,
                *n_r,
                AnnulusOptions {
                    chart: *chart,
                    grading: *grading,
                },
            ),
        };
        mesh.map_err(|e| match e {
            MeshError::InvalidParameter { field, reason } => bad(&format!("domain.{field}"), reason),
            MeshError::DegenerateLattice(d) => bad("domain.basis", format!("degenerate lattice (|det| = {d:e})")),
            other => bad("domain", other.to_string()),
        })
    }

    pub fn rho(&self) -> Homomorphism {
        Homomorphism::new(self.rho.clone().unwrap_or_else(|| vec![2.0 * PI]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "version = 1\n[domain]\nkind = \"annulus\"\nr0 = 1.0\nr1 = 2.0\nn_theta = 16\nn_r = 8\n";

    fn field_of(text: &str) -> String {
        match ExperimentConfig::parse(text) {
            Err(RunError::Config { field, .. }) => field,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_annulus_uses_defaults() {
        let c = ExperimentConfig::parse(MIN).unwrap();
        assert_eq!(c.rho().periods, vec![2.0 * PI]);
        assert_eq!(c.solver.p_schedule, vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
        assert!(c.analysis.lamination);
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(&MIN.replace("r1 = 2.0", "r1 = 0.5")), "domain.r1");
        assert_eq!(field_of(&MIN.replace("version = 1", "version = 9")), "version");
        assert_eq!(field_of(&format!("{MIN}bogus = 3\n")), "<document>");
        assert_eq!(field_of(&format!("{MIN}[limits]\neps = 1.5\n")), "limits.eps");
        assert_eq!(field_of(&format!("{MIN}[solver]\np_schedule = [4.0, 2.0]\n")), "solver");
        assert_eq!(field_of(&MIN.replace("version = 1\n", "version = 1\nrho = [1.0, 2.0]\n")), "rho");
        let torus = "version = 1\nrho = [1.0, 0.0]\n[domain]\nkind = \"torus\"\nbasis = [[1.0, 0.0], [1.0, 0.0]]\nresolution = 4\n";
        assert_eq!(field_of(torus), "domain.basis");
        assert_eq!(field_of(&torus.replace("rho = [1.0, 0.0]\n", "").replace("[1.0, 0.0]]", "[0.0, 1.0]]")), "rho");
    }

    #[test]
    fn unknown_nested_keys_are_rejected() {
        assert_eq!(field_of(&format!("{MIN}[solver]\np_shedule = [2.0]\n")), "<document>");
        assert_eq!(field_of(&MIN.replace("n_r = 8", "n_r = 8\nradius = 3")), "<document>");
    }

    #[test]
    fn dependent_analyses_must_be_enabled() {
        assert_eq!(
            field_of(&format!("{MIN}[analysis]\nduality = false\nlimits = false\n")),
            "analysis.lamination"
        );
    }
}
