//! On-disk shapes shared by `run` and `verify`.

use laminate::duality::DualReport;
use laminate::lamination::{BvDecomposition, CurrentCheck, MeasuredLamination, PlaqueKind};
use laminate::mesh::{EquivariantField, Point};
use laminate::penergy::SolveReport;
use serde::{Deserialize, Serialize};

pub const CONFIG: &str = "config.json";
pub const MESH: &str = "mesh.json";
pub const LIMITS: &str = "limits.json";
pub const CONES: &str = "cones.json";
pub const LAMINATION: &str = "lamination.json";
pub const TRANSVERSALS: &str = "transversals.json";
pub const COCYCLE_CSV: &str = "tables/cocycle.csv";

/// Shortest decimal form of a number, for file names.
pub fn num_label(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

pub fn solve_path(p: f64) -> String {
    format!("solve/{}.json", num_label(p))
}

pub fn dual_path(q: f64) -> String {
    format!("dual/{}.json", num_label(q))
}

pub fn cone_path(n: u32, p: f64) -> String {
    format!("tables/cone_n{n}_p{}.csv", num_label(p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    #[serde(flatten)]
    pub report: SolveReport,
    pub field: EquivariantField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DualRecord {
    #[serde(flatten)]
    pub report: DualReport,
    pub v: EquivariantField,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeSummary {
    pub n: u32,
    pub p: f64,
    pub t_max: f64,
    pub steps: usize,
    pub beta: f64,
    pub sandwich: bool,
    pub sup_deviation: f64,
    pub f_at_1: f64,
    pub radial_residual: f64,
    pub strictly_increasing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaqueSummary {
    pub kind: PlaqueKind,
    pub triangles: usize,
    pub constant: f64,
    pub spread: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandSummary {
    pub triangles: usize,
    pub normal: Point,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxiomSummary {
    pub paths: usize,
    pub transversal_seed: u64,
    pub jitter_seed: u64,
    pub rejected: Vec<String>,
    pub additivity_failures: Vec<String>,
    pub reversal_failures: Vec<String>,
    pub homotopy_failures: Vec<String>,
    pub positive_paths: usize,
    pub min_positive_value: f64,
    pub nonneg_tol: f64,
    pub nonneg_failures: Vec<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusLamination {
    pub p: f64,
    pub plaque_tol: f64,
    pub plaques: Vec<PlaqueSummary>,
    pub bands: Vec<BandSummary>,
    /// `|constant(outer) - constant(inner)|` over the two extreme plaques.
    pub inner_jump: f64,
    /// Mass of `dv_q` divided by the inner leaf length.
    pub mass_per_length: f64,
    pub jump_rel_error: f64,
    pub axioms: AxiomSummary,
    /// Angle of the radial ray sampled for the trace.
    pub trace_theta: f64,
    pub trace: Vec<(f64, f64)>,
    pub bv: BvDecomposition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentEntry {
    pub lamination: MeasuredLamination,
    pub check: CurrentCheck,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusLamination {
    pub plaques: usize,
    pub exact_forms: usize,
    pub seed: u64,
    pub currents: Vec<CurrentEntry>,
    /// Staircase trace of the first lamination and its BV split.
    pub trace: Vec<(f64, f64)>,
    pub bv: BvDecomposition,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "domain", rename_all = "snake_case")]
pub enum LaminationRecord {
    Annulus(AnnulusLamination),
    Torus(TorusLamination),
}
