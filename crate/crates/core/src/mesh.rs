//! Triangulated flat surfaces cut open along a fundamental domain.
//!
//! A [`SurfaceMesh`] stores the cut domain (vertices may appear several times,
//! once per copy on the cut), a gluing table identifying boundary edges up to
//! deck translations, a constant metric tensor per triangle and a fixed
//! homology basis. Scalar fields on the universal cover are represented by
//! [`EquivariantField`]: one value per cut vertex plus the period homomorphism
//! that relates the copies.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point = [f64; 2];
pub type Covector = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("degenerate lattice: |det| = {0:e} is below 1e-12")]
    DegenerateLattice(f64),
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
    #[error("vertex index {0} out of range")]
    VertexOutOfRange(usize),
    #[error("triangle {0} has non-positive metric area")]
    NonPositiveArea(usize),
    #[error("metric of triangle {0} is not symmetric positive definite")]
    MetricNotSpd(usize),
    #[error("gluing table is not an involution on boundary edges: {0}")]
    GluingNotInvolution(String),
    #[error("gluing {0} does not match the deck translation of its shift")]
    GluingGeometry(usize),
    #[error("inconsistent vertex identifications around vertex {0}")]
    InconsistentGluing(usize),
    #[error("Euler characteristic is {0}, expected 0")]
    EulerCharacteristic(i64),
    #[error("homology loop {0} is not closed after gluing")]
    OpenLoop(usize),
    #[error("path is not closed after gluing")]
    OpenPath,
    #[error("path step {0} -> {1} is neither a mesh edge nor an identification")]
    BrokenPath(usize, usize),
    #[error("field is not equivariant at vertex {vertex} (mismatch {mismatch:e})")]
    NotEquivariant { vertex: usize, mismatch: f64 },
    #[error("size mismatch: expected {expected} {what}, got {got}")]
    SizeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("point {0:?} is not inside the fundamental domain")]
    PointOutside(Point),
}

/// Symmetric positive definite 2x2 tensor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Metric(pub [[f64; 2]; 2]);

impl Metric {
    pub const IDENTITY: Metric = Metric([[1.0, 0.0], [0.0, 1.0]]);

    pub fn diagonal(a: f64, b: f64) -> Self {
        Metric([[a, 0.0], [0.0, b]])
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn inverse(&self) -> [[f64; 2]; 2] {
        let d = self.det();
        [
            [self.0[1][1] / d, -self.0[0][1] / d],
            [-self.0[1][0] / d, self.0[0][0] / d],
        ]
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let [[a, b], [_, c]] = self.0;
        let mean = 0.5 * (a + c);
        let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
        (mean - rad, mean + rad)
    }

    fn is_spd(&self) -> bool {
        let sym = (self.0[0][1] - self.0[1][0]).abs() <= 1e-14 * (1.0 + self.0[0][1].abs());
        let (lo, hi) = self.eigenvalues();
        sym && lo > 1e-12 && hi.is_finite()
    }
}

/// Identification of two boundary edges of the cut domain.
///
/// `target[k]` is the translate of `source[k]` by `shift` (integer
/// coefficients on the homology basis): a field satisfies
/// `u(target[k]) = u(source[k]) + shift . rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gluing {
    pub source: [usize; 2],
    pub target: [usize; 2],
    pub shift: Vec<i64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AnnulusChart {
    /// Cut domain is the rectangle `[r0, r1] x [0, 2pi]` in polar coordinates,
    /// with the Euclidean metric `dr^2 + r^2 dtheta^2` frozen at each centroid.
    #[default]
    Polar,
    /// Polar grid placed in the plane with the identity metric.
    Planar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RadialGrading {
    Uniform,
    Geometric,
    /// `r_i = r0 (r1/r0)^((i/n)^2)`: rings cluster at the inner circle.
    #[default]
    GeometricQuadratic,
}

impl RadialGrading {
    pub fn radii(self, r0: f64, r1: f64, n_r: usize) -> Vec<f64> {
        (0..=n_r)
            .map(|i| {
                let s = i as f64 / n_r as f64;
                match self {
                    RadialGrading::Uniform => r0 + (r1 - r0) * s,
                    RadialGrading::Geometric => r0 * (r1 / r0).powf(s),
                    RadialGrading::GeometricQuadratic => r0 * (r1 / r0).powf(s * s),
                }
            })
            .map(|r| r.min(r1))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnulusOptions {
    pub chart: AnnulusChart,
    pub grading: RadialGrading,
}

impl Default for AnnulusOptions {
    fn default() -> Self {
        Self {
            chart: AnnulusChart::Polar,
            grading: RadialGrading::GeometricQuadratic,
        }
    }
}

/// Construction parameters, kept so analyses can use closed forms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    Torus {
        basis: [[f64; 2]; 2],
        resolution: usize,
    },
    Annulus {
        r0: f64,
        r1: f64,
        n_theta: usize,
        n_r: usize,
        options: AnnulusOptions,
    },
}

/// Serialized form of a [`SurfaceMesh`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshDocument {
    pub vertices: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    pub gluings: Vec<Gluing>,
    pub metric: Vec<Metric>,
    pub homology_basis: Vec<Vec<usize>>,
    #[serde(default)]
    pub boundary_edges: Vec<[usize; 2]>,
    /// Chart displacement of each homology generator's deck transformation.
    pub deck: Vec<[f64; 2]>,
    #[serde(default)]
    pub domain: Option<Domain>,
}

#[derive(Clone, Debug)]
struct TriangleGeometry {
    /// Rows are d/dx and d/dy of the three barycentric hat functions.
    grad: [[f64; 3]; 2],
    coord_area: f64,
    area: f64,
    sqrt_det: f64,
    inv_metric: [[f64; 2]; 2],
}

/// Neighbour of a triangle across one of its edges.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub triangle: usize,
    /// Deck shift to add to the current sheet to continue into `triangle`.
    pub sheet_shift: Vec<i64>,
}

#[derive(Clone, Debug)]
#[allow(dead_code)]
pub struct SurfaceMesh {
    doc: MeshDocument,
    class_of: Vec<usize>,
    shift_of: Vec<Vec<i64>>,
    class_rep: Vec<usize>,
    geometry: Vec<TriangleGeometry>,
    edge_triangles: HashMap<(usize, usize), Vec<usize>>,
    neighbors: Vec<[Option<Neighbor>; 3]>,
    loop_classes: Vec<Vec<i64>>,
    total_area: f64,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn add_shift(acc: &mut [i64], s: &[i64], sign: i64) {
    for (a, b) in acc.iter_mut().zip(s) {
        *a += sign * b;
    }
}

impl SurfaceMesh {
    pub fn from_document(doc: MeshDocument) -> Result<Self, MeshError> {
        let nv = doc.vertices.len();
        let nb = doc.homology_basis.len();
        if doc.metric.len() != doc.triangles.len() {
            return Err(MeshError::SizeMismatch {
                what: "metric tensors",
                expected: doc.triangles.len(),
                got: doc.metric.len(),
            });
        }
        if doc.deck.len() != nb {
            return Err(MeshError::SizeMismatch {
                what: "deck translations",
                expected: nb,
                got: doc.deck.len(),
            });
        }
        for t in &doc.triangles {
            for &v in t {
                if v >= nv {
                    return Err(MeshError::VertexOutOfRange(v));
                }
            }
        }

        let mut geometry = Vec::with_capacity(doc.triangles.len());
        for (ti, (t, m)) in doc.triangles.iter().zip(&doc.metric).enumerate() {
            if !m.is_spd() {
                return Err(MeshError::MetricNotSpd(ti));
            }
            let x0 = doc.vertices[t[0]];
            let e1 = sub(doc.vertices[t[1]], x0);
            let e2 = sub(doc.vertices[t[2]], x0);
            let det = e1[0] * e2[1] - e1[1] * e2[0];
            if !(det > 0.0) || !det.is_finite() {
                return Err(MeshError::NonPositiveArea(ti));
            }
            // grad = E^{-T} [[-1,1,0],[-1,0,1]] with E = [e1 e2] as columns.
            let inv_t = [[e2[1] / det, -e1[1] / det], [-e2[0] / det, e1[0] / det]];
            let mut grad = [[0.0; 3]; 2];
            for r in 0..2 {
                grad[r][1] = inv_t[r][0];
                grad[r][2] = inv_t[r][1];
                grad[r][0] = -inv_t[r][0] - inv_t[r][1];
            }
            let sqrt_det = m.det().sqrt();
            geometry.push(TriangleGeometry {
                grad,
                coord_area: 0.5 * det,
                area: 0.5 * det * sqrt_det,
                sqrt_det,
                inv_metric: m.inverse(),
            });
        }

        // Cut-domain edges and their triangles.
        let mut edge_triangles: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (ti, t) in doc.triangles.iter().enumerate() {
            for k in 0..3 {
                edge_triangles
                    .entry(edge_key(t[k], t[(k + 1) % 3]))
                    .or_default()
                    .push(ti);
            }
        }
        for (e, ts) in &edge_triangles {
            if ts.len() > 2 {
                return Err(MeshError::GluingNotInvolution(format!(
                    "edge {:?} has {} triangles",
                    e,
                    ts.len()
                )));
            }
        }

        // Every cut-boundary edge is glued exactly once or is a free boundary edge.
        let mut usage: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for (gi, g) in doc.gluings.iter().enumerate() {
            if g.shift.len() != nb {
                return Err(MeshError::SizeMismatch {
                    what: "shift coefficients",
                    expected: nb,
                    got: g.shift.len(),
                });
            }
            for e in [g.source, g.target] {
                let key = edge_key(e[0], e[1]);
                match edge_triangles.get(&key) {
                    Some(ts) if ts.len() == 1 => {}
                    _ => {
                        return Err(MeshError::GluingNotInvolution(format!(
                            "gluing {} uses non-boundary edge {:?}",
                            gi, e
                        )))
                    }
                }
                *usage.entry(key).or_default() += 1;
            }
            let mut disp = [0.0, 0.0];
            for (s, d) in g.shift.iter().zip(&doc.deck) {
                disp[0] += *s as f64 * d[0];
                disp[1] += *s as f64 * d[1];
            }
            for k in 0..2 {
                let a = doc.vertices[g.source[k]];
                let b = doc.vertices[g.target[k]];
                let scale = 1.0 + a[0].abs() + a[1].abs() + disp[0].abs() + disp[1].abs();
                if (b[0] - a[0] - disp[0]).abs() > 1e-9 * scale
                    || (b[1] - a[1] - disp[1]).abs() > 1e-9 * scale
                {
                    return Err(MeshError::GluingGeometry(gi));
                }
            }
        }
        for e in &doc.boundary_edges {
            *usage.entry(edge_key(e[0], e[1])).or_default() += 1;
        }
        for (e, ts) in &edge_triangles {
            let used = usage.get(e).copied().unwrap_or(0);
            let expected = if ts.len() == 1 { 1 } else { 0 };
            if used != expected {
                return Err(MeshError::GluingNotInvolution(format!(
                    "edge {:?} referenced {} times (expected {})",
                    e, used, expected
                )));
            }
        }
        if usage.len() != edge_triangles.iter().filter(|(_, t)| t.len() == 1).count() {
            return Err(MeshError::GluingNotInvolution(
                "boundary list names an edge that is not in the mesh".into(),
            ));
        }

        // Vertex classes with shifts relative to a representative.
        let mut ident: Vec<Vec<(usize, Vec<i64>)>> = vec![Vec::new(); nv];
        for g in &doc.gluings {
            for k in 0..2 {
                let (a, b) = (g.source[k], g.target[k]);
                ident[a].push((b, g.shift.clone()));
                ident[b].push((a, g.shift.iter().map(|s| -s).collect()));
            }
        }
        let mut class_of = vec![usize::MAX; nv];
        let mut shift_of = vec![vec![0i64; nb]; nv];
        let mut class_rep = Vec::new();
        for start in 0..nv {
            if class_of[start] != usize::MAX {
                continue;
            }
            let c = class_rep.len();
            class_rep.push(start);
            class_of[start] = c;
            let mut queue = VecDeque::from([start]);
            while let Some(v) = queue.pop_front() {
                for (w, s) in &ident[v] {
                    let mut sw = shift_of[v].clone();
                    add_shift(&mut sw, s, 1);
                    if class_of[*w] == usize::MAX {
                        class_of[*w] = c;
                        shift_of[*w] = sw;
                        queue.push_back(*w);
                    } else if shift_of[*w] != sw {
                        return Err(MeshError::InconsistentGluing(*w));
                    }
                }
            }
        }

        let n_edges = edge_triangles.len() as i64 - doc.gluings.len() as i64;
        let chi = class_rep.len() as i64 - n_edges + doc.triangles.len() as i64;
        if chi != 0 {
            return Err(MeshError::EulerCharacteristic(chi));
        }

        // Triangle adjacency across interior and glued edges.
        let mut partner: HashMap<(usize, usize), (usize, Vec<i64>)> = HashMap::new();
        for g in &doc.gluings {
            let ks = edge_key(g.source[0], g.source[1]);
            let kt = edge_key(g.target[0], g.target[1]);
            let ts = edge_triangles[&ks][0];
            let tt = edge_triangles[&kt][0];
            // Crossing from the source side into the target triangle moves to
            // the sheet translated by -shift.
            partner.insert(ks, (tt, g.shift.iter().map(|s| -s).collect()));
            partner.insert(kt, (ts, g.shift.clone()));
        }
        let neighbors = doc
            .triangles
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                let mut out: [Option<Neighbor>; 3] = [None, None, None];
                for k in 0..3 {
                    let key = edge_key(t[(k + 1) % 3], t[(k + 2) % 3]);
                    let ts = &edge_triangles[&key];
                    if ts.len() == 2 {
                        let other = if ts[0] == ti { ts[1] } else { ts[0] };
                        out[k] = Some(Neighbor {
                            triangle: other,
                            sheet_shift: vec![0; nb],
                        });
                    } else if let Some((other, s)) = partner.get(&key) {
                        out[k] = Some(Neighbor {
                            triangle: *other,
                            sheet_shift: s.clone(),
                        });
                    }
                }
                out
            })
            .collect();

        let total_area = geometry.iter().map(|g| g.area).sum();
        let mut mesh = SurfaceMesh {
            doc,
            class_of,
            shift_of,
            class_rep,
            geometry,
            edge_triangles,
            neighbors,
            loop_classes: Vec::new(),
            total_area,
        };
        let mut loop_classes = Vec::with_capacity(nb);
        for (i, l) in mesh.doc.homology_basis.iter().enumerate() {
            let class = mesh.loop_class(l).map_err(|_| MeshError::OpenLoop(i))?;
            loop_classes.push(class);
        }
        mesh.loop_classes = loop_classes;
        Ok(mesh)
    }

    pub fn document(&self) -> &MeshDocument {
        &self.doc
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("mesh document serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, MeshError> {
        let doc: MeshDocument = serde_json::from_str(s).map_err(|e| MeshError::InvalidParameter {
            field: "mesh json",
            reason: e.to_string(),
        })?;
        Self::from_document(doc)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.doc.vertices
    }
    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.doc.triangles
    }
    pub fn gluings(&self) -> &[Gluing] {
        &self.doc.gluings
    }
    pub fn metric(&self, t: usize) -> Metric {
        self.doc.metric[t]
    }
    pub fn homology_basis(&self) -> &[Vec<usize>] {
        &self.doc.homology_basis
    }
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.doc.boundary_edges
    }
    pub fn deck(&self) -> &[[f64; 2]] {
        &self.doc.deck
    }
    pub fn domain(&self) -> Option<&Domain> {
        self.doc.domain.as_ref()
    }
    pub fn n_vertices(&self) -> usize {
        self.doc.vertices.len()
    }
    pub fn n_triangles(&self) -> usize {
        self.doc.triangles.len()
    }
    pub fn n_generators(&self) -> usize {
        self.doc.homology_basis.len()
    }
    /// Number of vertices of the closed-up surface.
    pub fn n_classes(&self) -> usize {
        self.class_rep.len()
    }
    pub fn class_of(&self, v: usize) -> usize {
        self.class_of[v]
    }
    pub fn class_rep(&self, c: usize) -> usize {
        self.class_rep[c]
    }
    /// Deck shift of a cut vertex relative to its class representative.
    pub fn shift_of(&self, v: usize) -> &[i64] {
        &self.shift_of[v]
    }
    pub fn neighbors(&self, t: usize) -> &[Option<Neighbor>; 3] {
        &self.neighbors[t]
    }
    /// Homology class (coefficients on the basis) of each basis loop.
    pub fn loop_classes(&self) -> &[Vec<i64>] {
        &self.loop_classes
    }

    pub fn n_edges(&self) -> usize {
        self.edge_triangles.len() - self.doc.gluings.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.n_classes() as i64 - self.n_edges() as i64 + self.n_triangles() as i64
    }

    /// Metric area of a triangle.
    pub fn area(&self, t: usize) -> f64 {
        self.geometry[t].area
    }
    pub fn coord_area(&self, t: usize) -> f64 {
        self.geometry[t].coord_area
    }
    pub fn total_area(&self) -> f64 {
        self.total_area
    }
    /// `sqrt(area)`: a length scale for tolerances.
    pub fn length_scale(&self) -> f64 {
        self.total_area.sqrt()
    }

    /// Longest edge measured in the metric of an adjacent triangle.
    pub fn mesh_size(&self) -> f64 {
        let mut h: f64 = 0.0;
        for (ti, t) in self.doc.triangles.iter().enumerate() {
            let m = self.doc.metric[ti].0;
            for k in 0..3 {
                let e = sub(self.doc.vertices[t[(k + 1) % 3]], self.doc.vertices[t[k]]);
                let l2 = e[0] * (m[0][0] * e[0] + m[0][1] * e[1])
                    + e[1] * (m[1][0] * e[0] + m[1][1] * e[1]);
                h = h.max(l2.sqrt());
            }
        }
        h
    }

    pub fn centroid(&self, t: usize) -> Point {
        let tri = self.doc.triangles[t];
        let mut c = [0.0, 0.0];
        for v in tri {
            c[0] += self.doc.vertices[v][0] / 3.0;
            c[1] += self.doc.vertices[v][1] / 3.0;
        }
        c
    }

    /// Translation of the chart produced by a deck shift.
    pub fn deck_displacement(&self, shift: &[i64]) -> Point {
        let mut d = [0.0, 0.0];
        for (s, v) in shift.iter().zip(&self.doc.deck) {
            d[0] += *s as f64 * v[0];
            d[1] += *s as f64 * v[1];
        }
        d
    }

    pub(crate) fn triangle_grad(&self, t: usize) -> &[[f64; 3]; 2] {
        &self.geometry[t].grad
    }

    pub fn inv_metric(&self, t: usize) -> [[f64; 2]; 2] {
        self.geometry[t].inv_metric
    }

    /// Squared metric norm of a covector on triangle `t`.
    pub fn norm_sq(&self, t: usize, w: Covector) -> f64 {
        let m = &self.geometry[t].inv_metric;
        w[0] * (m[0][0] * w[0] + m[0][1] * w[1]) + w[1] * (m[1][0] * w[0] + m[1][1] * w[1])
    }

    pub fn norm(&self, t: usize, w: Covector) -> f64 {
        self.norm_sq(t, w).max(0.0).sqrt()
    }

    /// Metric inner product of two covectors on triangle `t`.
    pub fn inner(&self, t: usize, a: Covector, b: Covector) -> f64 {
        let m = &self.geometry[t].inv_metric;
        a[0] * (m[0][0] * b[0] + m[0][1] * b[1]) + a[1] * (m[1][0] * b[0] + m[1][1] * b[1])
    }

    /// Coefficient of `a ^ b` against the metric volume form on triangle `t`.
    pub fn wedge(&self, t: usize, a: Covector, b: Covector) -> f64 {
        (a[0] * b[1] - a[1] * b[0]) / self.geometry[t].sqrt_det
    }

    /// Hodge star of a covector on triangle `t`.
    pub fn star(&self, t: usize, w: Covector) -> Covector {
        let g = &self.geometry[t];
        let m = &g.inv_metric;
        let raised = [
            m[0][0] * w[0] + m[0][1] * w[1],
            m[1][0] * w[0] + m[1][1] * w[1],
        ];
        [-g.sqrt_det * raised[1], g.sqrt_det * raised[0]]
    }

    /// Gradient covector of the affine interpolant of three corner values.
    pub fn gradient_of(&self, t: usize, vals: [f64; 3]) -> Covector {
        let g = &self.geometry[t].grad;
        [
            g[0][0] * vals[0] + g[0][1] * vals[1] + g[0][2] * vals[2],
            g[1][0] * vals[0] + g[1][1] * vals[1] + g[1][2] * vals[2],
        ]
    }

    fn is_edge(&self, a: usize, b: usize) -> bool {
        self.edge_triangles.contains_key(&edge_key(a, b))
    }

    /// Homology class of a closed path of cut vertices (see [`period_integral`]).
    pub fn loop_class(&self, path: &[usize]) -> Result<Vec<i64>, MeshError> {
        let nb = self.n_generators();
        if path.len() < 2 {
            return Err(MeshError::OpenPath);
        }
        for &v in path {
            if v >= self.n_vertices() {
                return Err(MeshError::VertexOutOfRange(v));
            }
        }
        let mut sheet = vec![0i64; nb];
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            if self.class_of[a] == self.class_of[b] && a != b {
                add_shift(&mut sheet, &self.shift_of[a], 1);
                add_shift(&mut sheet, &self.shift_of[b], -1);
            } else if !self.is_edge(a, b) {
                return Err(MeshError::BrokenPath(a, b));
            }
        }
        let (first, last) = (path[0], path[path.len() - 1]);
        if self.class_of[first] != self.class_of[last] {
            return Err(MeshError::OpenPath);
        }
        add_shift(&mut sheet, &self.shift_of[last], 1);
        add_shift(&mut sheet, &self.shift_of[first], -1);
        Ok(sheet)
    }

    /// Covector used to integrate a PL form along the cut edge `a -> b`:
    /// the mean over the (one or two) surface triangles sharing the edge.
    fn edge_covector(&self, form: &PLOneForm, a: usize, b: usize) -> Covector {
        let key = edge_key(a, b);
        let mut tris: Vec<usize> = self.edge_triangles[&key].clone();
        if tris.len() == 1 {
            let t = tris[0];
            let tri = self.doc.triangles[t];
            let k = (0..3)
                .find(|&k| edge_key(tri[(k + 1) % 3], tri[(k + 2) % 3]) == key)
                .expect("edge belongs to its triangle");
            if let Some(n) = &self.neighbors[t][k] {
                tris.push(n.triangle);
            }
        }
        let mut c = [0.0, 0.0];
        for &t in &tris {
            c[0] += form.covectors[t][0];
            c[1] += form.covectors[t][1];
        }
        let n = tris.len() as f64;
        [c[0] / n, c[1] / n]
    }

    /// Locate a point of the cut domain: triangle and barycentric coordinates.
    /// Barycentric coordinates of `x` with respect to triangle `t`.
    pub fn barycentric(&self, t: usize, x: Point) -> [f64; 3] {
        let tri = self.doc.triangles[t];
        let p0 = self.doc.vertices[tri[0]];
        let e1 = sub(self.doc.vertices[tri[1]], p0);
        let e2 = sub(self.doc.vertices[tri[2]], p0);
        let d = sub(x, p0);
        let det = e1[0] * e2[1] - e1[1] * e2[0];
        let l1 = (d[0] * e2[1] - d[1] * e2[0]) / det;
        let l2 = (e1[0] * d[1] - e1[1] * d[0]) / det;
        [1.0 - l1 - l2, l1, l2]
    }

    /// Candidate triangles from the construction grid, if any.
    fn grid_candidates(&self, x: Point) -> Vec<usize> {
        let nt = self.n_triangles();
        let cell = |c: usize| [2 * c, 2 * c + 1];
        match &self.doc.domain {
            Some(Domain::Torus { basis, resolution }) => {
                let [e1, e2] = *basis;
                let n = *resolution;
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                let l1 = (x[0] * e2[1] - x[1] * e2[0]) / det;
                let l2 = (e1[0] * x[1] - e1[1] * x[0]) / det;
                let i = ((l1 * n as f64).floor().max(0.0) as usize).min(n - 1);
                let j = ((l2 * n as f64).floor().max(0.0) as usize).min(n - 1);
                cell(j * n + i).to_vec()
            }
            Some(Domain::Annulus { n_theta, n_r, options, .. }) => {
                let (r, th) = match options.chart {
                    AnnulusChart::Polar => (x[0], x[1]),
                    AnnulusChart::Planar => (x[0].hypot(x[1]), x[1].atan2(x[0]).rem_euclid(2.0 * PI)),
                };
                let ring = |i: usize| self.doc.vertices[i * (n_theta + 1)][0];
                // largest i with ring(i) <= r, clamped to a valid cell row
                let (mut lo, mut hi) = (0usize, *n_r);
                while hi - lo > 1 {
                    let mid = (lo + hi) / 2;
                    if ring(mid) <= r {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let j = ((th / (2.0 * PI) * *n_theta as f64).floor().max(0.0) as usize).min(n_theta - 1);
                let mut out = Vec::with_capacity(18);
                for di in [0i64, -1, 1] {
                    for dj in [0i64, -1, 1] {
                        let ii = lo as i64 + di;
                        if ii < 0 || ii >= *n_r as i64 {
                            continue;
                        }
                        let jj = (j as i64 + dj).rem_euclid(*n_theta as i64) as usize;
                        out.extend(cell(ii as usize * n_theta + jj));
                    }
                }
                out
            }
            None => Vec::new(),
        }
        .into_iter()
        .filter(|&t| t < nt)
        .collect()
    }

    /// Triangle containing `x` (chart of the cut domain) and its barycentric
    /// coordinates. Points within `1e-9` (barycentric) of a triangle count.
    pub fn locate(&self, x: Point) -> Option<(usize, [f64; 3])> {
        let worst = |b: &[f64; 3]| b.iter().cloned().fold(f64::INFINITY, f64::min);
        for t in self.grid_candidates(x) {
            let b = self.barycentric(t, x);
            if worst(&b) >= -1e-12 {
                return Some((t, b));
            }
        }
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for ti in 0..self.n_triangles() {
            let bary = self.barycentric(ti, x);
            let w = worst(&bary);
            if w >= 0.0 {
                return Some((ti, bary));
            }
            if best.as_ref().map_or(true, |b| w > b.2) {
                best = Some((ti, bary, w));
            }
        }
        match best {
            Some((ti, bary, w)) if w > -1e-9 => Some((ti, bary)),
            _ => None,
        }
    }

    /// Map a point of the chart of the universal cover into the cut domain.
    /// Returns the reduced point and the deck shift `s` with `x = x0 + deck(s)`.
    pub fn reduce(&self, x: Point) -> Result<(Point, Vec<i64>), MeshError> {
        match &self.doc.domain {
            Some(Domain::Torus { basis, .. }) => {
                let [e1, e2] = *basis;
                let det = e1[0] * e2[1] - e1[1] * e2[0];
                let l1 = (x[0] * e2[1] - x[1] * e2[0]) / det;
                let l2 = (e1[0] * x[1] - e1[1] * x[0]) / det;
                let (s1, s2) = (l1.floor(), l2.floor());
                let f1 = l1 - s1;
                let f2 = l2 - s2;
                Ok((
                    [f1 * e1[0] + f2 * e2[0], f1 * e1[1] + f2 * e2[1]],
                    vec![s1 as i64, s2 as i64],
                ))
            }
            Some(Domain::Annulus {
                options:
                    AnnulusOptions {
                        chart: AnnulusChart::Polar,
                        ..
                    },
                ..
            }) => {
                let s = (x[1] / (2.0 * PI)).floor();
                Ok(([x[0], x[1] - 2.0 * PI * s], vec![s as i64]))
            }
            _ => Ok((x, vec![0; self.n_generators()])),
        }
    }
}

/// Period homomorphism on the homology basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Homomorphism {
    pub periods: Vec<f64>,
}

impl Homomorphism {
    pub fn new(periods: Vec<f64>) -> Self {
        Self { periods }
    }
    pub fn zero(n: usize) -> Self {
        Self {
            periods: vec![0.0; n],
        }
    }
    /// Value on an integer combination of basis loops.
    pub fn eval(&self, shift: &[i64]) -> f64 {
        shift
            .iter()
            .zip(&self.periods)
            .map(|(s, p)| *s as f64 * p)
            .sum()
    }
    pub fn is_zero(&self) -> bool {
        self.periods.iter().all(|p| *p == 0.0)
    }
}

/// Per-cut-vertex values of a map on the cover, equivariant under `rho`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivariantField {
    pub values: Vec<f64>,
    pub rho: Homomorphism,
}

impl EquivariantField {
    /// Build from one value per vertex class (the representative's value).
    pub fn from_free(mesh: &SurfaceMesh, free: &[f64], rho: Homomorphism) -> Self {
        let values = (0..mesh.n_vertices())
            .map(|v| free[mesh.class_of[v]] + rho.eval(&mesh.shift_of[v]))
            .collect();
        Self { values, rho }
    }

    /// Sample a function of the chart coordinates at the cut vertices.
    pub fn from_fn(mesh: &SurfaceMesh, rho: Homomorphism, f: impl Fn(Point) -> f64) -> Self {
        let free: Vec<f64> = (0..mesh.n_classes())
            .map(|c| f(mesh.doc.vertices[mesh.class_rep[c]]))
            .collect();
        Self::from_free(mesh, &free, rho)
    }

    pub fn constant(mesh: &SurfaceMesh, c: f64) -> Self {
        Self::from_free(
            mesh,
            &vec![c; mesh.n_classes()],
            Homomorphism::zero(mesh.n_generators()),
        )
    }

    pub fn free_values(&self, mesh: &SurfaceMesh) -> Vec<f64> {
        mesh.class_rep.iter().map(|&v| self.values[v]).collect()
    }

    pub fn check(&self, mesh: &SurfaceMesh) -> Result<(), MeshError> {
        if self.values.len() != mesh.n_vertices() {
            return Err(MeshError::SizeMismatch {
                what: "field values",
                expected: mesh.n_vertices(),
                got: self.values.len(),
            });
        }
        if self.rho.periods.len() != mesh.n_generators() {
            return Err(MeshError::SizeMismatch {
                what: "periods",
                expected: mesh.n_generators(),
                got: self.rho.periods.len(),
            });
        }
        let scale = 1.0
            + self.rho.periods.iter().map(|p| p.abs()).sum::<f64>()
            + self.values.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for v in 0..mesh.n_vertices() {
            let rep = mesh.class_rep[mesh.class_of[v]];
            let expect = self.values[rep] + self.rho.eval(&mesh.shift_of[v]);
            let mismatch = (self.values[v] - expect).abs();
            if !(mismatch <= 1e-9 * scale) {
                return Err(MeshError::NotEquivariant {
                    vertex: v,
                    mismatch,
                });
            }
        }
        Ok(())
    }

    pub fn corner_values(&self, mesh: &SurfaceMesh, t: usize) -> [f64; 3] {
        let tri = mesh.doc.triangles[t];
        [self.values[tri[0]], self.values[tri[1]], self.values[tri[2]]]
    }

    /// Value of the PL interpolant at a point of the chart of the cover.
    pub fn evaluate(&self, mesh: &SurfaceMesh, x: Point) -> Result<f64, MeshError> {
        let (x0, s) = mesh.reduce(x)?;
        let (t, bary) = mesh.locate(x0).ok_or(MeshError::PointOutside(x))?;
        let c = self.corner_values(mesh, t);
        Ok(bary[0] * c[0] + bary[1] * c[1] + bary[2] * c[2] + self.rho.eval(&s))
    }

    /// Area-weighted mean over the fundamental domain (PL quadrature).
    pub fn mean(&self, mesh: &SurfaceMesh) -> f64 {
        let mut acc = 0.0;
        for t in 0..mesh.n_triangles() {
            let c = self.corner_values(mesh, t);
            acc += mesh.area(t) * (c[0] + c[1] + c[2]) / 3.0;
        }
        acc / mesh.total_area()
    }

    pub fn add_constant(&mut self, c: f64) {
        for v in &mut self.values {
            *v += c;
        }
    }
}

/// One constant covector per triangle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PLOneForm {
    pub covectors: Vec<Covector>,
}

impl PLOneForm {
    pub fn zero(n: usize) -> Self {
        Self {
            covectors: vec![[0.0, 0.0]; n],
        }
    }

    pub fn constant(n: usize, w: Covector) -> Self {
        Self {
            covectors: vec![w; n],
        }
    }

    pub fn norms(&self, mesh: &SurfaceMesh) -> Vec<f64> {
        self.covectors
            .iter()
            .enumerate()
            .map(|(t, w)| mesh.norm(t, *w))
            .collect()
    }

    /// `sum_T |w_T| area(T)`.
    pub fn mass(&self, mesh: &SurfaceMesh) -> f64 {
        self.covectors
            .iter()
            .enumerate()
            .map(|(t, w)| mesh.norm(t, *w) * mesh.area(t))
            .sum()
    }

    pub fn scaled(&self, a: f64) -> Self {
        Self {
            covectors: self.covectors.iter().map(|w| [a * w[0], a * w[1]]).collect(),
        }
    }

    pub fn axpy(&self, a: f64, other: &PLOneForm) -> Self {
        Self {
            covectors: self
                .covectors
                .iter()
                .zip(&other.covectors)
                .map(|(w, o)| [w[0] + a * o[0], w[1] + a * o[1]])
                .collect(),
        }
    }
}

/// Uniform triangulation of the parallelogram spanned by `lattice_basis`,
/// opposite sides glued.
pub fn build_torus(lattice_basis: [[f64; 2]; 2], resolution: usize) -> Result<SurfaceMesh, MeshError> {
    let [e1, e2] = lattice_basis;
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    if !(det.abs() >= 1e-12) {
        return Err(MeshError::DegenerateLattice(det.abs()));
    }
    if resolution < 2 {
        return Err(MeshError::InvalidParameter {
            field: "resolution",
            reason: format!("must be at least 2, got {resolution}"),
        });
    }
    let n = resolution;
    let idx = |i: usize, j: usize| j * (n + 1) + i;
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
    for j in 0..=n {
        for i in 0..=n {
            let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
            vertices.push([a * e1[0] + b * e2[0], a * e1[1] + b * e2[1]]);
        }
    }
    let mut triangles = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for i in 0..n {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            if det > 0.0 {
                triangles.push([a, b, c]);
                triangles.push([a, c, d]);
            } else {
                triangles.push([a, c, b]);
                triangles.push([a, d, c]);
            }
        }
    }
    let mut gluings = Vec::with_capacity(2 * n);
    for i in 0..n {
        gluings.push(Gluing {
            source: [idx(i, 0), idx(i + 1, 0)],
            target: [idx(i, n), idx(i + 1, n)],
            shift: vec![0, 1],
        });
    }
    for j in 0..n {
        gluings.push(Gluing {
            source: [idx(0, j), idx(0, j + 1)],
            target: [idx(n, j), idx(n, j + 1)],
            shift: vec![1, 0],
        });
    }
    let loop1 = (0..=n).map(|i| idx(i, 0)).collect();
    let loop2 = (0..=n).map(|j| idx(0, j)).collect();
    let nt = triangles.len();
    SurfaceMesh::from_document(MeshDocument {
        vertices,
        triangles,
        gluings,
        metric: vec![Metric::IDENTITY; nt],
        homology_basis: vec![loop1, loop2],
        boundary_edges: Vec::new(),
        deck: vec![e1, e2],
        domain: Some(Domain::Torus {
            basis: lattice_basis,
            resolution,
        }),
    })
}

/// Annulus `r0 <= r <= r1` with the default chart and grading.
pub fn build_annulus(r0: f64, r1: f64, n_theta: usize, n_r: usize) -> Result<SurfaceMesh, MeshError> {
    build_annulus_with(r0, r1, n_theta, n_r, AnnulusOptions::default())
}

pub fn build_annulus_with(
    r0: f64,
    r1: f64,
    n_theta: usize,
    n_r: usize,
    options: AnnulusOptions,
) -> Result<SurfaceMesh, MeshError> {
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(MeshError::InvalidParameter {
            field: "r0",
            reason: format!("must be positive, got {r0}"),
        });
    }
    if !(r1 > r0) || !r1.is_finite() {
        return Err(MeshError::InvalidParameter {
            field: "r1",
            reason: format!("must exceed r0 = {r0}, got {r1}"),
        });
    }
    if n_theta < 3 {
        return Err(MeshError::InvalidParameter {
            field: "n_theta",
            reason: format!("must be at least 3, got {n_theta}"),
        });
    }
    if n_r < 2 {
        return Err(MeshError::InvalidParameter {
            field: "n_r",
            reason: format!("must be at least 2, got {n_r}"),
        });
    }
    let radii = options.grading.radii(r0, r1, n_r);
    let idx = |i: usize, j: usize| i * (n_theta + 1) + j;
    let theta = |j: usize| 2.0 * PI * j as f64 / n_theta as f64;
    let mut vertices = Vec::with_capacity((n_r + 1) * (n_theta + 1));
    for &r in &radii {
        for j in 0..=n_theta {
            vertices.push(match options.chart {
                AnnulusChart::Polar => [r, theta(j)],
                AnnulusChart::Planar if j == n_theta => [r, 0.0],
                AnnulusChart::Planar => [r * theta(j).cos(), r * theta(j).sin()],
            });
        }
    }
    let mut triangles = Vec::with_capacity(2 * n_r * n_theta);
    let mut metric = Vec::with_capacity(2 * n_r * n_theta);
    for i in 0..n_r {
        for j in 0..n_theta {
            let (a, b, c, d) = (idx(i, j), idx(i, j + 1), idx(i + 1, j + 1), idx(i + 1, j));
            for tri in [[a, d, c], [a, c, b]] {
                if options.chart == AnnulusChart::Polar {
                    let rc = tri.iter().map(|&v| vertices[v][0]).sum::<f64>() / 3.0;
                    metric.push(Metric::diagonal(1.0, rc * rc));
                } else {
                    metric.push(Metric::IDENTITY);
                }
                triangles.push(tri);
            }
        }
    }
    let gluings = (0..n_r)
        .map(|i| Gluing {
            source: [idx(i, 0), idx(i + 1, 0)],
            target: [idx(i, n_theta), idx(i + 1, n_theta)],
            shift: vec![1],
        })
        .collect();
    let mut boundary_edges = Vec::with_capacity(2 * n_theta);
    for j in 0..n_theta {
        boundary_edges.push([idx(0, j), idx(0, j + 1)]);
    }
    for j in 0..n_theta {
        boundary_edges.push([idx(n_r, j), idx(n_r, j + 1)]);
    }
    let deck = match options.chart {
        AnnulusChart::Polar => [0.0, 2.0 * PI],
        AnnulusChart::Planar => [0.0, 0.0],
    };
    SurfaceMesh::from_document(MeshDocument {
        vertices,
        triangles,
        gluings,
        metric,
        homology_basis: vec![(0..=n_theta).map(|j| idx(0, j)).collect()],
        boundary_edges,
        deck: vec![deck],
        domain: Some(Domain::Annulus {
            r0,
            r1,
            n_theta,
            n_r,
            options,
        }),
    })
}

/// Per-triangle gradient of the affine interpolant; the result is
/// single-valued on the surface because period shifts are constant across
/// each triangle.
pub fn differential(mesh: &SurfaceMesh, u: &EquivariantField) -> Result<PLOneForm, MeshError> {
    u.check(mesh)?;
    Ok(differential_unchecked(mesh, u))
}

pub(crate) fn differential_unchecked(mesh: &SurfaceMesh, u: &EquivariantField) -> PLOneForm {
    PLOneForm {
        covectors: (0..mesh.n_triangles())
            .map(|t| mesh.gradient_of(t, u.corner_values(mesh, t)))
            .collect(),
    }
}

/// Integral of a PL one-form along a closed path of cut vertices.
///
/// Consecutive entries are joined by a mesh edge or are copies of the same
/// surface vertex (a zero-length jump across the cut). Each edge uses the mean
/// covector of the triangles that share it on the surface.
pub fn period_integral(mesh: &SurfaceMesh, form: &PLOneForm, path: &[usize]) -> Result<f64, MeshError> {
    mesh.loop_class(path)?;
    if form.covectors.len() != mesh.n_triangles() {
        return Err(MeshError::SizeMismatch {
            what: "covectors",
            expected: mesh.n_triangles(),
            got: form.covectors.len(),
        });
    }
    let mut acc = 0.0;
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        if mesh.class_of[a] == mesh.class_of[b] && !mesh.is_edge(a, b) {
            continue;
        }
        let c = mesh.edge_covector(form, a, b);
        let e = sub(mesh.doc.vertices[b], mesh.doc.vertices[a]);
        acc += c[0] * e[0] + c[1] * e[1];
    }
    Ok(acc)
}

/// Per-triangle Hodge star (rotation by +90 degrees in the triangle metric).
pub fn hodge_star(mesh: &SurfaceMesh, form: &PLOneForm) -> PLOneForm {
    PLOneForm {
        covectors: form
            .covectors
            .iter()
            .enumerate()
            .map(|(t, w)| mesh.star(t, *w))
            .collect(),
    }
}

/// Closed constant one-forms dual to the homology basis on a flat torus:
/// `int_{gamma_j} omega_i = delta_ij`.
pub fn torus_basis_forms(mesh: &SurfaceMesh) -> Option<[PLOneForm; 2]> {
    let Some(Domain::Torus { basis, .. }) = mesh.domain() else {
        return None;
    };
    Some([0, 1].map(|i| {
        let mut rho = [0.0, 0.0];
        rho[i] = 1.0;
        PLOneForm::constant(mesh.n_triangles(), linear_covector(*basis, rho))
    }))
}

/// Covector `a` of the affine map `x -> a.x` with `a.e_i = rho_i`.
pub fn linear_covector(basis: [[f64; 2]; 2], rho: [f64; 2]) -> Covector {
    let [e1, e2] = basis;
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    [
        (rho[0] * e2[1] - rho[1] * e1[1]) / det,
        (e1[0] * rho[1] - e2[0] * rho[0]) / det,
    ]
}
