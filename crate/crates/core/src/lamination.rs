//! Plaques and transverse cocycles of a conjugate field, measured laminations
//! by closed leaves on flat tori, and BV decomposition of transverse traces.
//!
//! A plaque is a lifted component of the complement of the stretch set on
//! which `v` is nearly constant. A transversal is a polyline in the chart of
//! the universal cover whose endpoints lie in plaques; its cocycle value is a
//! signed sum of plaque constants, kept as an integer coefficient map so that
//! additivity, reversal and homotopy invariance can be checked exactly.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limits::{lifted_components, tls_fit, StretchSet};
use crate::mesh::{
    differential_unchecked, AnnulusChart, Domain, EquivariantField, Homomorphism, MeshError, PLOneForm, Point,
    SurfaceMesh,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LaminationError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("transversal needs at least two points")]
    TooShort,
    #[error("transversal {which} point {point:?} is not in a plaque")]
    InadmissibleEndpoint { which: &'static str, point: Point },
    #[error("transversal leaves the surface at {0:?}")]
    Outside(Point),
    #[error("transversal is tangential to the stretch set near {0:?}")]
    NonTransverse(Point),
    #[error("transversal jumps between plaques without crossing the stretch set near {0:?}")]
    Undersampled(Point),
    #[error("invalid lamination: {0}")]
    Invalid(String),
    #[error("operation requires a {0} mesh")]
    WrongDomain(&'static str),
    #[error("invalid trace: {0}")]
    Trace(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaqueKind {
    /// Lifted component of the complement of the stretch set.
    Interior,
    /// Boundary loop entirely covered by the stretch set; `v` is read off the
    /// loop itself.
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Plaque {
    pub kind: PlaqueKind,
    pub triangles: Vec<usize>,
    pub boundary_edges: Vec<[usize; 2]>,
    /// Echelon basis of the deck shifts of loops inside the plaque; lifts
    /// are taken modulo this lattice.
    pub loops: Vec<Vec<i64>>,
    /// Area-weighted mean of the lifted `v` (boundary: mean over the loop).
    pub constant: f64,
    /// `max v - min v` over the lifted plaque.
    pub spread: f64,
    /// `spread > plaque_tol`.
    pub flagged: bool,
}

/// One component of the stretch set with its fitted transverse direction.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Band {
    pub triangles: Vec<usize>,
    /// Unit chart normal of the fitted line, oriented so that `v` increases.
    pub normal: Point,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Label {
    Plaque(usize),
    Band(usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct PlaqueDecomposition {
    pub plaques: Vec<Plaque>,
    pub bands: Vec<Band>,
    pub plaque_tol: f64,
    pub alpha: Homomorphism,
    /// `(plaque, band)` pairs sharing an edge.
    pub adjacency: Vec<[usize; 2]>,
    /// Chart step used to sample transversals.
    pub sample_spacing: f64,
    /// Minimal sine of the angle between a transversal and a band.
    pub min_sine: f64,
    #[serde(skip)]
    labels: Vec<Label>,
    /// BFS sheet of each triangle within its plaque or band.
    #[serde(skip)]
    sheets: Vec<Vec<i64>>,
    #[serde(skip)]
    boundary_plaque_of: HashMap<(usize, usize), usize>,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

fn dist_to_segment(x: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let l2 = d[0] * d[0] + d[1] * d[1];
    let t = if l2 > 0.0 {
        (((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / l2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (x[0] - a[0] - t * d[0]).hypot(x[1] - a[1] - t * d[1])
}

/// Boundary edges grouped into loops through shared vertex classes.
fn boundary_loops(mesh: &SurfaceMesh) -> Vec<Vec<[usize; 2]>> {
    let edges = mesh.boundary_edges();
    let mut parent: Vec<usize> = (0..edges.len()).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        let mut j = i;
        while p[j] != r {
            let n = p[j];
            p[j] = r;
            j = n;
        }
        r
    }
    let mut first: HashMap<usize, usize> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        for &v in e {
            let c = mesh.class_of(v);
            match first.get(&c) {
                Some(&j) => {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
                None => {
                    first.insert(c, i);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<[usize; 2]>> = BTreeMap::new();
    for (i, e) in edges.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(*e);
    }
    groups.into_values().collect()
}

/// Echelon basis of the integer lattice spanned by `gens`; pivots positive.
fn echelon(mut gens: Vec<Vec<i64>>, dim: usize) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for col in 0..dim {
        loop {
            gens.retain(|g| g.iter().any(|x| *x != 0));
            let mut nz: Vec<usize> = (0..gens.len()).filter(|&i| gens[i][col] != 0).collect();
            if nz.is_empty() {
                break;
            }
            nz.sort_by_key(|&i| gens[i][col].abs());
            let p = nz[0];
            if nz.len() == 1 {
                let mut row = gens.swap_remove(p);
                if row[col] < 0 {
                    row.iter_mut().for_each(|x| *x = -*x);
                }
                out.push(row);
                break;
            }
            let pivot = gens[p].clone();
            for &i in &nz[1..] {
                let q = gens[i][col].div_euclid(pivot[col]);
                for (a, b) in gens[i].iter_mut().zip(&pivot) {
                    *a -= q * b;
                }
            }
        }
    }
    out
}

/// Canonical representative of `k` modulo an echelon lattice.
fn reduce_mod(k: &mut [i64], lattice: &[Vec<i64>]) {
    for row in lattice {
        let col = row.iter().position(|x| *x != 0).expect("nonzero row");
        let q = k[col].div_euclid(row[col]);
        for (a, b) in k.iter_mut().zip(row) {
            *a -= q * b;
        }
    }
}

impl PlaqueDecomposition {
    /// Decompose the complement of `stretch` for the conjugate field `v`.
    /// `plaque_tol` defaults to `1e-2 (max v - min v)`.
    pub fn new(
        mesh: &SurfaceMesh,
        v: &EquivariantField,
        stretch: &StretchSet,
        plaque_tol: Option<f64>,
    ) -> Result<Self, LaminationError> {
        v.check(mesh)?;
        let nt = mesh.n_triangles();
        let nb = mesh.n_generators();
        let alpha = v.rho.clone();
        let mut in_stretch = vec![false; nt];
        for &t in &stretch.triangles {
            in_stretch[t] = true;
        }
        let (vmin, vmax) = v
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(*x), b.max(*x)));
        let plaque_tol = plaque_tol.unwrap_or(1e-2 * (vmax - vmin));
        let mut labels = vec![Label::Band(0); nt];
        let mut sheets = vec![vec![0i64; nb]; nt];

        let mut plaques = Vec::new();
        let outside: Vec<bool> = in_stretch.iter().map(|b| !b).collect();
        for comp in lifted_components(mesh, &outside) {
            let j = plaques.len();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut acc, mut area) = (0.0, 0.0);
            let sheet_of: HashMap<usize, &Vec<i64>> = comp.iter().map(|(t, s)| (*t, s)).collect();
            let mut gens = Vec::new();
            for (t, s) in &comp {
                for n in mesh.neighbors(*t).iter().flatten() {
                    if let Some(sn) = sheet_of.get(&n.triangle) {
                        let g: Vec<i64> = (0..nb).map(|i| s[i] + n.sheet_shift[i] - sn[i]).collect();
                        if g.iter().any(|x| *x != 0) {
                            gens.push(g);
                        }
                    }
                }
            }
            for (t, s) in &comp {
                labels[*t] = Label::Plaque(j);
                sheets[*t] = s.clone();
                let shift = alpha.eval(s);
                let c = v.corner_values(mesh, *t).map(|x| x + shift);
                for x in c {
                    lo = lo.min(x);
                    hi = hi.max(x);
                }
                acc += mesh.area(*t) * (c[0] + c[1] + c[2]) / 3.0;
                area += mesh.area(*t);
            }
            plaques.push(Plaque {
                kind: PlaqueKind::Interior,
                triangles: comp.iter().map(|(t, _)| *t).collect(),
                boundary_edges: Vec::new(),
                loops: echelon(gens, nb),
                constant: acc / area,
                spread: hi - lo,
                flagged: hi - lo > plaque_tol,
            });
        }

        let du = differential_unchecked(mesh, v);
        let mut bands = Vec::new();
        for comp in lifted_components(mesh, &in_stretch) {
            let b = bands.len();
            let pts: Vec<Point> = comp
                .iter()
                .map(|(t, s)| {
                    let c = mesh.centroid(*t);
                    let d = mesh.deck_displacement(s);
                    [c[0] + d[0], c[1] + d[1]]
                })
                .collect();
            let (line, _) = tls_fit(&pts);
            let mut normal = [-line.direction[1], line.direction[0]];
            let growth: f64 = comp
                .iter()
                .map(|(t, _)| {
                    let w = du.covectors[*t];
                    (w[0] * normal[0] + w[1] * normal[1]) * mesh.area(*t)
                })
                .sum();
            if growth < 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            for (t, s) in &comp {
                labels[*t] = Label::Band(b);
                sheets[*t] = s.clone();
            }
            bands.push(Band {
                triangles: comp.into_iter().map(|(t, _)| t).collect(),
                normal,
            });
        }

        // Boundary loops swallowed by the stretch set become plaques.
        let mut edge_triangle: HashMap<(usize, usize), usize> = HashMap::new();
        for (t, tri) in mesh.triangles().iter().enumerate() {
            for k in 0..3 {
                edge_triangle.insert(edge_key(tri[k], tri[(k + 1) % 3]), t);
            }
        }
        let mut boundary_plaque_of = HashMap::new();
        for edges in boundary_loops(mesh) {
            let covered = edges
                .iter()
                .all(|e| edge_triangle.get(&edge_key(e[0], e[1])).map_or(false, |&t| in_stretch[t]));
            if !covered {
                continue;
            }
            let j = plaques.len();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let (mut acc, mut len) = (0.0, 0.0);
            let mut shift_of_class: HashMap<usize, &[i64]> = HashMap::new();
            let mut gens = Vec::new();
            for e in &edges {
                for &x in e {
                    let s = mesh.shift_of(x);
                    if let Some(prev) = shift_of_class.insert(mesh.class_of(x), s) {
                        if prev != s {
                            gens.push(s.iter().zip(prev).map(|(a, b)| a - b).collect());
                        }
                    }
                }
                boundary_plaque_of.insert(edge_key(e[0], e[1]), j);
                let (a, b) = (v.values[e[0]], v.values[e[1]]);
                let (pa, pb) = (mesh.vertices()[e[0]], mesh.vertices()[e[1]]);
                let l = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
                acc += 0.5 * (a + b) * l;
                len += l;
                lo = lo.min(a.min(b));
                hi = hi.max(a.max(b));
            }
            plaques.push(Plaque {
                kind: PlaqueKind::Boundary,
                triangles: Vec::new(),
                boundary_edges: edges,
                loops: echelon(gens, nb),
                constant: acc / len,
                spread: hi - lo,
                flagged: hi - lo > plaque_tol,
            });
        }

        let mut adj = std::collections::BTreeSet::new();
        for t in 0..nt {
            for n in mesh.neighbors(t).iter().flatten() {
                if let (Label::Plaque(j), Label::Band(b)) = (labels[t], labels[n.triangle]) {
                    adj.insert([j, b]);
                }
            }
        }
        for (e, &j) in &boundary_plaque_of {
            if let Some(&t) = edge_triangle.get(e) {
                if let Label::Band(b) = labels[t] {
                    adj.insert([j, b]);
                }
            }
        }

        let mut lengths: Vec<f64> = mesh
            .triangles()
            .iter()
            .flat_map(|tri| {
                (0..3).map(move |k| (tri[k], tri[(k + 1) % 3]))
            })
            .map(|(a, b)| {
                let (pa, pb) = (mesh.vertices()[a], mesh.vertices()[b]);
                (pb[0] - pa[0]).hypot(pb[1] - pa[1])
            })
            .collect();
        lengths.sort_by(f64::total_cmp);
        let sample_spacing = 0.5 * lengths[lengths.len() / 2];

        Ok(Self {
            plaques,
            bands,
            plaque_tol,
            alpha,
            adjacency: adj.into_iter().collect(),
            sample_spacing,
            min_sine: 1e-3,
            labels,
            sheets,
            boundary_plaque_of,
        })
    }

    pub fn flagged(&self) -> Vec<usize> {
        (0..self.plaques.len()).filter(|&j| self.plaques[j].flagged).collect()
    }

    /// Value of `v` on the lift of plaque `r.plaque` displaced by `r.lift`.
    pub fn lifted_constant(&self, r: &PlaqueRef) -> f64 {
        self.plaques[r.plaque].constant + self.alpha.eval(&r.lift)
    }

    fn classify(&self, mesh: &SurfaceMesh, x: Point) -> Result<Sample, LaminationError> {
        let (x0, s) = mesh.reduce(x)?;
        let (t, _) = mesh.locate(x0).ok_or(LaminationError::Outside(x))?;
        let tri = mesh.triangles()[t];
        let scale = 1e-10 * (1.0 + x0[0].abs().max(x0[1].abs()));
        for k in 0..3 {
            let e = edge_key(tri[k], tri[(k + 1) % 3]);
            if let Some(&j) = self.boundary_plaque_of.get(&e) {
                let (a, b) = (mesh.vertices()[e.0], mesh.vertices()[e.1]);
                if dist_to_segment(x0, a, b) <= scale {
                    let mut lift = s;
                    reduce_mod(&mut lift, &self.plaques[j].loops);
                    return Ok(Sample::Plaque(PlaqueRef { plaque: j, lift }));
                }
            }
        }
        Ok(match self.labels[t] {
            Label::Plaque(j) => {
                let mut lift: Vec<i64> = s.iter().zip(&self.sheets[t]).map(|(a, b)| a - b).collect();
                reduce_mod(&mut lift, &self.plaques[j].loops);
                Sample::Plaque(PlaqueRef { plaque: j, lift })
            }
            Label::Band(b) => Sample::Band(b),
        })
    }

    fn sample(&self, points: &[Point]) -> Vec<(Point, f64)> {
        let mut out = vec![(points[0], 0.0)];
        let mut arc = 0.0;
        for w in points.windows(2) {
            let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
            let len = d[0].hypot(d[1]);
            let n = ((len / self.sample_spacing).ceil() as usize).max(1);
            for k in 1..=n {
                let f = k as f64 / n as f64;
                let p = if k == n { w[1] } else { [w[0][0] + f * d[0], w[0][1] + f * d[1]] };
                out.push((p, arc + f * len));
            }
            arc += len;
        }
        out
    }

    /// Crossings of the stretch set along `path`, in order.
    pub fn crossings(&self, mesh: &SurfaceMesh, path: &Transversal) -> Result<Vec<Crossing>, LaminationError> {
        if path.points.len() < 2 {
            return Err(LaminationError::TooShort);
        }
        let samples = self.sample(&path.points);
        let classes = samples
            .iter()
            .map(|(p, _)| self.classify(mesh, *p))
            .collect::<Result<Vec<_>, _>>()?;
        let first = match &classes[0] {
            Sample::Plaque(r) => r.clone(),
            Sample::Band(_) => {
                return Err(LaminationError::InadmissibleEndpoint {
                    which: "start",
                    point: path.points[0],
                })
            }
        };
        if let Sample::Band(_) = classes[classes.len() - 1] {
            return Err(LaminationError::InadmissibleEndpoint {
                which: "end",
                point: *path.points.last().unwrap(),
            });
        }
        let mut out = Vec::new();
        let mut current = first;
        let mut last_plaque_idx = 0;
        let mut k = 1;
        while k < classes.len() {
            match &classes[k] {
                Sample::Plaque(r) => {
                    if r.plaque != current.plaque {
                        return Err(LaminationError::Undersampled(samples[k].0));
                    }
                    last_plaque_idx = k;
                    k += 1;
                }
                Sample::Band(b) => {
                    let band = *b;
                    let start = last_plaque_idx;
                    let mut end = k;
                    while let Sample::Band(_) = classes[end] {
                        end += 1;
                    }
                    let n = self.bands[band].normal;
                    let sigma = |p: Point| n[0] * p[0] + n[1] * p[1];
                    let total = sigma(samples[end].0) - sigma(samples[start].0);
                    let sign = if total > 0.0 { 1 } else { -1 };
                    for i in start..end {
                        if let Sample::Band(bb) = classes[i + 1] {
                            if bb != band {
                                return Err(LaminationError::Undersampled(samples[i + 1].0));
                            }
                        }
                        let (p, q) = (samples[i].0, samples[i + 1].0);
                        let ds = (sigma(q) - sigma(p)) * sign as f64;
                        let len = (q[0] - p[0]).hypot(q[1] - p[1]);
                        if !(ds >= self.min_sine * len) || len == 0.0 {
                            return Err(LaminationError::NonTransverse(p));
                        }
                    }
                    let to = match &classes[end] {
                        Sample::Plaque(r) => r.clone(),
                        Sample::Band(_) => unreachable!(),
                    };
                    if to == current {
                        return Err(LaminationError::NonTransverse(samples[end].0));
                    }
                    out.push(Crossing {
                        band,
                        sign,
                        from: current.clone(),
                        to: to.clone(),
                        entry_arc: samples[start].1,
                        exit_arc: samples[end].1,
                    });
                    current = to;
                    last_plaque_idx = end;
                    k = end + 1;
                }
            }
        }
        Ok(out)
    }

    /// Maximal runs of crossings with a common sign. Consecutive pieces meet
    /// at the middle of the plaque visit that separates them.
    pub fn good_subdivision(&self, mesh: &SurfaceMesh, path: &Transversal) -> Result<Vec<Piece>, LaminationError> {
        let crossings = self.crossings(mesh, path)?;
        let total_arc = path.points.windows(2).map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1])).sum();
        let mut pieces: Vec<Piece> = Vec::new();
        for c in crossings {
            match pieces.last_mut() {
                Some(p) if p.sign == c.sign => {
                    p.end = c.to.clone();
                    p.crossings.push(c);
                }
                _ => {
                    if let Some(prev) = pieces.last_mut() {
                        let cut = 0.5 * (prev.crossings.last().unwrap().exit_arc + c.entry_arc);
                        prev.end_arc = cut;
                    }
                    let start_arc = pieces.last().map_or(0.0, |p| p.end_arc);
                    pieces.push(Piece {
                        sign: c.sign,
                        start: c.from.clone(),
                        end: c.to.clone(),
                        start_arc,
                        end_arc: total_arc,
                        crossings: vec![c],
                    });
                }
            }
        }
        if pieces.is_empty() {
            // no crossing: a single trivial piece
            let r = self.crossings_endpoint(mesh, path)?;
            pieces.push(Piece {
                sign: 1,
                start: r.clone(),
                end: r,
                start_arc: 0.0,
                end_arc: total_arc,
                crossings: Vec::new(),
            });
        }
        Ok(pieces)
    }

    fn crossings_endpoint(&self, mesh: &SurfaceMesh, path: &Transversal) -> Result<PlaqueRef, LaminationError> {
        match self.classify(mesh, path.points[0])? {
            Sample::Plaque(r) => Ok(r),
            Sample::Band(_) => Err(LaminationError::InadmissibleEndpoint {
                which: "start",
                point: path.points[0],
            }),
        }
    }

    /// Transverse cocycle: for each piece, `sign (v(end plaque) - v(start plaque))`,
    /// summed over the good subdivision.
    pub fn cocycle(&self, mesh: &SurfaceMesh, path: &Transversal) -> Result<CocycleValue, LaminationError> {
        let pieces = self.good_subdivision(mesh, path)?;
        let mut terms = Terms::new();
        for p in &pieces {
            for c in &p.crossings {
                *terms.entry((c.to.plaque, c.to.lift.clone())).or_insert(0) += c.sign;
                *terms.entry((c.from.plaque, c.from.lift.clone())).or_insert(0) -= c.sign;
            }
        }
        terms.retain(|_, c| *c != 0);
        let piece_values = pieces
            .iter()
            .map(|p| {
                p.crossings
                    .iter()
                    .map(|c| c.sign as f64 * (self.lifted_constant(&c.to) - self.lifted_constant(&c.from)))
                    .sum()
            })
            .collect();
        Ok(CocycleValue {
            id: path.id.clone(),
            value: self.evaluate_terms(&terms),
            signs: pieces.iter().map(|p| p.sign).collect(),
            piece_values,
            terms: terms.into_iter().collect(),
        })
    }

    /// Sum of coefficient times lifted plaque constant, in key order.
    pub fn evaluate_terms(&self, terms: &Terms) -> f64 {
        terms
            .iter()
            .map(|((j, lift), c)| {
                *c as f64
                    * self.lifted_constant(&PlaqueRef {
                        plaque: *j,
                        lift: lift.clone(),
                    })
            })
            .sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Sample {
    Plaque(PlaqueRef),
    Band(usize),
}

/// A plaque on a specific sheet of the cover.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PlaqueRef {
    pub plaque: usize,
    pub lift: Vec<i64>,
}

/// Coefficient of each lifted plaque constant.
pub type Terms = BTreeMap<(usize, Vec<i64>), i64>;

/// Polyline in the chart of the universal cover.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transversal {
    #[serde(default)]
    pub id: String,
    pub points: Vec<Point>,
}

impl Transversal {
    pub fn new(id: impl Into<String>, points: Vec<Point>) -> Self {
        Self { id: id.into(), points }
    }

    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self {
            id: format!("{}~", self.id),
            points,
        }
    }

    /// Split at vertex `k` into `[0..=k]` and `[k..]`.
    pub fn split_at(&self, k: usize) -> (Self, Self) {
        (
            Self::new(format!("{}a", self.id), self.points[..=k].to_vec()),
            Self::new(format!("{}b", self.id), self.points[k..].to_vec()),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Crossing {
    pub band: usize,
    /// `+1` when `v` increases across the band along the path.
    pub sign: i64,
    pub from: PlaqueRef,
    pub to: PlaqueRef,
    pub entry_arc: f64,
    pub exit_arc: f64,
}

/// Sub-path of a good subdivision; all crossings share one sign.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Piece {
    pub sign: i64,
    pub start: PlaqueRef,
    pub end: PlaqueRef,
    pub start_arc: f64,
    pub end_arc: f64,
    pub crossings: Vec<Crossing>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleValue {
    pub id: String,
    pub value: f64,
    pub signs: Vec<i64>,
    pub piece_values: Vec<f64>,
    pub terms: Vec<((usize, Vec<i64>), i64)>,
}

impl CocycleValue {
    pub fn term_map(&self) -> Terms {
        self.terms.iter().cloned().collect()
    }

    pub fn is_positive(&self) -> bool {
        self.signs.iter().all(|s| *s > 0)
    }
}

/// Sum of two coefficient maps with zero entries removed.
pub fn add_terms(a: &Terms, b: &Terms) -> Terms {
    let mut out = a.clone();
    for (k, c) in b {
        *out.entry(k.clone()).or_insert(0) += c;
    }
    out.retain(|_, c| *c != 0);
    out
}

/// Kind of a generated annulus transversal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Inward,
    Outward,
    InAndOut,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GeneratedPath {
    pub kind: PathKind,
    pub path: Transversal,
    /// Vertex indices that lie in plaques (valid split points).
    pub split_vertices: Vec<usize>,
}

fn polar_annulus(mesh: &SurfaceMesh) -> Result<(f64, f64), LaminationError> {
    match mesh.domain() {
        Some(Domain::Annulus { r0, r1, options, .. }) if options.chart == AnnulusChart::Polar => Ok((*r0, *r1)),
        _ => Err(LaminationError::WrongDomain("polar annulus")),
    }
}

impl PlaqueDecomposition {
    /// Largest radius touched by the stretch set on a polar annulus.
    pub fn band_outer_radius(&self, mesh: &SurfaceMesh) -> Result<f64, LaminationError> {
        polar_annulus(mesh)?;
        Ok(self
            .bands
            .iter()
            .flat_map(|b| b.triangles.iter())
            .flat_map(|&t| mesh.triangles()[t])
            .map(|v| mesh.vertices()[v][0])
            .fold(f64::NEG_INFINITY, f64::max))
    }

    /// Seeded random transversals on a polar annulus: straight chart legs
    /// between the outer plaque and the inner boundary, monotone in `r`.
    pub fn annulus_transversals(
        &self,
        mesh: &SurfaceMesh,
        count: usize,
        seed: u64,
    ) -> Result<Vec<GeneratedPath>, LaminationError> {
        let (r0, r1) = polar_annulus(mesh)?;
        let rb = self.band_outer_radius(mesh)?;
        if !(rb < r1) {
            return Err(LaminationError::WrongDomain("annulus with an outer plaque"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gap = r1 - rb;
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let outer = |rng: &mut ChaCha8Rng| -> (f64, f64) {
                let r = rb + gap * rng.random_range(0.3..0.95);
                let mid = rb + (r - rb) * rng.random_range(0.3..0.9);
                (r, mid)
            };
            // legs stay within 45 degrees of radial: the discrete band edge is
            // a sawtooth, and shallow legs would leave and re-enter the band
            let th = |rng: &mut ChaCha8Rng, base: f64, ra: f64, rb: f64| {
                base + rng.random_range(-1.0..1.0) * (ra - rb).abs() / ra.max(rb)
            };
            let kind = match i % 3 {
                0 => PathKind::Inward,
                1 => PathKind::Outward,
                _ => PathKind::InAndOut,
            };
            let t0 = rng.random_range(-PI..3.0 * PI);
            let (ra, ma) = outer(&mut rng);
            let t1 = th(&mut rng, t0, ra, ma);
            let t2 = th(&mut rng, t1, ma, r0);
            let leg_in = vec![[ra, t0], [ma, t1], [r0, t2]];
            let (points, split_vertices) = match kind {
                PathKind::Inward => (leg_in, vec![1]),
                PathKind::Outward => {
                    let mut p = leg_in;
                    p.reverse();
                    (p, vec![1])
                }
                PathKind::InAndOut => {
                    let (rc, mc) = outer(&mut rng);
                    let t3 = th(&mut rng, t2, r0, mc);
                    let t4 = th(&mut rng, t3, mc, rc);
                    let mut p = leg_in;
                    p.push([mc, t3]);
                    p.push([rc, t4]);
                    (p, vec![1, 2, 3])
                }
            };
            out.push(GeneratedPath {
                kind,
                path: Transversal::new(format!("t{i}"), points),
                split_vertices,
            });
        }
        Ok(out)
    }
}

/// Outcome of the cocycle axiom checks over a family of transversals.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomReport {
    pub paths: usize,
    pub seed: u64,
    /// Failures are listed by path id.
    pub rejected: Vec<String>,
    pub additivity_failures: Vec<String>,
    pub reversal_failures: Vec<String>,
    pub homotopy_failures: Vec<String>,
    pub positive_paths: usize,
    pub min_positive_value: f64,
    /// Non-negativity slack, `3 plaque_tol`.
    pub nonneg_tol: f64,
    pub nonneg_failures: Vec<String>,
    pub values: Vec<CocycleValue>,
}

impl AxiomReport {
    pub fn passed(&self) -> bool {
        self.rejected.is_empty()
            && self.additivity_failures.is_empty()
            && self.reversal_failures.is_empty()
            && self.homotopy_failures.is_empty()
            && self.nonneg_failures.is_empty()
    }
}

impl PlaqueDecomposition {
    /// Additivity at every plaque vertex, reversal, homotopy (angular jitter
    /// of all vertices, endpoints included) and non-negativity on positive
    /// paths. Comparisons are on coefficient maps, so they are exact.
    pub fn axiom_suite(&self, mesh: &SurfaceMesh, paths: &[GeneratedPath], seed: u64) -> AxiomReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut r = AxiomReport {
            paths: paths.len(),
            seed,
            rejected: Vec::new(),
            additivity_failures: Vec::new(),
            reversal_failures: Vec::new(),
            homotopy_failures: Vec::new(),
            positive_paths: 0,
            min_positive_value: f64::INFINITY,
            nonneg_tol: 3.0 * self.plaque_tol,
            nonneg_failures: Vec::new(),
            values: Vec::with_capacity(paths.len()),
        };
        for g in paths {
            let id = g.path.id.clone();
            let Ok(c) = self.cocycle(mesh, &g.path) else {
                r.rejected.push(id);
                continue;
            };
            let terms = c.term_map();
            for &k in &g.split_vertices {
                let (a, b) = g.path.split_at(k);
                match (self.cocycle(mesh, &a), self.cocycle(mesh, &b)) {
                    (Ok(ca), Ok(cb)) if add_terms(&ca.term_map(), &cb.term_map()) == terms => {}
                    _ => r.additivity_failures.push(format!("{id}@{k}")),
                }
            }
            match self.cocycle(mesh, &g.path.reversed()) {
                Ok(rev) if rev.term_map() == terms => {}
                _ => r.reversal_failures.push(id.clone()),
            }
            // small against every leg's radial extent, so legs stay steep
            let amp = 0.25
                * g.path
                    .points
                    .windows(2)
                    .map(|w| (w[1][0] - w[0][0]).abs() / w[0][0].max(w[1][0]))
                    .fold(f64::INFINITY, f64::min);
            let jitter: Vec<Point> = g
                .path
                .points
                .iter()
                .map(|p| [p[0], p[1] + rng.random_range(-1.0..1.0) * amp])
                .collect();
            match self.cocycle(mesh, &Transversal::new(format!("{id}h"), jitter)) {
                Ok(h) if h.term_map() == terms => {}
                _ => r.homotopy_failures.push(id.clone()),
            }
            if c.is_positive() {
                r.positive_paths += 1;
                r.min_positive_value = r.min_positive_value.min(c.value);
                if c.value < -r.nonneg_tol {
                    r.nonneg_failures.push(id);
                }
            }
            r.values.push(c);
        }
        r
    }
}

/// Closed leaf of a parallel family on a flat torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Leaf {
    /// Homology class `(m, n)`: the leaf runs along `m e1 + n e2`.
    pub class: [i64; 2],
    /// Transverse position in `[0, 1)`.
    pub offset: f64,
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }
}

/// Finite measured lamination by parallel closed geodesics on a flat torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasuredLamination {
    pub leaves: Vec<Leaf>,
    #[serde(default)]
    pub orientation: Orientation,
}

fn ext_gcd(a: i64, b: i64) -> (i64, i64, i64) {
    if b == 0 {
        (a.abs(), a.signum(), 0)
    } else {
        let (g, x, y) = ext_gcd(b, a.rem_euclid(b));
        (g, y, x - a.div_euclid(b) * y)
    }
}

/// `(a, b)` with `m b - n a = 1` for primitive `(m, n)`.
fn complement(class: [i64; 2]) -> Option<[i64; 2]> {
    let [m, n] = class;
    // x m + y n = g  =>  b = x, a = -y
    let (g, x, y) = ext_gcd(m, n);
    (g == 1).then_some([-y, x])
}

impl MeasuredLamination {
    pub fn parallel(class: [i64; 2], offsets: &[f64], weights: &[f64]) -> Result<Self, LaminationError> {
        if offsets.len() != weights.len() {
            return Err(LaminationError::Invalid("offsets and weights differ in length".into()));
        }
        let lam = Self {
            leaves: offsets
                .iter()
                .zip(weights)
                .map(|(o, w)| Leaf {
                    class,
                    offset: *o,
                    weight: *w,
                })
                .collect(),
            orientation: Orientation::Positive,
        };
        lam.validate()?;
        Ok(lam)
    }

    /// Leaves at `k / 3^depth` carrying the Cantor measure of `[k, k+1) / 3^depth`.
    pub fn cantor(class: [i64; 2], depth: u32) -> Result<Self, LaminationError> {
        let n = 3usize.pow(depth);
        let mut weights = vec![0.0; n];
        for k in 0..n {
            let (mut x, mut keep) = (k, true);
            for _ in 0..depth {
                if x % 3 == 1 {
                    keep = false;
                }
                x /= 3;
            }
            if keep {
                weights[k] = 0.5f64.powi(depth as i32);
            }
        }
        let offsets: Vec<f64> = (0..n).map(|k| k as f64 / n as f64).collect();
        Self::parallel(class, &offsets, &weights)
    }

    pub fn validate(&self) -> Result<(), LaminationError> {
        let bad = |s: String| Err(LaminationError::Invalid(s));
        let Some(first) = self.leaves.first() else {
            return bad("no leaves".into());
        };
        let class = first.class;
        if complement(class).is_none() {
            return bad(format!("class {class:?} is not primitive"));
        }
        let mut offsets = Vec::with_capacity(self.leaves.len());
        for l in &self.leaves {
            if l.class != class {
                return bad(format!("leaf classes {class:?} and {:?} are not parallel", l.class));
            }
            if !(l.offset >= 0.0 && l.offset < 1.0) {
                return bad(format!("offset {} outside [0, 1)", l.offset));
            }
            if !(l.weight >= 0.0) || !l.weight.is_finite() {
                return bad(format!("weight {} is not a finite nonnegative number", l.weight));
            }
            offsets.push(l.offset);
        }
        offsets.sort_by(f64::total_cmp);
        if offsets.windows(2).any(|w| w[0] == w[1]) {
            return bad("repeated offset: leaves must be disjoint".into());
        }
        Ok(())
    }

    pub fn class(&self) -> [i64; 2] {
        self.leaves[0].class
    }

    pub fn total_weight(&self) -> f64 {
        self.leaves.iter().map(|l| l.weight).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lamination serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, LaminationError> {
        let lam: Self = serde_json::from_str(s).map_err(|e| LaminationError::Invalid(e.to_string()))?;
        lam.validate()?;
        Ok(lam)
    }

    /// Periods `(-n W, m W)` of the staircase primitive, with orientation.
    pub fn periods(&self) -> [f64; 2] {
        let [m, n] = self.class();
        let w = self.orientation.sign() * self.total_weight();
        [-(n as f64) * w, m as f64 * w]
    }
}

fn torus_of(mesh: &SurfaceMesh) -> Result<([[f64; 2]; 2], usize), LaminationError> {
    match mesh.domain() {
        Some(Domain::Torus { basis, resolution }) => Ok((*basis, *resolution)),
        _ => Err(LaminationError::WrongDomain("torus")),
    }
}

/// Parameters in `(0, 1)` where `offset_coord + tau * slope` crosses `k / n`.
fn grid_breaks(start: f64, slope: i64, n: usize, out: &mut Vec<f64>) {
    if slope == 0 {
        return;
    }
    let nf = n as f64;
    let (a, b) = (start * nf, (start + slope as f64) * nf);
    let (lo, hi) = (a.min(b).ceil() as i64, a.max(b).floor() as i64);
    for k in lo..=hi {
        let tau = (k as f64 - a) / (b - a);
        if tau > 0.0 && tau < 1.0 {
            out.push(tau);
        }
    }
}

/// Ruelle-Sullivan current `sum_i w_i int_{leaf_i} form`, integrated exactly
/// for PL forms by splitting each leaf at the grid lines of the structured
/// torus.
pub fn ruelle_sullivan(mesh: &SurfaceMesh, lam: &MeasuredLamination, form: &PLOneForm) -> Result<f64, LaminationError> {
    lam.validate()?;
    let (basis, n) = torus_of(mesh)?;
    let [e1, e2] = basis;
    let [m, nn] = lam.class();
    let [a, b] = complement([m, nn]).expect("validated");
    let dir = [m as f64 * e1[0] + nn as f64 * e2[0], m as f64 * e1[1] + nn as f64 * e2[1]];
    let mut total = 0.0;
    for leaf in &lam.leaves {
        if leaf.weight == 0.0 {
            continue;
        }
        let (s1, s2) = (leaf.offset * a as f64, leaf.offset * b as f64);
        let mut taus = vec![0.0, 1.0];
        grid_breaks(s1, m, n, &mut taus);
        grid_breaks(s2, nn, n, &mut taus);
        grid_breaks(s1 - s2, m - nn, n, &mut taus);
        taus.sort_by(f64::total_cmp);
        taus.dedup();
        let mut integral = 0.0;
        for w in taus.windows(2) {
            let tau = 0.5 * (w[0] + w[1]);
            let (l1, l2) = (s1 + tau * m as f64, s2 + tau * nn as f64);
            let x = [l1 * e1[0] + l2 * e2[0], l1 * e1[1] + l2 * e2[1]];
            let (x0, _) = mesh.reduce(x)?;
            let (t, _) = mesh.locate(x0).ok_or(LaminationError::Outside(x))?;
            let c = form.covectors[t];
            integral += (c[0] * dir[0] + c[1] * dir[1]) * (w[1] - w[0]);
        }
        total += leaf.weight * integral;
    }
    Ok(lam.orientation.sign() * total)
}

/// Staircase primitive of the lamination's transverse measure: `v` jumps by
/// `w_i` across each lift of leaf `i`. Its periods are `(-n W, m W)` up to the
/// orientation of the lattice basis, so that `pairing(phi, dv)` equals the
/// current on closed forms.
pub fn rs_primitive(mesh: &SurfaceMesh, lam: &MeasuredLamination) -> Result<EquivariantField, LaminationError> {
    lam.validate()?;
    let (basis, _) = torus_of(mesh)?;
    let [e1, e2] = basis;
    let det = e1[0] * e2[1] - e1[1] * e2[0];
    let sign = lam.orientation.sign() * det.signum();
    let [m, n] = lam.class();
    let free: Vec<f64> = (0..mesh.n_classes())
        .map(|c| {
            let x = mesh.vertices()[mesh.class_rep(c)];
            let l1 = (x[0] * e2[1] - x[1] * e2[0]) / det;
            let l2 = (e1[0] * x[1] - e1[1] * x[0]) / det;
            let sigma = m as f64 * l2 - n as f64 * l1;
            sign * lam.leaves.iter().map(|l| l.weight * (sigma - l.offset).floor()).sum::<f64>()
        })
        .collect();
    let shift = det.signum();
    let p = lam.periods();
    let rho = Homomorphism::new(vec![shift * p[0], shift * p[1]]);
    // class representatives carry their own shift; remove it before rebuilding
    let free: Vec<f64> = free
        .iter()
        .enumerate()
        .map(|(c, f)| f - rho.eval(mesh.shift_of(mesh.class_rep(c))))
        .collect();
    Ok(EquivariantField::from_free(mesh, &free, rho))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentRow {
    pub form: String,
    pub pairing: f64,
    pub current: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurrentCheck {
    pub rows: Vec<CurrentRow>,
    pub max_error: f64,
    /// Largest `|T(df)|` over the exact test forms.
    pub closedness: f64,
    pub total_weight: f64,
}

/// Compare `pairing(phi, d rs_primitive)` with the current on the two basis
/// forms and on `exact` seeded exact forms `df` with `f` periodic.
pub fn current_check(
    mesh: &SurfaceMesh,
    lam: &MeasuredLamination,
    exact: usize,
    seed: u64,
) -> Result<CurrentCheck, LaminationError> {
    let v = rs_primitive(mesh, lam)?;
    let dv = differential_unchecked(mesh, &v);
    let mut forms: Vec<(String, PLOneForm, bool)> = Vec::new();
    let basis = crate::mesh::torus_basis_forms(mesh).ok_or(LaminationError::WrongDomain("torus"))?;
    for (i, f) in basis.into_iter().enumerate() {
        forms.push((format!("basis{}", i + 1), f, false));
    }
    for trial in 0..exact {
        let f = crate::limits::random_perturbation(mesh, seed, trial);
        forms.push((format!("exact{trial}"), differential_unchecked(mesh, &f), true));
    }
    let mut rows = Vec::new();
    let (mut max_error, mut closedness) = (0.0f64, 0.0f64);
    for (name, f, is_exact) in forms {
        let pairing = crate::duality::pairing(mesh, &f, &dv);
        let current = ruelle_sullivan(mesh, lam, &f)?;
        let error = (pairing - current).abs();
        max_error = max_error.max(error);
        if is_exact {
            closedness = closedness.max(current.abs());
        }
        rows.push(CurrentRow {
            form: name,
            pairing,
            current,
            error,
        });
    }
    Ok(CurrentCheck {
        rows,
        max_error,
        closedness,
        total_weight: lam.total_weight(),
    })
}

/// Samples `(s, g(s))` of `g` along `[0, 1)` in the transverse coordinate of
/// the staircase primitive; exact, no mesh involved.
pub fn staircase_trace(lam: &MeasuredLamination, samples: usize) -> Vec<(f64, f64)> {
    (0..=samples)
        .map(|k| {
            let s = k as f64 / samples as f64;
            let g = lam
                .leaves
                .iter()
                .map(|l| l.weight * (s - l.offset).floor())
                .sum::<f64>();
            (s, lam.orientation.sign() * g)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub jump: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvOptions {
    /// Increments above `atom_tol * TV` are atoms.
    pub atom_tol: f64,
    /// Smallest half width, in samples, of the window for the local density.
    pub window: usize,
    /// Half width as a fraction of the sample count; the larger of the two
    /// wins, so refining a trace does not shrink the window below the
    /// structure it is meant to average over.
    pub scale: f64,
    /// Increments denser than `ratio` times their window are singular.
    pub ratio: f64,
}

impl Default for BvOptions {
    fn default() -> Self {
        Self {
            atom_tol: 1e-2,
            window: 13,
            scale: 1e-4,
            ratio: 1.5,
        }
    }
}

/// Split of the variation of a sampled trace into atoms, a singular
/// continuous part and an absolutely continuous part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BvDecomposition {
    pub total_variation: f64,
    pub net_change: f64,
    pub atoms: Vec<Atom>,
    pub atom_mass: f64,
    pub cantor_mass: f64,
    pub ac_mass: f64,
}

impl BvDecomposition {
    pub fn cantor_fraction(&self) -> f64 {
        if self.total_variation > 0.0 {
            self.cantor_mass / self.total_variation
        } else {
            0.0
        }
    }
}

pub fn bv_decompose(samples: &[(f64, f64)], options: BvOptions) -> Result<BvDecomposition, LaminationError> {
    if samples.len() < 3 {
        return Err(LaminationError::Trace(format!("need at least 3 samples, got {}", samples.len())));
    }
    if samples.iter().any(|(s, g)| !s.is_finite() || !g.is_finite()) {
        return Err(LaminationError::Trace("non-finite sample".into()));
    }
    if samples.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(LaminationError::Trace("abscissae must increase strictly".into()));
    }
    if !(options.atom_tol > 0.0) || !(options.ratio > 0.0) || !(options.scale >= 0.0) {
        return Err(LaminationError::Trace("atom_tol and ratio must be positive, scale non-negative".into()));
    }
    let inc: Vec<f64> = samples.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let len: Vec<f64> = samples.windows(2).map(|w| w[1].0 - w[0].0).collect();
    let tv: f64 = inc.iter().map(|d| d.abs()).sum();
    let window = options.window.max((options.scale * inc.len() as f64).round() as usize);
    let is_atom: Vec<bool> = inc.iter().map(|d| d.abs() > options.atom_tol * tv).collect();
    // prefix sums of non-atom mass and length for the sliding window
    let (mut cum_mass, mut cum_len) = (vec![0.0; inc.len() + 1], vec![0.0; inc.len() + 1]);
    for k in 0..inc.len() {
        let keep = if is_atom[k] { 0.0 } else { 1.0 };
        cum_mass[k + 1] = cum_mass[k] + keep * inc[k].abs();
        cum_len[k + 1] = cum_len[k] + keep * len[k];
    }
    let mut atoms = Vec::new();
    let (mut atom_mass, mut cantor_mass, mut ac_mass) = (0.0, 0.0, 0.0);
    for k in 0..inc.len() {
        let d = inc[k].abs();
        if is_atom[k] {
            atoms.push(Atom {
                location: 0.5 * (samples[k].0 + samples[k + 1].0),
                jump: inc[k],
            });
            atom_mass += d;
            continue;
        }
        if d == 0.0 {
            continue;
        }
        let lo = k.saturating_sub(window);
        let hi = (k + window).min(inc.len() - 1) + 1;
        let (wm, wl) = (cum_mass[hi] - cum_mass[lo], cum_len[hi] - cum_len[lo]);
        if (d / len[k]) > options.ratio * (wm / wl) {
            cantor_mass += d;
        } else {
            ac_mass += d;
        }
    }
    Ok(BvDecomposition {
        total_variation: tv,
        net_change: samples[samples.len() - 1].1 - samples[0].1,
        atoms,
        atom_mass,
        cantor_mass,
        ac_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::duality::conjugate;
    use crate::limits::stretch_set;
    use crate::mesh::{build_annulus, build_torus, torus_basis_forms};
    use crate::penergy::{minimize, SolverConfig};

    fn annulus_setup() -> (SurfaceMesh, PlaqueDecomposition) {
        let mesh = build_annulus(0.9, 2.0, 32, 24).unwrap();
        let rho = Homomorphism::new(vec![2.0 * PI]);
        let cfg = SolverConfig::with_schedule(vec![2.0, 4.0, 8.0, 16.0, 32.0, 64.0]);
        let stage = minimize(&mesh, &rho, &cfg, None).unwrap().pop().unwrap();
        let c = conjugate(&mesh, &stage.field, 64.0).unwrap();
        let set = stretch_set(&mesh, &stage.field, 1.0 / 0.9, 0.1).unwrap();
        let dec = PlaqueDecomposition::new(&mesh, &c.dual.v, &set, None).unwrap();
        (mesh, dec)
    }

    #[test]
    fn echelon_reduction_is_canonical() {
        let l = echelon(vec![vec![2, 4], vec![3, 6], vec![0, 0]], 2);
        assert_eq!(l, vec![vec![1, 2]]);
        let mut a = vec![5, 3];
        reduce_mod(&mut a, &l);
        assert_eq!(a, vec![0, -7]);
        let full = echelon(vec![vec![2, 1], vec![1, 1]], 2);
        let (mut x, mut y) = (vec![7, -3], vec![0, 0]);
        reduce_mod(&mut x, &full);
        reduce_mod(&mut y, &full);
        assert_eq!(x, y);
        let mut z = vec![4];
        reduce_mod(&mut z, &echelon(vec![vec![-1]], 1));
        assert_eq!(z, vec![0]);
    }

    #[test]
    fn complement_solves_unimodular_equation() {
        for c in [[1, 0], [0, 1], [2, 3], [-3, 5], [5, -2], [7, 4], [0, -1]] {
            let [a, b] = complement(c).unwrap();
            assert_eq!(c[0] * b - c[1] * a, 1, "{c:?}");
        }
        assert!(complement([2, 4]).is_none());
        assert!(complement([0, 0]).is_none());
    }

    #[test]
    fn annulus_has_outer_and_boundary_plaques() {
        let (mesh, dec) = annulus_setup();
        assert_eq!(dec.plaques.len(), 2);
        assert_eq!(dec.bands.len(), 1);
        let kinds: Vec<_> = dec.plaques.iter().map(|p| p.kind).collect();
        assert!(kinds.contains(&PlaqueKind::Interior) && kinds.contains(&PlaqueKind::Boundary));
        // v decreases outward, so the band normal points to smaller r
        assert!(dec.bands[0].normal[0] < -0.99);
        assert!(dec.flagged().is_empty());
        assert!(dec.band_outer_radius(&mesh).unwrap() < 1.2);
    }

    #[test]
    fn cocycle_signs_and_invariances() {
        let (mesh, dec) = annulus_setup();
        let inner = dec.plaques.iter().position(|p| p.kind == PlaqueKind::Boundary).unwrap();
        let outer = 1 - inner;
        let jump = dec.plaques[inner].constant - dec.plaques[outer].constant;
        assert!(jump > 0.0);
        for g in dec.annulus_transversals(&mesh, 12, 7).unwrap() {
            let c = dec.cocycle(&mesh, &g.path).unwrap();
            let expect = match g.kind {
                PathKind::Inward => jump,
                PathKind::Outward => jump,
                PathKind::InAndOut => 2.0 * jump,
            };
            assert!((c.value - expect).abs() < 1e-10, "{:?} {} {}", g.kind, c.value, expect);
            let r = dec.cocycle(&mesh, &g.path.reversed()).unwrap();
            assert_eq!(r.term_map(), c.term_map());
            for &k in &g.split_vertices {
                let (a, b) = g.path.split_at(k);
                let (ca, cb) = (dec.cocycle(&mesh, &a).unwrap(), dec.cocycle(&mesh, &b).unwrap());
                assert_eq!(add_terms(&ca.term_map(), &cb.term_map()), c.term_map());
            }
        }
    }

    #[test]
    fn axiom_suite_passes_on_annulus() {
        let (mesh, dec) = annulus_setup();
        let paths = dec.annulus_transversals(&mesh, 30, 11).unwrap();
        let r = dec.axiom_suite(&mesh, &paths, 5);
        assert!(r.passed(), "{r:?}");
        assert_eq!(r.positive_paths, 10);
        assert!(r.min_positive_value > 0.0);
    }

    #[test]
    fn in_and_out_path_has_two_pieces() {
        let (mesh, dec) = annulus_setup();
        let p = Transversal::new("x", vec![[1.8, 0.3], [0.9, 1.0], [1.7, 2.0]]);
        let pieces = dec.good_subdivision(&mesh, &p).unwrap();
        assert_eq!(pieces.iter().map(|p| p.sign).collect::<Vec<_>>(), vec![1, -1]);
        assert!(pieces[0].end_arc > 0.0 && pieces[0].end_arc == pieces[1].start_arc);
    }

    #[test]
    fn tangential_and_inadmissible_paths_are_rejected() {
        let (mesh, dec) = annulus_setup();
        let along = Transversal::new("t", vec![[1.5, 0.0], [0.95, 0.0], [0.95, 1.0], [1.5, 1.0]]);
        assert!(matches!(dec.cocycle(&mesh, &along), Err(LaminationError::NonTransverse(_))));
        let ends_in_band = Transversal::new("e", vec![[1.5, 0.0], [0.95, 0.0]]);
        assert!(matches!(
            dec.cocycle(&mesh, &ends_in_band),
            Err(LaminationError::InadmissibleEndpoint { which: "end", .. })
        ));
        let outside = Transversal::new("o", vec![[1.5, 0.0], [2.5, 0.0]]);
        assert!(matches!(dec.cocycle(&mesh, &outside), Err(LaminationError::Outside(_))));
    }

    #[test]
    fn lamination_validation() {
        assert!(MeasuredLamination::parallel([2, 4], &[0.0], &[1.0]).is_err());
        assert!(MeasuredLamination::parallel([1, 0], &[0.2, 0.2], &[1.0, 1.0]).is_err());
        assert!(MeasuredLamination::parallel([1, 0], &[1.2], &[1.0]).is_err());
        assert!(MeasuredLamination::parallel([1, 0], &[0.2], &[-1.0]).is_err());
        let mixed = MeasuredLamination {
            leaves: vec![
                Leaf { class: [1, 0], offset: 0.1, weight: 1.0 },
                Leaf { class: [0, 1], offset: 0.2, weight: 1.0 },
            ],
            orientation: Orientation::Positive,
        };
        assert!(mixed.validate().is_err());
        let ok = MeasuredLamination::parallel([2, 1], &[0.1, 0.6], &[0.5, 2.0]).unwrap();
        let back = MeasuredLamination::from_json(&ok.to_json()).unwrap();
        assert_eq!(back, ok);
        assert!(MeasuredLamination::from_json(r#"{"leaves":[],"extra":1}"#).is_err());
    }

    #[test]
    fn current_of_basis_forms_on_unit_torus() {
        let mesh = build_torus([[1.0, 0.0], [0.0, 1.0]], 8).unwrap();
        let [dx, dy] = torus_basis_forms(&mesh).unwrap();
        // one leaf of class (1, 0) is the horizontal circle: int dx = 1, int dy = 0
        let lam = MeasuredLamination::parallel([1, 0], &[0.37], &[2.0]).unwrap();
        assert!((ruelle_sullivan(&mesh, &lam, &dx).unwrap() - 2.0).abs() < 1e-13);
        assert!(ruelle_sullivan(&mesh, &lam, &dy).unwrap().abs() < 1e-13);
        let lam = MeasuredLamination::parallel([2, 3], &[0.1], &[1.0]).unwrap();
        assert!((ruelle_sullivan(&mesh, &lam, &dx).unwrap() - 2.0).abs() < 1e-12);
        assert!((ruelle_sullivan(&mesh, &lam, &dy).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn primitive_pairs_like_the_current() {
        for basis in [[[1.0, 0.0], [0.5, 1.0]], [[0.0, 1.0], [1.0, 0.2]]] {
            let mesh = build_torus(basis, 9).unwrap();
            for (class, o) in [([1, 0], Orientation::Positive), ([3, -2], Orientation::Negative)] {
                let mut lam = MeasuredLamination::parallel(class, &[0.05, 0.41, 0.77], &[1.0, 0.25, 2.0]).unwrap();
                lam.orientation = o;
                let chk = current_check(&mesh, &lam, 4, 3).unwrap();
                assert!(chk.max_error < 1e-10, "{basis:?} {class:?} {:?}", chk.rows);
                assert!(chk.closedness < 1e-10);
                let v = rs_primitive(&mesh, &lam).unwrap();
                v.check(&mesh).unwrap();
            }
        }
    }

    #[test]
    fn leaf_pairs_with_poincare_dual_by_intersection() {
        let mesh = build_torus([[1.0, 0.0], [0.0, 1.0]], 6).unwrap();
        let [_, dual_of_first] = torus_basis_forms(&mesh).unwrap();
        let w = 0.7;
        let lam = MeasuredLamination::parallel([0, 1], &[0.25], &[w]).unwrap();
        // class (0,1) meets the first loop once
        assert!((ruelle_sullivan(&mesh, &lam, &dual_of_first).unwrap() - w).abs() < 1e-13);
        let double = MeasuredLamination::parallel([0, 1], &[0.25], &[2.0 * w]).unwrap();
        let f = crate::limits::random_perturbation(&mesh, 1, 0);
        let form = differential_unchecked(&mesh, &f).axpy(0.3, &dual_of_first);
        let (a, b) = (
            ruelle_sullivan(&mesh, &lam, &form).unwrap(),
            ruelle_sullivan(&mesh, &double, &form).unwrap(),
        );
        assert!((b - 2.0 * a).abs() < 1e-13);
    }

    #[test]
    fn three_leaves_have_unit_transverse_period() {
        let mesh = build_torus([[1.0, 0.0], [0.0, 1.0]], 10).unwrap();
        let lam = MeasuredLamination::parallel([1, 0], &[0.1, 0.45, 0.8], &[0.2, 0.3, 0.5]).unwrap();
        let v = rs_primitive(&mesh, &lam).unwrap();
        // leaves are horizontal; the vertical loop crosses each once
        assert!(v.rho.periods[0].abs() < 1e-15);
        assert!((v.rho.periods[1] - 1.0).abs() < 1e-15);
        let chk = current_check(&mesh, &lam, 0, 0).unwrap();
        assert!(chk.max_error < 1e-10);
    }

    #[test]
    fn monotone_path_value_is_endpoint_difference() {
        let (mesh, dec) = annulus_setup();
        let inward = Transversal::new("in", vec![[1.9, 0.4], [1.3, 2.0], [0.9, 5.5]]);
        let pieces = dec.good_subdivision(&mesh, &inward).unwrap();
        assert_eq!(pieces.len(), 1);
        let direct = dec.lifted_constant(&pieces[0].end) - dec.lifted_constant(&pieces[0].start);
        let c = dec.cocycle(&mesh, &inward).unwrap();
        assert!(c.is_positive());
        assert!((c.value - direct).abs() < 1e-14);
        let c2 = dec.cocycle(&mesh, &inward.reversed()).unwrap();
        assert!(!c2.is_positive());
        assert_eq!(c2.term_map(), c.term_map());
    }

    #[test]
    fn bv_step_is_one_atom() {
        let s: Vec<(f64, f64)> = (0..1000).map(|k| (k as f64, if k < 500 { 0.0 } else { 1.0 })).collect();
        let d = bv_decompose(&s, BvOptions::default()).unwrap();
        assert_eq!(d.atoms.len(), 1);
        assert!((d.atom_mass - 1.0).abs() < 1e-12 && d.cantor_mass == 0.0 && d.ac_mass == 0.0);
    }

    #[test]
    fn bv_linear_is_absolutely_continuous() {
        let s: Vec<(f64, f64)> = (0..=500).map(|k| (k as f64 / 500.0, 3.0 * k as f64 / 500.0)).collect();
        let d = bv_decompose(&s, BvOptions::default()).unwrap();
        assert!(d.atoms.is_empty());
        assert!((d.ac_mass - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bv_cantor_lamination_trace_is_singular() {
        let lam = MeasuredLamination::cantor([1, 0], 6).unwrap();
        assert!((lam.total_weight() - 1.0).abs() < 1e-12);
        let trace = staircase_trace(&lam, 3usize.pow(8));
        let d = bv_decompose(
            &trace,
            BvOptions {
                atom_tol: 1.0 / 32.0,
                ..BvOptions::default()
            },
        )
        .unwrap();
        assert!(d.atoms.is_empty());
        assert!(d.cantor_fraction() >= 0.95, "{d:?}");
    }

    #[test]
    fn bv_rejects_bad_input() {
        assert!(bv_decompose(&[(0.0, 0.0), (1.0, 1.0)], BvOptions::default()).is_err());
        assert!(bv_decompose(&[(0.0, 0.0), (0.0, 1.0), (1.0, 1.0)], BvOptions::default()).is_err());
        assert!(bv_decompose(&[(0.0, 0.0), (0.5, f64::NAN), (1.0, 1.0)], BvOptions::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn monotone_traces_conserve_variation(
                incs in proptest::collection::vec(0.0f64..1.0, 3..200),
                jumps in proptest::collection::vec((0usize..200, 0.0f64..10.0), 0..4),
            ) {
                let mut g = 0.0;
                let mut s = vec![(0.0, 0.0)];
                for (k, d) in incs.iter().enumerate() {
                    g += d;
                    for (at, j) in &jumps {
                        if *at == k {
                            g += j;
                        }
                    }
                    s.push(((k + 1) as f64, g));
                }
                let d = bv_decompose(&s, BvOptions::default()).unwrap();
                let parts = d.atom_mass + d.cantor_mass + d.ac_mass;
                prop_assert!((parts - d.net_change).abs() <= 1e-12 * (1.0 + d.net_change));
            }

            #[test]
            fn closed_leaf_current_kills_exact_forms(m in -3i64..4, n in -3i64..4, off in 0.0f64..1.0, seed in 0u64..1000) {
                prop_assume!(complement([m, n]).is_some());
                let mesh = build_torus([[1.0, 0.1], [0.3, 0.8]], 6).unwrap();
                let lam = MeasuredLamination::parallel([m, n], &[off], &[1.5]).unwrap();
                let f = crate::limits::random_perturbation(&mesh, seed, 0);
                let df = differential_unchecked(&mesh, &f);
                prop_assert!(ruelle_sullivan(&mesh, &lam, &df).unwrap().abs() < 1e-10);
            }
        }
    }
}
