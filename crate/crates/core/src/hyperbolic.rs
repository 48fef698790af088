//! Hyperbolic plane at the level of points and radial profiles.
//!
//! Distances use the Poincare disc with `d(0, k) = atanh(k)`, i.e. the metric
//! `|dz| / (1 - |z|^2)` of curvature -4. Every formula in this module follows
//! that convention.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HyperbolicError {
    #[error("point {0} is not inside the open unit disc")]
    OutsideDisc(Complex64),
    #[error("cone profile needs p > n >= 2 (got n = {n}, p = {p})")]
    Exponent { n: u32, p: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("cone data precondition fails at {location}: u - c = {margin:e}")]
    Precondition { location: &'static str, margin: f64 },
    #[error("no sample at the center")]
    MissingCenter,
    #[error("ring at radius {radius} has {count} samples, need at least 8")]
    SparseRing { radius: f64, count: usize },
    #[error("need at least two leaf samples, got {0}")]
    TooFewLeaves(usize),
    #[error("leaves {0} and {1} meet at one point with different normals")]
    CrossingLeaves(usize, usize),
}

fn check_disc(z: Complex64) -> Result<(), HyperbolicError> {
    if z.norm() < 1.0 && z.re.is_finite() && z.im.is_finite() {
        Ok(())
    } else {
        Err(HyperbolicError::OutsideDisc(z))
    }
}

/// `atanh(|z - w| / |1 - conj(z) w|)`.
pub fn disc_distance(z: Complex64, w: Complex64) -> Result<f64, HyperbolicError> {
    check_disc(z)?;
    check_disc(w)?;
    let num = (z - w).norm();
    let den = (Complex64::new(1.0, 0.0) - z.conj() * w).norm();
    Ok((num / den).min(1.0).atanh())
}

/// Disc automorphism sending `a` to the origin.
pub fn mobius_to_origin(a: Complex64, z: Complex64) -> Complex64 {
    (z - a) / (Complex64::new(1.0, 0.0) - a.conj() * z)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeProfile {
    pub n: u32,
    pub p: f64,
    pub t: Vec<f64>,
    pub f: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Exponent `(n - 1)/(p - 1)` of the slope.
    pub beta: f64,
    pub a_p: f64,
    pub b_p: f64,
}

/// `f_p'(t) = sinh(t)^(-beta)`.
pub fn cone_slope(t: f64, beta: f64) -> f64 {
    t.sinh().powf(-beta)
}

fn sinc_h(s: f64) -> f64 {
    if s < 1e-4 {
        1.0 - s * s / 6.0
    } else {
        s / s.sinh()
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if b <= a {
        return 0.0;
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 40)
}

/// `int_0^t sinh(s)^(-beta) ds` through `s = sigma^(1/(1-beta))`, which turns
/// the integrand into the bounded `(s/sinh s)^beta / (1 - beta)`.
fn cone_integral(a: f64, b: f64, beta: f64, tol: f64) -> f64 {
    let e = 1.0 - beta;
    let g = move |sigma: f64| sinc_h(sigma.max(0.0).powf(1.0 / e)).powf(beta) / e;
    adaptive_simpson(&g, a.powf(e), b.powf(e), tol)
}

pub fn cone_profile(n: u32, p: f64, t_max: f64, steps: usize) -> Result<ConeProfile, HyperbolicError> {
    if n < 2 || !(p > n as f64) || !p.is_finite() {
        return Err(HyperbolicError::Exponent { n, p });
    }
    if !(t_max > 0.0) || !t_max.is_finite() || steps < 2 {
        return Err(HyperbolicError::Grid(format!("t_max = {t_max}, steps = {steps}")));
    }
    let beta = (n as f64 - 1.0) / (p - 1.0);
    let e = 1.0 - beta;
    let t: Vec<f64> = (1..=steps).map(|k| t_max * k as f64 / steps as f64).collect();
    let pieces = par::map_range(steps, |k| {
        let a = if k == 0 { 0.0 } else { t[k - 1] };
        cone_integral(a, t[k], beta, 1e-14)
    });
    let mut f = Vec::with_capacity(steps);
    let mut acc = 0.0;
    for piece in pieces {
        acc += piece;
        f.push(acc);
    }
    let a_p = sinc_h(t_max).powf(beta) / e;
    let b_p = 1.0 / e;
    let lower = t.iter().map(|s| a_p * s.powf(e)).collect();
    let upper = t.iter().map(|s| b_p * s.powf(e)).collect();
    Ok(ConeProfile {
        n,
        p,
        t,
        f,
        lower,
        upper,
        beta,
        a_p,
        b_p,
    })
}

impl ConeProfile {
    pub fn sandwich_holds(&self, tol: f64) -> bool {
        self.f
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(f, (lo, hi))| *f >= lo - tol && *f <= hi + tol)
    }

    /// `max |f_p(t) - t|` over nodes with `t <= t_cap`.
    pub fn sup_deviation(&self, t_cap: f64) -> f64 {
        self.t
            .iter()
            .zip(&self.f)
            .filter(|(t, _)| **t <= t_cap + 1e-12)
            .map(|(t, f)| (f - t).abs())
            .fold(0.0, f64::max)
    }

    /// Profile value at `t` by quadrature from the origin.
    pub fn value_at(&self, t: f64) -> f64 {
        cone_integral(0.0, t, self.beta, 1e-14)
    }

    /// Radial Euler-Lagrange residual: finite differences on the grid of the
    /// flux `sinh(t)^(n-1) |f'|^(p-2) f'`, with `f'` recovered from window
    /// averages of the profile (Richardson-extrapolated central differences).
    pub fn radial_residual(&self) -> f64 {
        let flux: Vec<f64> = self
            .t
            .iter()
            .map(|&t| {
                let slope = self.window_slope(t);
                t.sinh().powi(self.n as i32 - 1) * slope.abs().powf(self.p - 2.0) * slope
            })
            .collect();
        let mut worst: f64 = 0.0;
        for k in 1..flux.len() - 1 {
            let d = (flux[k + 1] - flux[k - 1]) / (self.t[k + 1] - self.t[k - 1]);
            worst = worst.max(d.abs());
        }
        worst
    }

    fn window_slope(&self, t: f64) -> f64 {
        let avg = |h: f64| gauss_legendre(&|s| cone_slope(s, self.beta), t - h, t + h) / (2.0 * h);
        let h = 0.02 * t;
        (4.0 * avg(0.5 * h) - avg(h)) / 3.0
    }

    pub fn strictly_increasing(&self) -> bool {
        self.f.windows(2).all(|w| w[1] > w[0])
    }
}

fn gauss_legendre(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, 0.538_469_310_105_683_1, -0.538_469_310_105_683_1, 0.906_179_845_938_664, -0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
    let (c, r) = (0.5 * (a + b), 0.5 * (b - a));
    let mut sum = 0.0;
    for panel in 0..4 {
        let lo = c - r + 0.5 * r * panel as f64;
        let pc = lo + 0.25 * r;
        for (x, w) in X.iter().zip(&W) {
            sum += w * f(pc + 0.25 * r * x);
        }
    }
    sum * 0.25 * r
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Geometry {
    Euclidean,
    PoincareDisc,
}

impl Geometry {
    pub fn distance(self, a: [f64; 2], b: [f64; 2]) -> Result<f64, HyperbolicError> {
        match self {
            Geometry::Euclidean => Ok((a[0] - b[0]).hypot(a[1] - b[1])),
            Geometry::PoincareDisc => disc_distance(Complex64::new(a[0], a[1]), Complex64::new(b[0], b[1])),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Largest `u - c` over interior samples.
    pub worst_margin: f64,
    /// Indices of interior samples with `u - c > tol`.
    pub violations: Vec<usize>,
    pub interior: usize,
    pub boundary: usize,
}

/// Checks `u <= A + B d(x, x0)` inside the ball of radius `r`, given that it
/// holds on the boundary sphere and at the center.
#[allow(clippy::too_many_arguments)]
pub fn cone_comparison_check(
    samples: &[([f64; 2], f64)],
    center: [f64; 2],
    a: f64,
    b: f64,
    r: f64,
    tol: f64,
    geometry: Geometry,
) -> Result<ComparisonReport, HyperbolicError> {
    let shell = 1e-9 * r.max(1.0);
    let mut worst = f64::NEG_INFINITY;
    let mut violations = Vec::new();
    let (mut interior, mut boundary) = (0, 0);
    let mut has_center = false;
    for (i, (x, u)) in samples.iter().enumerate() {
        let d = geometry.distance(*x, center)?;
        let margin = u - (a + b * d);
        if d <= 1e-12 {
            has_center = true;
            if margin > tol {
                return Err(HyperbolicError::Precondition { location: "center", margin });
            }
        } else if (d - r).abs() <= shell {
            boundary += 1;
            if margin > tol {
                return Err(HyperbolicError::Precondition { location: "boundary", margin });
            }
        } else if d < r {
            interior += 1;
            worst = worst.max(margin);
            if margin > tol {
                violations.push(i);
            }
        }
    }
    if !has_center {
        return Err(HyperbolicError::MissingCenter);
    }
    Ok(ComparisonReport {
        worst_margin: worst,
        violations,
        interior,
        boundary,
    })
}

/// Per radius, `max (u(x) - u(x0)) / r` over samples with `|d(x, x0) - r| <= ring_width`.
pub fn cone_ratio_trace(
    samples: &[([f64; 2], f64)],
    center: [f64; 2],
    radii: &[f64],
    ring_width: f64,
    geometry: Geometry,
) -> Result<Vec<f64>, HyperbolicError> {
    if radii.windows(2).any(|w| !(w[1] > w[0])) || radii.first().is_some_and(|r| !(*r > 0.0)) {
        return Err(HyperbolicError::Grid("radii must be positive and increasing".into()));
    }
    let dist: Vec<f64> = samples
        .iter()
        .map(|(x, _)| geometry.distance(*x, center))
        .collect::<Result<_, _>>()?;
    let (ci, cd) = dist
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, d)| (i, *d))
        .ok_or(HyperbolicError::MissingCenter)?;
    if cd > 1e-12 {
        return Err(HyperbolicError::MissingCenter);
    }
    let u0 = samples[ci].1;
    radii
        .iter()
        .map(|&r| {
            let ring: Vec<f64> = samples
                .iter()
                .zip(&dist)
                .filter(|(_, d)| (**d - r).abs() <= ring_width)
                .map(|((_, u), _)| (u - u0) / r)
                .collect();
            if ring.len() < 8 {
                Err(HyperbolicError::SparseRing { radius: r, count: ring.len() })
            } else {
                Ok(ring.into_iter().fold(f64::NEG_INFINITY, f64::max))
            }
        })
        .collect()
}

pub fn is_nondecreasing(trace: &[f64], rel_slack: f64) -> bool {
    trace
        .windows(2)
        .all(|w| w[1] >= w[0] - rel_slack * w[0].abs().max(w[1].abs()))
}

/// A leaf crossing the transversal: a point on a geodesic through the origin
/// and the angle of the leaf's unit normal there.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafSample {
    pub point: Complex64,
    pub angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalAngleReport {
    /// `max |kappa - kappa'| / d` over pairs.
    pub max_ratio: f64,
    pub worst_pair: Option<(usize, usize)>,
    /// Pairs above 90% of the per-pair bound.
    pub flagged: Vec<(usize, usize)>,
    /// Pairs above the bound.
    pub exceeded: Vec<(usize, usize)>,
}

impl NormalAngleReport {
    pub fn holds(&self) -> bool {
        self.exceeded.is_empty()
    }
}

/// Difference of normal lines, wrapped into `(-pi/2, pi/2]`.
pub fn normal_difference(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    if d > 0.5 * PI {
        d - PI
    } else {
        d
    }
}

/// Bound on the normal-angle change between leaves at distance `d`:
/// `|1 - e^{i dk}| <= 2k'/(1-k')` with `k' = tanh d`.
pub fn angle_bound(d: f64) -> f64 {
    let k = d.tanh();
    if k >= 0.5 {
        PI
    } else {
        2.0 * (k / (1.0 - k)).min(1.0).asin()
    }
}

pub fn normal_angle_bound(leaves: &[LeafSample]) -> Result<NormalAngleReport, HyperbolicError> {
    if leaves.len() < 2 {
        return Err(HyperbolicError::TooFewLeaves(leaves.len()));
    }
    let mut report = NormalAngleReport {
        max_ratio: 0.0,
        worst_pair: None,
        flagged: Vec::new(),
        exceeded: Vec::new(),
    };
    for i in 0..leaves.len() {
        for j in i + 1..leaves.len() {
            let d = disc_distance(leaves[i].point, leaves[j].point)?;
            let dk = normal_difference(leaves[i].angle, leaves[j].angle).abs();
            if d <= 1e-14 {
                if dk > 1e-12 {
                    return Err(HyperbolicError::CrossingLeaves(i, j));
                }
                continue;
            }
            let ratio = dk / d;
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst_pair = Some((i, j));
            }
            let bound = angle_bound(d);
            if dk > bound * (1.0 + 1e-12) {
                report.exceeded.push((i, j));
            } else if dk > 0.9 * bound {
                report.flagged.push((i, j));
            }
        }
    }
    Ok(report)
}

/// Complete geodesic of the disc given by its ideal endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdealGeodesic {
    pub a: f64,
    pub b: f64,
}

impl IdealGeodesic {
    /// Whether two geodesics share no point of the open disc: their endpoint
    /// pairs do not interleave on the circle.
    pub fn disjoint_from(&self, other: &IdealGeodesic) -> bool {
        let norm = |x: f64| x.rem_euclid(2.0 * PI);
        let (lo, hi) = {
            let (x, y) = (norm(self.a), norm(self.b));
            if x < y { (x, y) } else { (y, x) }
        };
        let inside = |x: f64| {
            let x = norm(x);
            x > lo && x < hi
        };
        inside(other.a) == inside(other.b)
    }

    /// Crossing with the real diameter and the angle of the normal pointing
    /// away from the circle's center (or `+pi/2` rotation of the direction for
    /// a diameter). `None` if the geodesic misses the real axis.
    pub fn cross_real_axis(&self) -> Option<LeafSample> {
        let half = 0.5 * (self.b - self.a);
        let mid = 0.5 * (self.a + self.b);
        if (half.cos()).abs() < 1e-12 {
            let dir = Complex64::from_polar(1.0, self.a);
            if dir.im.abs() < 1e-14 {
                return None;
            }
            return Some(LeafSample {
                point: Complex64::new(0.0, 0.0),
                angle: self.a + 0.5 * PI,
            });
        }
        let c = Complex64::from_polar(1.0 / half.cos(), mid);
        let r = half.tan().abs();
        // |x - c|^2 = r^2 for real x
        let disc = r * r - c.im * c.im;
        if disc < 0.0 {
            return None;
        }
        let root = disc.sqrt();
        [c.re - root, c.re + root]
            .into_iter()
            .find(|x| x.abs() < 1.0)
            .map(|x| {
                let n = Complex64::new(x, 0.0) - c;
                LeafSample {
                    point: Complex64::new(x, 0.0),
                    angle: n.arg(),
                }
            })
    }
}

/// Nested (hence pairwise disjoint) geodesics crossing the positive real axis:
/// leaf `j` has endpoints `e^{i u_j}` and `e^{-i w_j}` with `u_j`, `w_j`
/// strictly decreasing.
pub fn nested_family(params: &[f64], tilt: f64) -> Vec<IdealGeodesic> {
    params
        .iter()
        .map(|&s| {
            let base = (1.0 - s) * 0.5 * PI;
            IdealGeodesic {
                a: base * (1.0 + tilt * s),
                b: -base * (1.0 - tilt * s),
            }
        })
        .collect()
}
