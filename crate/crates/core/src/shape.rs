//! Convex bodies as discretized support functions and as polygons.
//!
//! A body is described either by its support values `h_i = h(θ_i)` on the
//! uniform grid `θ_i = 2πi/n`, or by the counterclockwise vertex list of the
//! polygon `∩_i {x : ⟨x, u(θ_i)⟩ ≤ h_i}`. Discrete convexity of the support
//! vector is the condition that every supporting line actually touches the
//! polygon, i.e. every edge length
//!
//! ```text
//! ℓ_i = (h_{i-1} + h_{i+1} - 2 h_i cos Δ) / sin Δ,   Δ = 2π/n
//! ```
//!
//! is non-negative.

use crate::error::{Error, Result};
use crate::geom::{orient, point_segment_distance, signed_area, Vec2};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative tolerance on the discrete convexity inequality.
pub const CONVEXITY_TOL: f64 = 1e-12;

/// Vertices spanning a triangle of relative area below this are merged.
pub const MERGE_AREA_TOL: f64 = 1e-14;

/// Upper bound on full repair sweeps in [`project_to_convex`].
pub const MAX_REPAIR_SWEEPS: usize = 10_000;

/// Support values of a convex body on a uniform angle grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportVector {
    h: Vec<f64>,
}

impl SupportVector {
    /// Validates positivity and discrete convexity.
    pub fn new(h: Vec<f64>) -> Result<Self> {
        let n = h.len();
        if n < 3 {
            return Err(Error::InvalidInput(format!("support vector needs at least 3 angles, got {n}")));
        }
        if let Some(i) = h.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidInput(format!("support value h[{i}] = {} is not positive", h[i])));
        }
        if let Some((index, defect)) = worst_violation(&h) {
            let scale = max_abs(&h);
            if defect > CONVEXITY_TOL * scale {
                return Err(Error::NotConvex { index, defect });
            }
        }
        Ok(Self { h })
    }

    /// Samples `f` at the grid angles.
    pub fn from_fn(n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new((0..n).map(|i| f(grid_angle(i, n))).collect())
    }

    /// Support vector of a disc of radius `r` centred at the origin.
    pub fn disc(n: usize, r: f64) -> Result<Self> {
        Self::new(vec![r; n])
    }

    pub fn n(&self) -> usize {
        self.h.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.h
    }

    pub fn into_values(self) -> Vec<f64> {
        self.h
    }

    pub fn angle(&self, i: usize) -> f64 {
        grid_angle(i, self.n())
    }

    /// Edge lengths `ℓ_i` of the induced polygon (one per support line).
    pub fn edge_lengths(&self) -> Vec<f64> {
        let n = self.n();
        let d = 2.0 * PI / n as f64;
        let (s, c) = d.sin_cos();
        (0..n)
            .map(|i| (self.h[(i + n - 1) % n] + self.h[(i + 1) % n] - 2.0 * self.h[i] * c) / s)
            .collect()
    }
}

#[inline]
pub fn grid_angle(i: usize, n: usize) -> f64 {
    2.0 * PI * i as f64 / n as f64
}

fn max_abs(h: &[f64]) -> f64 {
    h.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// Largest positive convexity defect `2 h_i cos Δ - h_{i-1} - h_{i+1}`.
fn worst_violation(h: &[f64]) -> Option<(usize, f64)> {
    let n = h.len();
    let c = (2.0 * PI / n as f64).cos();
    let mut worst: Option<(usize, f64)> = None;
    for i in 0..n {
        let defect = 2.0 * h[i] * c - h[(i + n - 1) % n] - h[(i + 1) % n];
        if defect > 0.0 && worst.is_none_or(|(_, w)| defect > w) {
            worst = Some((i, defect));
        }
    }
    worst
}

/// Result of [`project_to_convex_with_repair`].
#[derive(Clone, Debug)]
pub struct Projection {
    pub support: SupportVector,
    /// `max_i |h_raw,i - h_i|`, in the units of the input.
    pub repair_norm: f64,
}

/// Repairs a raw support vector into the discrete convexity cone.
///
/// Cyclic local repair: every value exceeding
/// `(h_{i-1} + h_{i+1}) / (2 cos Δ)` is lowered to that bound, sweeping until
/// no violation above the tolerance remains. Values only ever decrease, so a
/// valid vector is returned unchanged.
pub fn project_to_convex(h_raw: &[f64]) -> Result<SupportVector> {
    project_to_convex_with_repair(h_raw).map(|p| p.support)
}

pub fn project_to_convex_with_repair(h_raw: &[f64]) -> Result<Projection> {
    let n = h_raw.len();
    if n < 8 {
        return Err(Error::InvalidInput(format!("projection needs n >= 8, got {n}")));
    }
    if h_raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite support value".into()));
    }
    if !h_raw.iter().any(|&v| v > 0.0) {
        return Err(Error::InvalidInput("no positive support value".into()));
    }

    let mut h = h_raw.to_vec();
    let accept = |h: &[f64], factor: f64| match worst_violation(h) {
        None => true,
        Some((_, d)) => d <= factor * CONVEXITY_TOL * max_abs(h),
    };

    if !accept(&h, 1.0) {
        let two_c = 2.0 * (2.0 * PI / n as f64).cos();
        let mut converged = false;
        for _ in 0..MAX_REPAIR_SWEEPS {
            for i in 0..n {
                let bound = (h[(i + n - 1) % n] + h[(i + 1) % n]) / two_c;
                if h[i] > bound {
                    h[i] = bound;
                }
            }
            // Stricter than the acceptance test so a second call sees a valid vector.
            if accept(&h, 0.25) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::RepairFailed(format!("no fixed point within {MAX_REPAIR_SWEEPS} sweeps")));
        }
    }

    if let Some(i) = h.iter().position(|&v| v <= 0.0) {
        return Err(Error::RepairFailed(format!("repaired support value h[{i}] = {} is not positive", h[i])));
    }
    let repair_norm = h.iter().zip(h_raw).fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
    Ok(Projection { support: SupportVector { h }, repair_norm })
}

/// Convex polygon with counterclockwise vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
    #[serde(default)]
    keep_collinear: bool,
}

impl ConvexPolygon {
    /// Strictly convex polygon; consecutive collinear vertices are rejected.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self> {
        Self::build(vertices, false)
    }

    /// Polygon that may contain flat (collinear) vertices.
    pub fn with_collinear(vertices: Vec<Vec2>) -> Result<Self> {
        Self::build(vertices, true)
    }

    fn build(vertices: Vec<Vec2>, keep_collinear: bool) -> Result<Self> {
        let m = vertices.len();
        if m < 3 {
            return Err(Error::DegeneratePolygon(format!("{m} vertices")));
        }
        if vertices.iter().any(|v| !(v.x.is_finite() && v.y.is_finite())) {
            return Err(Error::DegeneratePolygon("non-finite vertex".into()));
        }
        if signed_area(&vertices) <= 0.0 {
            return Err(Error::DegeneratePolygon("vertices are not counterclockwise".into()));
        }
        for i in 0..m {
            let a = vertices[(i + m - 1) % m];
            let b = vertices[i];
            let c = vertices[(i + 1) % m];
            let o = orient(a, b, c);
            if o < 0.0 || (o == 0.0 && !keep_collinear) {
                return Err(Error::DegeneratePolygon(format!("vertex {i} is not a convex corner")));
            }
        }
        let poly = Self { vertices, keep_collinear };
        // Total turning of a simple convex curve is exactly one revolution.
        let turn: f64 = poly.exterior_angles().iter().sum();
        if (turn - 2.0 * PI).abs() > 1e-6 {
            return Err(Error::DegeneratePolygon(format!("boundary winds {turn} rad, not 2π")));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn keep_collinear(&self) -> bool {
        self.keep_collinear
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vec2 {
        self.vertices[i % self.vertices.len()]
    }

    /// Edge `k` runs from vertex `k` to vertex `k + 1`.
    #[inline]
    pub fn edge(&self, k: usize) -> (Vec2, Vec2) {
        (self.vertex(k), self.vertex(k + 1))
    }

    /// Outward unit normal of edge `k`.
    pub fn outward_normal(&self, k: usize) -> Vec2 {
        let (a, b) = self.edge(k);
        let t = (b - a).normalized();
        Vec2::new(t.y, -t.x)
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        (0..self.len()).map(|k| self.vertex(k).dist(self.vertex(k + 1))).sum()
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d2 = 0.0_f64;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d2 = d2.max((v[i] - v[j]).norm2());
            }
        }
        d2.sqrt()
    }

    pub fn centroid(&self) -> Vec2 {
        let m = self.len();
        let mut cx = 0.0;
        let mut cy = 0.0;
        let mut a2 = 0.0;
        for i in 0..m {
            let p = self.vertex(i);
            let q = self.vertex(i + 1);
            let w = p.cross(q);
            a2 += w;
            cx += (p.x + q.x) * w;
            cy += (p.y + q.y) * w;
        }
        Vec2::new(cx / (3.0 * a2), cy / (3.0 * a2))
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = Vec2::new(lo.x.min(v.x), lo.y.min(v.y));
            hi = Vec2::new(hi.x.max(v.x), hi.y.max(v.y));
        }
        (lo, hi)
    }

    /// Signed distance to the boundary: positive inside, negative outside.
    ///
    /// For interior points this is exact (the nearest boundary point is the
    /// foot on the closest edge line); outside it is the Euclidean distance
    /// negated.
    pub fn signed_distance(&self, x: Vec2) -> f64 {
        let m = self.len();
        let mut inner = f64::INFINITY;
        for k in 0..m {
            let (a, _) = self.edge(k);
            inner = inner.min((a - x).dot(self.outward_normal(k)));
        }
        if inner >= 0.0 {
            inner
        } else {
            -(0..m)
                .map(|k| {
                    let (a, b) = self.edge(k);
                    point_segment_distance(x, a, b)
                })
                .fold(f64::INFINITY, f64::min)
        }
    }

    pub fn contains(&self, x: Vec2) -> bool {
        self.signed_distance(x) > 0.0
    }

    /// Support function value in direction `u` (need not be unit length).
    pub fn support(&self, u: Vec2) -> f64 {
        self.vertices.iter().map(|v| v.dot(u)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Boundary point at arclength `s` from vertex 0 (wrapped), with the
    /// edge it lies on and the local parameter along that edge.
    pub fn point_at_arclength(&self, s: f64) -> (Vec2, usize, f64) {
        let per = self.perimeter();
        let mut s = s.rem_euclid(per);
        for k in 0..self.len() {
            let (a, b) = self.edge(k);
            let len = a.dist(b);
            if s <= len || k + 1 == self.len() {
                let t = if len > 0.0 { (s / len).min(1.0) } else { 0.0 };
                return (a.lerp(b, t), k, t);
            }
            s -= len;
        }
        unreachable!("polygon has at least three edges")
    }

    /// Exterior (turning) angle at every vertex, in `[0, π)`.
    pub fn exterior_angles(&self) -> Vec<f64> {
        let m = self.len();
        (0..m)
            .map(|i| {
                let e0 = self.vertex(i) - self.vertex(i + m - 1);
                let e1 = self.vertex(i + 1) - self.vertex(i);
                e0.cross(e1).atan2(e0.dot(e1))
            })
            .collect()
    }
}

/// Builds the polygon cut out by the supporting lines of `sv`.
///
/// Vertex `i` is the intersection of lines `i` and `i + 1`. Vertices produced
/// by concurrent lines (zero-length edges) are merged.
pub fn polygon_from_support(sv: &SupportVector) -> Result<ConvexPolygon> {
    let n = sv.n();
    let h = sv.values();
    if let Some((index, defect)) = worst_violation(h) {
        if defect > CONVEXITY_TOL * max_abs(h) {
            return Err(Error::NotConvex { index, defect });
        }
    }
    let d = 2.0 * PI / n as f64;
    let sd = d.sin();
    let raw: Vec<Vec2> = (0..n)
        .map(|i| {
            let (s0, c0) = grid_angle(i, n).sin_cos();
            let (s1, c1) = grid_angle(i + 1, n).sin_cos();
            let (h0, h1) = (h[i], h[(i + 1) % n]);
            Vec2::new((h0 * s1 - h1 * s0) / sd, (h1 * c0 - h0 * c1) / sd)
        })
        .collect();
    let scale = max_abs(h);
    ConvexPolygon::new(merge_flat_vertices(raw, MERGE_AREA_TOL * scale * scale))
}

/// Repeatedly drops vertices whose corner triangle has area below `area_tol`
/// or that are not strictly convex.
fn merge_flat_vertices(mut v: Vec<Vec2>, area_tol: f64) -> Vec<Vec2> {
    loop {
        let m = v.len();
        if m <= 3 {
            return v;
        }
        let drop = (0..m).find(|&i| {
            let a = v[(i + m - 1) % m];
            let b = v[i];
            let c = v[(i + 1) % m];
            let o = orient(a, b, c);
            o <= 0.0 || 0.5 * o.abs() < area_tol || a == b
        });
        match drop {
            Some(i) => {
                v.remove(i);
            }
            None => return v,
        }
    }
}

/// Area, perimeter, diameter and inradius of a polygon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoMeasures {
    pub area: f64,
    pub perimeter: f64,
    pub diameter: f64,
    pub inradius: f64,
}

pub fn measures(p: &ConvexPolygon) -> GeoMeasures {
    GeoMeasures {
        area: p.area(),
        perimeter: p.perimeter(),
        diameter: p.diameter(),
        inradius: inscribed_disc(p).1,
    }
}

/// Largest inscribed disc `(centre, radius)`.
///
/// Solves `max r  s.t.  ⟨n_k, c⟩ + r ≤ b_k` over the edge half-planes with a
/// dense simplex tableau (Bland's rule), starting from the vertex centroid.
pub fn inscribed_disc(p: &ConvexPolygon) -> (Vec2, f64) {
    let m = p.len();
    let origin = p.vertices().iter().fold(Vec2::default(), |s, v| s + *v) * (1.0 / m as f64);
    // Columns: c⁺x, c⁻x, c⁺y, c⁻y, r, then m slacks, then rhs.
    let nv = 5;
    let cols = nv + m + 1;
    let mut t = vec![0.0; (m + 1) * cols];
    for k in 0..m {
        let nk = p.outward_normal(k);
        let row = &mut t[k * cols..(k + 1) * cols];
        row[0] = nk.x;
        row[1] = -nk.x;
        row[2] = nk.y;
        row[3] = -nk.y;
        row[4] = 1.0;
        row[nv + k] = 1.0;
        row[cols - 1] = (p.vertex(k) - origin).dot(nk).max(0.0);
    }
    // Objective row holds -c for maximisation.
    t[m * cols + 4] = -1.0;
    let mut basis: Vec<usize> = (0..m).map(|k| nv + k).collect();

    for _ in 0..50 * (m + nv) {
        let obj = &t[m * cols..(m + 1) * cols];
        let Some(enter) = (0..cols - 1).find(|&j| obj[j] < -1e-14) else {
            break;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            let a = t[i * cols + enter];
            if a > 1e-14 {
                let ratio = t[i * cols + cols - 1] / a;
                let better = match leave {
                    None => true,
                    Some((li, lr)) => ratio < lr - 1e-15 || (ratio <= lr + 1e-15 && basis[i] < basis[li]),
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let Some((pr, _)) = leave else { break };
        let piv = t[pr * cols + enter];
        for j in 0..cols {
            t[pr * cols + j] /= piv;
        }
        for i in 0..=m {
            if i == pr {
                continue;
            }
            let f = t[i * cols + enter];
            if f != 0.0 {
                for j in 0..cols {
                    t[i * cols + j] -= f * t[pr * cols + j];
                }
            }
        }
        basis[pr] = enter;
    }

    let mut x = [0.0; 5];
    for (i, &b) in basis.iter().enumerate() {
        if b < nv {
            x[b] = t[i * cols + cols - 1];
        }
    }
    let centre = origin + Vec2::new(x[0] - x[1], x[2] - x[3]);
    // Exact value at the optimum centre: distance to the nearest edge line.
    (centre, p.signed_distance(centre).max(0.0))
}

/// Multiplies every vertex by `t > 0`.
pub fn scale(p: &ConvexPolygon, t: f64) -> Result<ConvexPolygon> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("scale factor must be positive, got {t}")));
    }
    Ok(ConvexPolygon {
        vertices: p.vertices.iter().map(|v| *v * t).collect(),
        keep_collinear: p.keep_collinear,
    })
}

/// Hausdorff distance between two convex polygons.
///
/// For convex bodies this equals `sup_θ |h_P(θ) - h_Q(θ)|`. Between
/// consecutive edge-normal angles of either polygon both support functions are
/// attained at fixed vertices, so the difference is `⟨v_P - v_Q, u(θ)⟩` and its
/// extremum on each arc is found in closed form.
pub fn hausdorff_distance(p: &ConvexPolygon, q: &ConvexPolygon) -> f64 {
    let mut breaks: Vec<f64> = (0..p.len())
        .map(|k| p.outward_normal(k).angle())
        .chain((0..q.len()).map(|k| q.outward_normal(k).angle()))
        .map(|a| a.rem_euclid(2.0 * PI))
        .collect();
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let argmax = |poly: &ConvexPolygon, u: Vec2| {
        poly.vertices()
            .iter()
            .copied()
            .max_by(|a, b| a.dot(u).total_cmp(&b.dot(u)))
            .expect("non-empty polygon")
    };

    let nb = breaks.len();
    let mut best = 0.0_f64;
    for i in 0..nb {
        let a0 = breaks[i];
        let a1 = if i + 1 < nb { breaks[i + 1] } else { breaks[0] + 2.0 * PI };
        let mid = Vec2::from_angle(0.5 * (a0 + a1));
        let d = argmax(p, mid) - argmax(q, mid);
        best = best.max(d.dot(Vec2::from_angle(a0)).abs());
        best = best.max(d.dot(Vec2::from_angle(a1)).abs());
        if d.norm() > 0.0 {
            for phi in [d.angle(), (-d).angle()] {
                let mut phi = phi.rem_euclid(2.0 * PI);
                if phi < a0 {
                    phi += 2.0 * PI;
                }
                if phi <= a1 {
                    best = best.max(d.norm());
                }
            }
        }
    }
    best
}

/// A maximal flat run of boundary edges.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    /// Vertex where the run starts.
    pub start: usize,
    /// Vertex where the run ends (may wrap past the last index).
    pub end: usize,
    /// Chord length between the two end vertices.
    pub length: f64,
    /// Direction of the chord in `[0, 2π)`.
    pub direction: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentReport {
    pub segments: Vec<Segment>,
    pub longest_length: f64,
}

impl SegmentReport {
    pub fn longest(&self) -> Option<&Segment> {
        self.segments.iter().max_by(|a, b| a.length.total_cmp(&b.length))
    }
}

/// Default flatness threshold for a grid of `n` support angles.
pub fn default_turn_tol(n: usize) -> f64 {
    0.25 * 2.0 * PI / n as f64
}

/// Default minimum segment length for a polygon.
pub fn default_min_len(p: &ConvexPolygon) -> f64 {
    0.05 * p.diameter()
}

/// Finds maximal runs of edges whose interior vertices turn by at most
/// `turn_tol`, keeping those with chord length at least `min_len`.
pub fn detect_segments(p: &ConvexPolygon, turn_tol: f64, min_len: f64) -> SegmentReport {
    let m = p.len();
    let ext = p.exterior_angles();
    // A run must start right after a vertex that breaks flatness; a curve
    // without any such vertex has no endpoints and is not a segment.
    let Some(first_break) = (0..m).find(|&i| ext[i] > turn_tol) else {
        return SegmentReport::default();
    };

    let mut segments = Vec::new();
    let mut start = first_break;
    for step in 1..=m {
        let i = (first_break + step) % m;
        if ext[i] > turn_tol || step == m {
            let a = p.vertex(start);
            let b = p.vertex(i);
            let chord = b - a;
            let length = chord.norm();
            if length >= min_len {
                segments.push(Segment {
                    start,
                    end: i,
                    length,
                    direction: chord.angle().rem_euclid(2.0 * PI),
                });
            }
            start = i;
        }
    }
    let longest_length = segments.iter().map(|s| s.length).fold(0.0, f64::max);
    SegmentReport { segments, longest_length }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Corner {
    pub vertex: usize,
    pub exterior_angle: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CornerReport {
    pub corners: Vec<Corner>,
    pub max_exterior_angle: f64,
}

/// Vertices turning by more than `angle_tol`, sharpest first.
pub fn detect_corners(p: &ConvexPolygon, angle_tol: f64) -> CornerReport {
    let ext = p.exterior_angles();
    let mut corners: Vec<Corner> = ext
        .iter()
        .enumerate()
        .filter(|(_, &a)| a > angle_tol)
        .map(|(vertex, &exterior_angle)| Corner { vertex, exterior_angle })
        .collect();
    corners.sort_by(|a, b| b.exterior_angle.total_cmp(&a.exterior_angle).then(a.vertex.cmp(&b.vertex)));
    CornerReport { corners, max_exterior_angle: ext.iter().copied().fold(0.0, f64::max) }
}

/// Axis-aligned rectangle `[-w/2, w/2] × [-h/2, h/2]`.
pub fn rectangle(w: f64, h: f64) -> Result<ConvexPolygon> {
    ConvexPolygon::new(vec![
        Vec2::new(-0.5 * w, -0.5 * h),
        Vec2::new(0.5 * w, -0.5 * h),
        Vec2::new(0.5 * w, 0.5 * h),
        Vec2::new(-0.5 * w, 0.5 * h),
    ])
}

/// Regular `n`-gon circumscribed about the circle of radius `r`.
pub fn circumscribed_ngon(n: usize, r: f64) -> Result<ConvexPolygon> {
    polygon_from_support(&SupportVector::disc(n, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn stadium(n: usize) -> ConvexPolygon {
        let sv = SupportVector::from_fn(n, |t| 0.5 + 0.5 * t.cos().abs()).unwrap();
        polygon_from_support(&sv).unwrap()
    }

    #[test]
    fn regular_256_gon_area() {
        let p = circumscribed_ngon(256, 1.0).unwrap();
        assert_eq!(p.len(), 256);
        let expected = 256.0 * (PI / 256.0).tan();
        assert!(close(p.area(), expected, 1e-12), "{}", p.area());
    }

    #[test]
    fn four_angle_square() {
        let sv = SupportVector::new(vec![0.5; 4]).unwrap();
        let p = polygon_from_support(&sv).unwrap();
        let expected = [(0.5, 0.5), (-0.5, 0.5), (-0.5, -0.5), (0.5, -0.5)];
        assert_eq!(p.len(), 4);
        for (v, e) in p.vertices().iter().zip(expected) {
            assert!(close(v.x, e.0, 1e-15) && close(v.y, e.1, 1e-15), "{v:?}");
        }
    }

    #[test]
    fn support_homogeneity() {
        let p1 = circumscribed_ngon(64, 1.0).unwrap();
        let p3 = circumscribed_ngon(64, 3.0).unwrap();
        for (a, b) in p1.vertices().iter().zip(p3.vertices()) {
            assert!(close(a.x * 3.0, b.x, 1e-14) && close(a.y * 3.0, b.y, 1e-14));
        }
    }

    #[test]
    fn concurrent_lines_merge_to_square() {
        // Support of the unit square on 64 angles: 16 lines meet at each corner.
        let sv = SupportVector::from_fn(64, |t| 0.5 * (t.cos().abs() + t.sin().abs())).unwrap();
        let p = polygon_from_support(&sv).unwrap();
        assert_eq!(p.len(), 4);
        assert!(close(p.area(), 1.0, 1e-12));
    }

    #[test]
    fn projection_fixed_point() {
        let h = vec![1.0; 64];
        let p = project_to_convex(&h).unwrap();
        assert_eq!(p.values(), &h[..]);
    }

    #[test]
    fn projection_lowers_bump() {
        let mut h = vec![1.0; 64];
        h[0] = 1.5;
        let p = project_to_convex(&h).unwrap();
        assert!(p.values()[0] < 1.5);
        let v = p.values();
        let c = (2.0 * PI / 64.0).cos();
        for i in 0..64 {
            assert!(v[(i + 63) % 64] + v[(i + 1) % 64] - 2.0 * v[i] * c >= -1e-12);
        }
        let again = project_to_convex(v).unwrap();
        assert_eq!(again.values(), v);
    }

    #[test]
    fn projection_rejects_small_or_nonpositive_input() {
        assert!(project_to_convex(&[1.0; 6]).is_err());
        assert!(project_to_convex(&[-1.0; 16]).is_err());
        let mut h = vec![1.0; 16];
        h[3] = -5.0;
        assert!(matches!(project_to_convex(&h), Err(Error::RepairFailed(_))));
    }

    #[test]
    fn polygon_from_support_rejects_nonconvex() {
        let mut h = vec![1.0; 16];
        h[2] = 1.5;
        assert!(SupportVector::new(h).is_err());
    }

    #[test]
    fn square_measures() {
        let m = measures(&rectangle(1.0, 1.0).unwrap());
        assert!(close(m.area, 1.0, 1e-15));
        assert!(close(m.perimeter, 4.0, 1e-15));
        assert!(close(m.diameter, 2f64.sqrt(), 1e-15));
        assert!(close(m.inradius, 0.5, 1e-12));
    }

    #[test]
    fn ngon_measures() {
        let m = measures(&circumscribed_ngon(256, 1.0).unwrap());
        let t = (PI / 256.0).tan();
        assert!(close(m.area, 256.0 * t, 1e-12));
        assert!(close(m.perimeter, 512.0 * t, 1e-12));
        assert!(close(m.inradius, 1.0, 1e-12));
    }

    #[test]
    fn rectangle_measures() {
        let m = measures(&rectangle(3.0, 1.0).unwrap());
        assert!(close(m.area, 3.0, 1e-14));
        assert!(close(m.perimeter, 8.0, 1e-14));
        assert!(close(m.diameter, 10f64.sqrt(), 1e-14));
        assert!(close(m.inradius, 0.5, 1e-12));
    }

    #[test]
    fn triangle_inradius() {
        // 3-4-5 right triangle: r = (a + b - c) / 2 = 1.
        let p = ConvexPolygon::new(vec![Vec2::new(0.0, 0.0), Vec2::new(4.0, 0.0), Vec2::new(0.0, 3.0)]).unwrap();
        let (c, r) = inscribed_disc(&p);
        assert!(close(r, 1.0, 1e-12));
        assert!(close(c.x, 1.0, 1e-12) && close(c.y, 1.0, 1e-12));
    }

    #[test]
    fn scale_examples() {
        let sq = rectangle(1.0, 1.0).unwrap();
        assert!(close(scale(&sq, 2.0).unwrap().area(), 4.0, 1e-14));
        assert_eq!(scale(&sq, 1.0).unwrap(), sq);
        let ng = circumscribed_ngon(256, 1.0).unwrap();
        assert!(close(measures(&scale(&ng, 0.5).unwrap()).inradius, 0.5, 1e-12));
        assert!(scale(&sq, 0.0).is_err());
    }

    #[test]
    fn hausdorff_examples() {
        let a = rectangle(1.0, 1.0).unwrap();
        let b = rectangle(2.0, 2.0).unwrap();
        assert_eq!(hausdorff_distance(&a, &a), 0.0);
        assert!(close(hausdorff_distance(&a, &b), 0.5 * 2f64.sqrt(), 1e-14));
        let shifted = ConvexPolygon::new(a.vertices().iter().map(|v| *v + Vec2::new(0.3, 0.0)).collect()).unwrap();
        assert!(close(hausdorff_distance(&a, &shifted), 0.3, 1e-14));
    }

    #[test]
    fn hausdorff_matches_brute_force_on_polygons() {
        // Independent route: max over vertices of distance to the other polygon.
        let brute = |p: &ConvexPolygon, q: &ConvexPolygon| {
            let one = |p: &ConvexPolygon, q: &ConvexPolygon| {
                p.vertices()
                    .iter()
                    .map(|&v| if q.contains(v) { 0.0 } else { -q.signed_distance(v) })
                    .fold(0.0, f64::max)
            };
            one(p, q).max(one(q, p))
        };
        let a = circumscribed_ngon(7, 1.0).unwrap();
        let b = ConvexPolygon::new(
            rectangle(1.5, 0.7).unwrap().vertices().iter().map(|v| *v + Vec2::new(0.2, -0.1)).collect(),
        )
        .unwrap();
        assert!(close(hausdorff_distance(&a, &b), brute(&a, &b), 1e-12));
    }

    #[test]
    fn segments_of_square() {
        let r = detect_segments(&rectangle(1.0, 1.0).unwrap(), 0.01, 0.0);
        assert_eq!(r.segments.len(), 4);
        for s in &r.segments {
            assert!(close(s.length, 1.0, 1e-15));
        }
    }

    #[test]
    fn no_segments_on_fine_ngon() {
        let r = detect_segments(&circumscribed_ngon(256, 1.0).unwrap(), 0.01, 0.5);
        assert!(r.segments.is_empty());
    }

    #[test]
    fn stadium_has_two_flat_sides() {
        let p = stadium(512);
        let r = detect_segments(&p, default_turn_tol(512), default_min_len(&p));
        assert_eq!(r.segments.len(), 2, "{r:?}");
        let along = |d: f64| r.segments.iter().any(|s| close(s.direction.sin(), 0.0, 1e-9) && close(s.direction.cos(), d, 1e-9));
        assert!(along(1.0) && along(-1.0));
        for s in &r.segments {
            assert!(close(s.length, 1.0, 0.01), "{}", s.length);
        }
    }

    #[test]
    fn corners() {
        let sq = detect_corners(&rectangle(1.0, 1.0).unwrap(), 0.1);
        assert_eq!(sq.corners.len(), 4);
        for c in &sq.corners {
            assert!(close(c.exterior_angle, PI / 2.0, 1e-15));
        }
        let ng = detect_corners(&circumscribed_ngon(256, 1.0).unwrap(), 0.1);
        assert!(ng.corners.is_empty());
        assert!(close(ng.max_exterior_angle, 2.0 * PI / 256.0, 1e-10), "{}", ng.max_exterior_angle - 2.0 * PI / 256.0);
        assert!(detect_corners(&stadium(512), 0.1).corners.is_empty());
    }

    #[test]
    fn signed_distance_inside_and_out() {
        let sq = rectangle(1.0, 1.0).unwrap();
        assert!(close(sq.signed_distance(Vec2::new(0.0, 0.0)), 0.5, 1e-15));
        assert!(close(sq.signed_distance(Vec2::new(1.5, 1.5)), -2f64.sqrt(), 1e-15));
    }

    fn random_support(n: usize) -> impl Strategy<Value = SupportVector> {
        prop::collection::vec(0.6f64..1.4, n).prop_map(|h| project_to_convex(&h).unwrap())
    }

    fn random_polygon() -> impl Strategy<Value = ConvexPolygon> {
        (random_support(32), -0.5f64..0.5, -0.5f64..0.5).prop_map(|(sv, dx, dy)| {
            let p = polygon_from_support(&sv).unwrap();
            ConvexPolygon::new(p.vertices().iter().map(|v| *v + Vec2::new(dx, dy)).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projected_support_yields_convex_polygon(h in prop::collection::vec(0.2f64..2.0, 8..80)) {
            let sv = project_to_convex(&h).unwrap();
            let again = project_to_convex(sv.values()).unwrap();
            prop_assert_eq!(again.values(), sv.values());
            let p = polygon_from_support(&sv).unwrap();
            prop_assert!(p.len() >= 3);
        }

        #[test]
        fn measures_scale(p in random_polygon(), t in 0.1f64..10.0) {
            let a = measures(&p);
            let b = measures(&scale(&p, t).unwrap());
            let rel = |x: f64, y: f64| ((x - y) / y).abs();
            prop_assert!(rel(b.area, t * t * a.area) < 1e-12);
            prop_assert!(rel(b.perimeter, t * a.perimeter) < 1e-12);
            prop_assert!(rel(b.diameter, t * a.diameter) < 1e-12);
            prop_assert!(rel(b.inradius, t * a.inradius) < 1e-9);
        }

        #[test]
        fn isoperimetric_chain(p in random_polygon()) {
            let m = measures(&p);
            prop_assert!(m.perimeter >= 2.0 * m.diameter);
            prop_assert!(m.inradius <= 2.0 * m.area / m.perimeter * (1.0 + 1e-12));
            prop_assert!(m.area > 0.0 && m.inradius > 0.0);
        }

        #[test]
        fn exterior_angles_close_the_curve(p in random_polygon()) {
            let total: f64 = p.exterior_angles().iter().sum();
            prop_assert!((total - 2.0 * PI).abs() < 1e-9);
            let c = detect_corners(&p, 0.0);
            prop_assert!(c.corners.iter().all(|c| c.exterior_angle >= 0.0 && c.exterior_angle < PI));
        }

        #[test]
        fn hausdorff_is_a_metric(p in random_polygon(), q in random_polygon(), r in random_polygon()) {
            let pq = hausdorff_distance(&p, &q);
            prop_assert_eq!(pq, hausdorff_distance(&q, &p));
            prop_assert!(pq <= hausdorff_distance(&p, &r) + hausdorff_distance(&r, &q) + 1e-12);
        }
    }
}
