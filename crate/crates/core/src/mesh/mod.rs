//! Triangulations of convex polygons.

mod ruppert;

use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::shape::{scale, ConvexPolygon};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Write;

/// Smallest angle the generator guarantees.
pub const MIN_ANGLE_DEG: f64 = 20.0;

/// Boundary sizing grows by this much per unit distance when grading is on.
pub const GRADING_RATE: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    /// Index of the polygon edge this mesh edge lies on.
    pub polygon_edge: usize,
}

/// Conforming triangulation of a convex polygon.
#[derive(Clone, Debug)]
pub struct TriMesh {
    nodes: Vec<Vec2>,
    triangles: Vec<[usize; 3]>,
    boundary_nodes: Vec<usize>,
    boundary_edges: Vec<BoundaryEdge>,
    h_target: f64,
    polygon: ConvexPolygon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshQuality {
    pub min_angle: f64,
    pub max_element_diameter: f64,
    pub node_count: usize,
    pub triangle_count: usize,
}

impl TriMesh {
    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    /// Sorted indices of nodes on the polygon boundary.
    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    /// Boundary edges, counterclockwise, grouped by polygon edge.
    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary_edges
    }

    pub fn h_target(&self) -> f64 {
        self.h_target
    }

    pub fn polygon(&self) -> &ConvexPolygon {
        &self.polygon
    }

    pub fn is_boundary_flags(&self) -> Vec<bool> {
        let mut f = vec![false; self.nodes.len()];
        for &i in &self.boundary_nodes {
            f[i] = true;
        }
        f
    }

    pub fn triangle_points(&self, t: usize) -> [Vec2; 3] {
        let [a, b, c] = self.triangles[t];
        [self.nodes[a], self.nodes[b], self.nodes[c]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle_points(t);
        0.5 * (b - a).cross(c - a)
    }

    /// Unique undirected edges in first-seen order.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::with_capacity(3 * self.triangles.len() / 2);
        let mut out = Vec::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    out.push(key);
                }
            }
        }
        out
    }

    /// Same topology with every node (and the polygon) multiplied by `t`.
    pub fn scaled(&self, t: f64) -> Result<TriMesh> {
        Ok(TriMesh {
            nodes: self.nodes.iter().map(|p| *p * t).collect(),
            triangles: self.triangles.clone(),
            boundary_nodes: self.boundary_nodes.clone(),
            boundary_edges: self.boundary_edges.clone(),
            h_target: self.h_target * t,
            polygon: scale(&self.polygon, t)?,
        })
    }

    /// Writes `v x y` and `t i j k` lines.
    pub fn write_text(&self, mut w: impl Write) -> std::io::Result<()> {
        for p in &self.nodes {
            writeln!(w, "v {:e} {:e}", p.x, p.y)?;
        }
        for t in &self.triangles {
            writeln!(w, "t {} {} {}", t[0], t[1], t[2])?;
        }
        Ok(())
    }

    fn from_parts(
        nodes: Vec<Vec2>,
        triangles: Vec<[usize; 3]>,
        boundary_edges: Vec<BoundaryEdge>,
        h_target: f64,
        polygon: ConvexPolygon,
    ) -> Self {
        let mut boundary_nodes: Vec<usize> = boundary_edges.iter().map(|e| e.a).collect();
        boundary_nodes.sort_unstable();
        boundary_nodes.dedup();
        TriMesh { nodes, triangles, boundary_nodes, boundary_edges, h_target, polygon }
    }
}

/// Delaunay refinement mesh of `p`.
///
/// The boundary is first split uniformly at spacing `h_target·(1 − grading/2)`;
/// with `grading > 0` the interior size grows linearly with the distance to
/// the boundary up to `h_target`. Triangles are refined until every angle is
/// at least 20° and every edge is shorter than the local size.
pub fn triangulate(p: &ConvexPolygon, h_target: f64, grading: f64) -> Result<TriMesh> {
    let diameter = p.diameter();
    if !(h_target > 0.0 && h_target < diameter) {
        return Err(Error::InvalidInput(format!("h_target {h_target} must lie in (0, diameter = {diameter})")));
    }
    if !(0.0..=1.0).contains(&grading) {
        return Err(Error::InvalidInput(format!("grading {grading} must lie in [0, 1]")));
    }
    if p.area() <= 1e-12 * diameter * diameter {
        return Err(Error::Meshing("polygon has near-zero area".into()));
    }
    let h_boundary = h_target * (1.0 - 0.5 * grading);
    let sizing = ruppert::Sizing {
        h_max: h_target,
        h_boundary,
        rate: if grading > 0.0 { GRADING_RATE } else { 0.0 },
        sin_min_angle: MIN_ANGLE_DEG.to_radians().sin(),
    };
    let raw = ruppert::refine_polygon(p, sizing)?;
    let boundary_edges = raw
        .boundary_edges
        .iter()
        .map(|&(a, b, polygon_edge)| BoundaryEdge { a, b, polygon_edge })
        .collect();
    Ok(TriMesh::from_parts(raw.nodes, raw.triangles, boundary_edges, h_target, p.clone()))
}

/// Uniform 1→4 split through edge midpoints.
pub fn refine(m: &TriMesh) -> TriMesh {
    let mut nodes = m.nodes.clone();
    let mut mid: HashMap<(usize, usize), usize> = HashMap::with_capacity(3 * m.triangles.len() / 2);
    let mut midpoint = |a: usize, b: usize, nodes: &mut Vec<Vec2>| -> usize {
        let key = (a.min(b), a.max(b));
        *mid.entry(key).or_insert_with(|| {
            nodes.push(nodes[a].lerp(nodes[b], 0.5));
            nodes.len() - 1
        })
    };

    let mut triangles = Vec::with_capacity(4 * m.triangles.len());
    for &[a, b, c] in &m.triangles {
        let ab = midpoint(a, b, &mut nodes);
        let bc = midpoint(b, c, &mut nodes);
        let ca = midpoint(c, a, &mut nodes);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }

    let mut boundary_edges = Vec::with_capacity(2 * m.boundary_edges.len());
    for e in &m.boundary_edges {
        let k = midpoint(e.a, e.b, &mut nodes);
        let (pa, pb) = m.polygon.edge(e.polygon_edge);
        let dir = pb - pa;
        let t = (nodes[k] - pa).dot(dir) / dir.norm2();
        nodes[k] = pa.lerp(pb, t);
        boundary_edges.push(BoundaryEdge { a: e.a, b: k, polygon_edge: e.polygon_edge });
        boundary_edges.push(BoundaryEdge { a: k, b: e.b, polygon_edge: e.polygon_edge });
    }
    TriMesh::from_parts(nodes, triangles, boundary_edges, 0.5 * m.h_target, m.polygon.clone())
}

pub fn quality(m: &TriMesh) -> MeshQuality {
    let mut min_angle = std::f64::consts::PI;
    let mut max_diam = 0.0_f64;
    for t in 0..m.triangles.len() {
        let p = m.triangle_points(t);
        for k in 0..3 {
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            min_angle = min_angle.min(u.cross(v).abs().atan2(u.dot(v)));
            max_diam = max_diam.max(u.norm());
        }
    }
    MeshQuality {
        min_angle,
        max_element_diameter: max_diam,
        node_count: m.nodes.len(),
        triangle_count: m.triangles.len(),
    }
}

/// Point location by a uniform bucket grid over triangle bounding boxes.
#[derive(Clone, Debug)]
pub struct Locator {
    origin: Vec2,
    cell: f64,
    nx: usize,
    ny: usize,
    start: Vec<u32>,
    items: Vec<u32>,
}

/// Barycentric coordinates tolerance for points on element edges.
const BARY_TOL: f64 = 1e-12;

impl Locator {
    pub fn new(m: &TriMesh) -> Self {
        let (lo, hi) = m.polygon.bounding_box();
        let nt = m.triangles.len().max(1);
        let span = (hi.x - lo.x).max(hi.y - lo.y).max(f64::MIN_POSITIVE);
        let per_side = (nt as f64).sqrt().ceil().max(1.0);
        let cell = span / per_side;
        let nx = ((hi.x - lo.x) / cell).floor() as usize + 1;
        let ny = ((hi.y - lo.y) / cell).floor() as usize + 1;
        let cell_of = |x: f64, y: f64| {
            let i = (((x - lo.x) / cell).floor().max(0.0) as usize).min(nx - 1);
            let j = (((y - lo.y) / cell).floor().max(0.0) as usize).min(ny - 1);
            (i, j)
        };
        let mut counts = vec![0u32; nx * ny + 1];
        let mut ranges = Vec::with_capacity(m.triangles.len());
        for t in 0..m.triangles.len() {
            let p = m.triangle_points(t);
            let (i0, j0) = cell_of(p[0].x.min(p[1].x).min(p[2].x), p[0].y.min(p[1].y).min(p[2].y));
            let (i1, j1) = cell_of(p[0].x.max(p[1].x).max(p[2].x), p[0].y.max(p[1].y).max(p[2].y));
            for j in j0..=j1 {
                for i in i0..=i1 {
                    counts[j * nx + i + 1] += 1;
                }
            }
            ranges.push((i0, j0, i1, j1));
        }
        for c in 1..counts.len() {
            counts[c] += counts[c - 1];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; counts[nx * ny] as usize];
        for (t, &(i0, j0, i1, j1)) in ranges.iter().enumerate() {
            for j in j0..=j1 {
                for i in i0..=i1 {
                    let c = j * nx + i;
                    items[fill[c] as usize] = t as u32;
                    fill[c] += 1;
                }
            }
        }
        Locator { origin: lo, cell, nx, ny, start: counts, items }
    }

    /// Containing triangle and barycentric weights of `x`.
    pub fn locate(&self, m: &TriMesh, x: Vec2) -> Option<(usize, [f64; 3])> {
        let fi = (x.x - self.origin.x) / self.cell;
        let fj = (x.y - self.origin.y) / self.cell;
        if !(fi >= 0.0 && fj >= 0.0) {
            return None;
        }
        let (i, j) = (fi as usize, fj as usize);
        if i >= self.nx || j >= self.ny {
            return None;
        }
        let c = j * self.nx + i;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.items[self.start[c] as usize..self.start[c + 1] as usize] {
            let t = t as usize;
            let w = barycentric(m.triangle_points(t), x);
            let worst = w[0].min(w[1]).min(w[2]);
            if worst >= 0.0 {
                return Some((t, w));
            }
            if worst >= -BARY_TOL && best.is_none_or(|b| worst > b.2) {
                best = Some((t, w, worst));
            }
        }
        best.map(|(t, w, _)| (t, w))
    }
}

pub fn barycentric(p: [Vec2; 3], x: Vec2) -> [f64; 3] {
    let d = (p[1] - p[0]).cross(p[2] - p[0]);
    let w1 = (x - p[0]).cross(p[2] - p[0]) / d;
    let w2 = (p[1] - p[0]).cross(x - p[0]) / d;
    [1.0 - w1 - w2, w1, w2]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shape::{circumscribed_ngon, rectangle};

    fn check_valid(m: &TriMesh) {
        let area: f64 = (0..m.triangles().len()).map(|t| m.triangle_area(t)).sum();
        let poly_area = m.polygon().area();
        assert!(((area - poly_area) / poly_area).abs() < 1e-10, "area {area} vs {poly_area}");
        for t in 0..m.triangles().len() {
            assert!(m.triangle_area(t) > 0.0);
        }
        let v = m.nodes().len() as i64;
        let e = m.edges().len() as i64;
        let f = m.triangles().len() as i64;
        assert_eq!(v - e + f, 1, "Euler characteristic");
        let poly = m.polygon();
        for be in m.boundary_edges() {
            for node in [be.a, be.b] {
                let (a, b) = poly.edge(be.polygon_edge);
                let n = poly.outward_normal(be.polygon_edge);
                assert!((m.nodes()[node] - a).dot(n).abs() < 1e-12 * (1.0 + a.norm() + b.norm()));
            }
        }
        // Every boundary edge is used by exactly one triangle; interior edges by two.
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for t in m.triangles() {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *count.entry((a.min(b), a.max(b))).or_default() += 1;
            }
        }
        let nb = count.values().filter(|&&c| c == 1).count();
        assert_eq!(nb, m.boundary_edges().len());
        assert!(count.values().all(|&c| c == 1 || c == 2));
    }

    #[test]
    fn square_uniform_contract() {
        let sq = rectangle(1.0, 1.0).unwrap();
        let m = triangulate(&sq, 0.1, 0.0).unwrap();
        check_valid(&m);
        let q = quality(&m);
        assert!(q.max_element_diameter <= 0.15, "{q:?}");
        assert!(q.min_angle >= MIN_ANGLE_DEG.to_radians() * (1.0 - 1e-9), "{q:?}");
    }

    #[test]
    fn finer_target_gives_more_nodes() {
        let sq = rectangle(1.0, 1.0).unwrap();
        let a = triangulate(&sq, 0.1, 0.0).unwrap();
        let b = triangulate(&sq, 0.05, 0.0).unwrap();
        assert!(b.nodes().len() > a.nodes().len());
    }

    #[test]
    fn graded_boundary_spacing() {
        let p = circumscribed_ngon(256, 1.0).unwrap();
        let m = triangulate(&p, 0.05, 0.5).unwrap();
        check_valid(&m);
        for e in m.boundary_edges() {
            assert!(m.nodes()[e.a].dist(m.nodes()[e.b]) <= 0.0375 + 1e-12);
        }
        let q = quality(&m);
        assert!(q.min_angle >= MIN_ANGLE_DEG.to_radians() * (1.0 - 1e-9));
        assert!(q.max_element_diameter <= 1.5 * 0.05);
    }

    #[test]
    fn deterministic() {
        let p = circumscribed_ngon(64, 1.0).unwrap();
        let a = triangulate(&p, 0.07, 0.5).unwrap();
        let b = triangulate(&p, 0.07, 0.5).unwrap();
        assert_eq!(a.nodes(), b.nodes());
        assert_eq!(a.triangles(), b.triangles());
    }

    #[test]
    fn refine_contract() {
        let sq = rectangle(1.0, 1.0).unwrap();
        let m = triangulate(&sq, 0.1, 0.0).unwrap();
        let r = refine(&m);
        check_valid(&r);
        assert_eq!(r.triangles().len(), 4 * m.triangles().len());
        assert_eq!(&r.nodes()[..m.nodes().len()], m.nodes());
        let rr = refine(&r);
        let d0 = quality(&m).max_element_diameter;
        assert!(quality(&rr).max_element_diameter <= d0 / 4.0 + 1e-12);
        assert!((quality(&rr).min_angle - quality(&m).min_angle).abs() < 1e-12);
    }

    #[test]
    fn two_triangle_square_quality() {
        let sq = rectangle(1.0, 1.0).unwrap();
        let nodes = sq.vertices().to_vec();
        let edges = (0..4).map(|k| BoundaryEdge { a: k, b: (k + 1) % 4, polygon_edge: k }).collect();
        let m = TriMesh::from_parts(nodes, vec![[0, 1, 2], [0, 2, 3]], edges, 1.0, sq);
        assert!((quality(&m).min_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_parameters() {
        let sq = rectangle(1.0, 1.0).unwrap();
        assert!(triangulate(&sq, 0.0, 0.0).is_err());
        assert!(triangulate(&sq, 2.0, 0.0).is_err());
        assert!(triangulate(&sq, 0.1, 1.5).is_err());
    }

    #[test]
    fn long_rectangle_and_locator() {
        let r = rectangle(3.0, 1.0).unwrap();
        let m = triangulate(&r, 0.08, 0.5).unwrap();
        check_valid(&m);
        let loc = Locator::new(&m);
        for &x in &[Vec2::new(0.0, 0.0), Vec2::new(1.4, 0.45), Vec2::new(-1.5, -0.5)] {
            let (t, w) = loc.locate(&m, x).unwrap();
            let p = m.triangle_points(t);
            let back = p[0] * w[0] + p[1] * w[1] + p[2] * w[2];
            assert!(back.dist(x) < 1e-12);
        }
        assert!(loc.locate(&m, Vec2::new(2.0, 0.0)).is_none());
    }
}
