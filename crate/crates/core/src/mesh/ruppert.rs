//! Delaunay refinement of a convex polygon.
//!
//! Every input segment is a hull edge of the triangulation, so the
//! triangulation stays plain Delaunay throughout: boundary points are inserted
//! by splitting hull edges and interior points by Bowyer–Watson cavities.
//! Bad triangles (smallest angle below the bound or longest edge above the
//! local size) get their circumcentre inserted unless it encroaches a
//! boundary subsegment, in which case the subsegment is split at its midpoint.

use crate::error::{Error, Result};
use crate::geom::{in_circle, orient, Vec2};
use crate::shape::ConvexPolygon;
use std::collections::VecDeque;

const NONE: u32 = u32::MAX;

/// Hard cap on the number of mesh vertices.
pub(crate) const MAX_VERTICES: usize = 4_000_000;

#[derive(Clone, Copy, Debug)]
struct Tri {
    v: [u32; 3],
    /// `n[k]` is the neighbour across the edge opposite `v[k]`.
    n: [u32; 3],
    alive: bool,
}

/// Output of the refinement: vertex coordinates, counterclockwise triangles
/// and boundary edges tagged with the polygon edge they lie on.
pub(crate) struct RawMesh {
    pub nodes: Vec<Vec2>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<(usize, usize, usize)>,
}

pub(crate) struct Sizing {
    pub h_max: f64,
    pub h_boundary: f64,
    /// Size growth per unit distance from the boundary; zero for uniform meshes.
    pub rate: f64,
    pub sin_min_angle: f64,
}

enum Located {
    Inside(u32),
    /// The walk left the domain through hull edge `(a, b)`.
    Outside(u32, u32),
}

struct Builder<'a> {
    poly: &'a ConvexPolygon,
    sizing: Sizing,
    pts: Vec<Vec2>,
    tris: Vec<Tri>,
    free: Vec<u32>,
    vert_tri: Vec<u32>,
    /// Per polygon edge: sorted `(parameter, vertex)` pairs including both ends.
    segs: Vec<Vec<(f64, u32)>>,
    max_seg_len: f64,
    mark: Vec<u32>,
    stamp: u32,
    bad: VecDeque<(u32, [u32; 3])>,
    encroached: VecDeque<(u32, u32)>,
}

pub(crate) fn refine_polygon(poly: &ConvexPolygon, sizing: Sizing) -> Result<RawMesh> {
    let mut b = Builder::new(poly, sizing)?;
    b.insert_boundary_points()?;
    b.run()?;
    Ok(b.finish())
}

impl<'a> Builder<'a> {
    fn new(poly: &'a ConvexPolygon, sizing: Sizing) -> Result<Self> {
        let m = poly.len();
        let pts: Vec<Vec2> = poly.vertices().to_vec();

        // Fan from vertex 0, then Lawson flips until locally Delaunay.
        let mut fan: Vec<[u32; 3]> = (1..m - 1).map(|i| [0, i as u32, (i + 1) as u32]).collect();
        lawson_flip(&pts, &mut fan);

        let mut b = Builder {
            poly,
            sizing,
            pts,
            tris: Vec::with_capacity(4 * m),
            free: Vec::new(),
            vert_tri: vec![NONE; m],
            segs: (0..m).map(|k| vec![(0.0, k as u32), (1.0, ((k + 1) % m) as u32)]).collect(),
            max_seg_len: 0.0,
            mark: Vec::new(),
            stamp: 0,
            bad: VecDeque::new(),
            encroached: VecDeque::new(),
        };
        b.max_seg_len = (0..m).map(|k| poly.vertex(k).dist(poly.vertex(k + 1))).fold(0.0, f64::max);
        for t in &fan {
            b.tris.push(Tri { v: *t, n: [NONE; 3], alive: true });
        }
        b.link_all();
        for (i, t) in b.tris.iter().enumerate() {
            for &v in &t.v {
                b.vert_tri[v as usize] = i as u32;
            }
        }
        if b.tris.iter().any(|t| b.signed_area2(t.v) <= 0.0) {
            return Err(Error::Meshing("initial fan has a degenerate triangle".into()));
        }
        Ok(b)
    }

    fn link_all(&mut self) {
        let mut edges: std::collections::HashMap<(u32, u32), (u32, usize)> = std::collections::HashMap::new();
        for (ti, t) in self.tris.iter().enumerate() {
            for k in 0..3 {
                edges.insert((t.v[(k + 1) % 3], t.v[(k + 2) % 3]), (ti as u32, k));
            }
        }
        for ti in 0..self.tris.len() {
            for k in 0..3 {
                let t = self.tris[ti];
                let (a, b) = (t.v[(k + 1) % 3], t.v[(k + 2) % 3]);
                self.tris[ti].n[k] = edges.get(&(b, a)).map_or(NONE, |&(o, _)| o);
            }
        }
    }

    fn signed_area2(&self, v: [u32; 3]) -> f64 {
        let (a, b, c) = (self.p(v[0]), self.p(v[1]), self.p(v[2]));
        (b - a).cross(c - a)
    }

    #[inline]
    fn p(&self, i: u32) -> Vec2 {
        self.pts[i as usize]
    }

    fn insert_boundary_points(&mut self) -> Result<()> {
        let m = self.poly.len();
        let h = self.sizing.h_boundary;
        for k in 0..m {
            let (a, b) = self.poly.edge(k);
            let pieces = (a.dist(b) / h).ceil().max(1.0) as usize;
            for j in 1..pieces {
                let t = j as f64 / pieces as f64;
                let idx = self.segs[k].len() - 2;
                self.split_segment_at(k, idx, t)?;
            }
        }
        self.max_seg_len = (0..m)
            .flat_map(|k| self.segs[k].windows(2).map(move |w| (k, w[0].1, w[1].1)))
            .map(|(_, a, b)| self.p(a).dist(self.p(b)))
            .fold(0.0, f64::max);
        Ok(())
    }

    fn run(&mut self) -> Result<()> {
        for ti in 0..self.tris.len() as u32 {
            self.check_triangle(ti);
        }
        loop {
            if self.pts.len() > MAX_VERTICES {
                return Err(Error::Meshing(format!("refinement exceeded {MAX_VERTICES} vertices")));
            }
            if let Some((a, b)) = self.encroached.pop_front() {
                if let Some((k, idx)) = self.find_segment(a, b) {
                    if self.segment_encroached(a, b) {
                        self.split_segment_mid(k, idx)?;
                    }
                }
                continue;
            }
            let Some((ti, v)) = self.bad.pop_front() else { break };
            let t = self.tris[ti as usize];
            if !t.alive || t.v != v || !self.is_bad(v) {
                continue;
            }
            let c = self.circumcenter(v);
            let hits = self.segments_encroached_by(c);
            if !hits.is_empty() {
                for (a, b) in hits {
                    if let Some((k, idx)) = self.find_segment(a, b) {
                        self.split_segment_mid(k, idx)?;
                    }
                }
                if self.tris[ti as usize].alive && self.tris[ti as usize].v == v {
                    self.bad.push_back((ti, v));
                }
                continue;
            }
            match self.locate(c, ti) {
                Located::Inside(start) => {
                    self.insert_point(c, start, None)?;
                }
                Located::Outside(a, b) => {
                    let (k, idx) = self
                        .find_segment(a, b)
                        .ok_or_else(|| Error::Meshing("walk left through a non-segment edge".into()))?;
                    self.split_segment_mid(k, idx)?;
                    if self.tris[ti as usize].alive && self.tris[ti as usize].v == v {
                        self.bad.push_back((ti, v));
                    }
                }
            }
        }
        Ok(())
    }

    fn size_at(&self, x: Vec2) -> f64 {
        let s = &self.sizing;
        if s.rate == 0.0 {
            return s.h_max;
        }
        let d = self.poly.signed_distance(x).max(0.0);
        (s.h_boundary + s.rate * d).min(s.h_max)
    }

    fn is_bad(&self, v: [u32; 3]) -> bool {
        let (a, b, c) = (self.p(v[0]), self.p(v[1]), self.p(v[2]));
        let l2 = [(b - c).norm2(), (c - a).norm2(), (a - b).norm2()];
        let lmax2 = l2.iter().copied().fold(0.0, f64::max);
        let lmin2 = l2.iter().copied().fold(f64::INFINITY, f64::min);
        let area2 = (b - a).cross(c - a);
        // 2R = abc / (2 area); sin(min angle) = l_min / 2R.
        let two_r = (l2[0] * l2[1] * l2[2]).sqrt() / area2;
        if lmin2.sqrt() < self.sizing.sin_min_angle * two_r {
            return true;
        }
        let centroid = (a + b + c) * (1.0 / 3.0);
        let s = self.size_at(centroid);
        lmax2 > s * s
    }

    fn check_triangle(&mut self, ti: u32) {
        let v = self.tris[ti as usize].v;
        if self.is_bad(v) {
            self.bad.push_back((ti, v));
        }
        for k in 0..3 {
            if self.tris[ti as usize].n[k] == NONE {
                let (a, b) = (v[(k + 1) % 3], v[(k + 2) % 3]);
                if self.segment_encroached(a, b) {
                    self.encroached.push_back((a, b));
                }
            }
        }
    }

    fn circumcenter(&self, v: [u32; 3]) -> Vec2 {
        let a = self.p(v[0]);
        let b = self.p(v[1]) - a;
        let c = self.p(v[2]) - a;
        let d = 2.0 * b.cross(c);
        let (b2, c2) = (b.norm2(), c.norm2());
        a + Vec2::new((c.y * b2 - b.y * c2) / d, (b.x * c2 - c.x * b2) / d)
    }

    /// Apex of the triangle on hull edge `a→b` lies inside its diametral circle.
    fn segment_encroached(&self, a: u32, b: u32) -> bool {
        let Some((ti, k)) = self.edge_triangle(a, b) else { return false };
        let apex = self.p(self.tris[ti as usize].v[k]);
        (self.p(a) - apex).dot(self.p(b) - apex) < 0.0
    }

    fn segments_encroached_by(&self, c: Vec2) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        let half = 0.5 * self.max_seg_len;
        for k in 0..self.poly.len() {
            let (a, b) = self.poly.edge(k);
            let n = self.poly.outward_normal(k);
            if (c - a).dot(n).abs() >= half {
                continue;
            }
            let ab = b - a;
            let t = (c - a).dot(ab) / ab.norm2();
            if !(0.0..=1.0).contains(&t) {
                continue;
            }
            let list = &self.segs[k];
            let j = list.partition_point(|&(s, _)| s <= t).clamp(1, list.len() - 1);
            let (u, w) = (list[j - 1].1, list[j].1);
            if (self.p(u) - c).dot(self.p(w) - c) < 0.0 {
                out.push((u, w));
            }
        }
        out
    }

    fn find_segment(&self, a: u32, b: u32) -> Option<(usize, usize)> {
        // Hull edges run counterclockwise, as do the per-edge lists.
        for (k, list) in self.segs.iter().enumerate() {
            if let Some(j) = list.windows(2).position(|w| w[0].1 == a && w[1].1 == b) {
                return Some((k, j));
            }
        }
        None
    }

    /// Triangle holding the directed edge `a→b`, with the index of its apex.
    fn edge_triangle(&self, a: u32, b: u32) -> Option<(u32, usize)> {
        let t0 = self.vert_tri[a as usize];
        if t0 == NONE {
            return None;
        }
        for dir in [2usize, 1] {
            let mut t = t0;
            loop {
                let tri = &self.tris[t as usize];
                let i = tri.v.iter().position(|&x| x == a)?;
                if tri.v[(i + 1) % 3] == b {
                    return Some((t, (i + 2) % 3));
                }
                let next = tri.n[(i + dir) % 3];
                if next == NONE || next == t0 {
                    break;
                }
                t = next;
            }
        }
        None
    }

    fn split_segment_mid(&mut self, k: usize, idx: usize) -> Result<()> {
        let t = 0.5 * (self.segs[k][idx].0 + self.segs[k][idx + 1].0);
        self.split_segment_at(k, idx, t)
    }

    fn split_segment_at(&mut self, k: usize, idx: usize, t: f64) -> Result<()> {
        let (a, b) = (self.segs[k][idx].1, self.segs[k][idx + 1].1);
        let (pa, pb) = self.poly.edge(k);
        let p = pa.lerp(pb, t);
        let (start, _) = self
            .edge_triangle(a, b)
            .ok_or_else(|| Error::Meshing(format!("boundary segment ({a}, {b}) not found")))?;
        let v = self.insert_point(p, start, Some((a, b)))?;
        self.segs[k].insert(idx + 1, (t, v));
        Ok(())
    }

    fn locate(&self, p: Vec2, start: u32) -> Located {
        let mut t = start;
        let limit = self.tris.len() + 16;
        for step in 0..limit {
            let tri = &self.tris[t as usize];
            let mut moved = false;
            for j in 0..3 {
                let k = (j + step) % 3;
                let (a, b) = (tri.v[(k + 1) % 3], tri.v[(k + 2) % 3]);
                if orient(self.p(a), self.p(b), p) < 0.0 {
                    if tri.n[k] == NONE {
                        return Located::Outside(a, b);
                    }
                    t = tri.n[k];
                    moved = true;
                    break;
                }
            }
            if !moved {
                return Located::Inside(t);
            }
        }
        // Visibility walks terminate on Delaunay meshes; keep a brute-force fallback.
        for (i, tri) in self.tris.iter().enumerate() {
            if tri.alive && (0..3).all(|k| orient(self.p(tri.v[(k + 1) % 3]), self.p(tri.v[(k + 2) % 3]), p) >= 0.0) {
                return Located::Inside(i as u32);
            }
        }
        Located::Outside(NONE, NONE)
    }

    /// Bowyer–Watson insertion; `split` names the hull edge `p` lies on.
    fn insert_point(&mut self, p: Vec2, start: u32, split: Option<(u32, u32)>) -> Result<u32> {
        self.stamp = self.stamp.wrapping_add(1);
        if self.stamp == 0 {
            self.mark.iter_mut().for_each(|m| *m = 0);
            self.stamp = 1;
        }
        if self.mark.len() < self.tris.len() {
            self.mark.resize(self.tris.len(), 0);
        }
        let stamp = self.stamp;
        let mut cavity = vec![start];
        self.mark[start as usize] = stamp;
        let mut i = 0;
        while i < cavity.len() {
            let t = self.tris[cavity[i] as usize];
            for &nb in &t.n {
                if nb == NONE || self.mark[nb as usize] == stamp {
                    continue;
                }
                let v = self.tris[nb as usize].v;
                if in_circle(self.p(v[0]), self.p(v[1]), self.p(v[2]), p) > 0.0 {
                    self.mark[nb as usize] = stamp;
                    cavity.push(nb);
                }
            }
            i += 1;
        }

        let mut rim: Vec<(u32, u32, u32)> = Vec::with_capacity(cavity.len() + 2);
        for &c in &cavity {
            let t = self.tris[c as usize];
            for k in 0..3 {
                let nb = t.n[k];
                if nb != NONE && self.mark[nb as usize] == stamp {
                    continue;
                }
                let (a, b) = (t.v[(k + 1) % 3], t.v[(k + 2) % 3]);
                if split == Some((a, b)) {
                    continue;
                }
                if orient(self.p(a), self.p(b), p) <= 0.0 {
                    return Err(Error::Meshing(format!("cavity not star-shaped around ({}, {})", p.x, p.y)));
                }
                rim.push((a, b, nb));
            }
        }

        let pi = self.pts.len() as u32;
        self.pts.push(p);
        self.vert_tri.push(NONE);
        for &c in &cavity {
            self.tris[c as usize].alive = false;
            self.free.push(c);
        }

        let mut created: Vec<u32> = Vec::with_capacity(rim.len());
        for &(a, b, outer) in &rim {
            let tri = Tri { v: [a, b, pi], n: [NONE, NONE, outer], alive: true };
            let id = match self.free.pop() {
                Some(id) => {
                    self.tris[id as usize] = tri;
                    id
                }
                None => {
                    self.tris.push(tri);
                    (self.tris.len() - 1) as u32
                }
            };
            if outer != NONE {
                let o = &mut self.tris[outer as usize];
                for k in 0..3 {
                    if o.v[(k + 1) % 3] == b && o.v[(k + 2) % 3] == a {
                        o.n[k] = id;
                    }
                }
            }
            created.push(id);
        }
        for (j, &(a, b, _)) in rim.iter().enumerate() {
            let id = created[j];
            // Edge (b, p) is shared with the triangle whose rim edge starts at b.
            let next = rim.iter().position(|r| r.0 == b).map_or(NONE, |i| created[i]);
            // Edge (p, a) is shared with the triangle whose rim edge ends at a.
            let prev = rim.iter().position(|r| r.1 == a).map_or(NONE, |i| created[i]);
            self.tris[id as usize].n[0] = next;
            self.tris[id as usize].n[1] = prev;
            self.vert_tri[a as usize] = id;
            self.vert_tri[b as usize] = id;
            self.vert_tri[pi as usize] = id;
        }
        if self.mark.len() < self.tris.len() {
            self.mark.resize(self.tris.len(), 0);
        }
        for &id in &created {
            self.check_triangle(id);
        }
        Ok(pi)
    }

    fn finish(self) -> RawMesh {
        let mut triangles = Vec::new();
        let mut boundary_edges = Vec::new();
        for t in self.tris.iter().filter(|t| t.alive) {
            triangles.push([t.v[0] as usize, t.v[1] as usize, t.v[2] as usize]);
        }
        for (k, list) in self.segs.iter().enumerate() {
            for w in list.windows(2) {
                boundary_edges.push((w[0].1 as usize, w[1].1 as usize, k));
            }
        }
        RawMesh { nodes: self.pts, triangles, boundary_edges }
    }
}

/// Flips edges of a triangulation of a convex point set until every interior
/// edge is locally Delaunay.
fn lawson_flip(pts: &[Vec2], tris: &mut [[u32; 3]]) {
    loop {
        let mut edges: std::collections::HashMap<(u32, u32), (usize, usize)> = std::collections::HashMap::new();
        for (ti, t) in tris.iter().enumerate() {
            for k in 0..3 {
                edges.insert((t[(k + 1) % 3], t[(k + 2) % 3]), (ti, k));
            }
        }
        let mut touched = vec![false; tris.len()];
        let mut flipped = false;
        for t1 in 0..tris.len() {
            for k in 0..3 {
                if touched[t1] {
                    break;
                }
                let tri = tris[t1];
                let (a, b, c) = (tri[(k + 1) % 3], tri[(k + 2) % 3], tri[k]);
                let Some(&(t2, k2)) = edges.get(&(b, a)) else { continue };
                if touched[t2] {
                    continue;
                }
                let d = tris[t2][k2];
                let (pa, pb, pc, pd) = (pts[a as usize], pts[b as usize], pts[c as usize], pts[d as usize]);
                if in_circle(pc, pa, pb, pd) > 0.0 && orient(pc, pa, pd) > 0.0 && orient(pd, pb, pc) > 0.0 {
                    tris[t1] = [c, a, d];
                    tris[t2] = [d, b, c];
                    touched[t1] = true;
                    touched[t2] = true;
                    flipped = true;
                }
            }
        }
        if !flipped {
            return;
        }
    }
}
