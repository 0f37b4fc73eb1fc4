//! P1 finite elements for the torsion problem `−Δu = 1` in Ω, `u = 0` on ∂Ω.
//!
//! Besides nodal values and element gradients the solution offers the inward
//! probe `u(z + δ n(z)) / δ` as the boundary gradient: since `u` vanishes on
//! the boundary the ratio is `|∇u(z)| + a δ + O(δ²)`, and two depths
//! eliminate the linear term.

use crate::error::{Error, Result};
use crate::geom::{convex_hull, signed_area, Vec2};
use crate::mesh::{Locator, TriMesh};
use crate::shape::ConvexPolygon;
use crate::sparse::{relative_residual, solve_cholesky, solve_pcg, Csr};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};

/// Node count up to which the stiffness system is factorized directly.
pub const DIRECT_SOLVER_LIMIT: usize = 200_000;

/// Required relative residual of the linear solve.
pub const SOLVER_RTOL: f64 = 1e-10;

/// Discrete Laplacian threshold below which a node counts as violating
/// subharmonicity of `|∇u|²`.
pub const SUBHARMONIC_TOL: f64 = 0.1;

#[derive(Clone, Debug)]
pub struct TorsionSolution {
    mesh: TriMesh,
    u: Vec<f64>,
    grad: Vec<Vec2>,
    u_max: f64,
    u_argmax: Vec2,
    residual: f64,
    locator: Locator,
}

impl TorsionSolution {
    pub fn mesh(&self) -> &TriMesh {
        &self.mesh
    }

    /// Nodal values.
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    /// Constant gradient of each triangle.
    pub fn grad(&self) -> &[Vec2] {
        &self.grad
    }

    pub fn u_max(&self) -> f64 {
        self.u_max
    }

    pub fn u_argmax(&self) -> Vec2 {
        self.u_argmax
    }

    pub fn residual(&self) -> f64 {
        self.residual
    }

    /// Piecewise linear interpolant at `x`, `None` outside the mesh.
    pub fn value_at(&self, x: Vec2) -> Option<f64> {
        let (t, w) = self.locator.locate(&self.mesh, x)?;
        let [a, b, c] = self.mesh.triangles()[t];
        Some(w[0] * self.u[a] + w[1] * self.u[b] + w[2] * self.u[c])
    }

    /// Value of the nodal field at the node closest to `x`.
    pub fn nearest_node_value(&self, x: Vec2) -> (usize, f64) {
        let (i, _) = self
            .mesh
            .nodes()
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.dist(x).total_cmp(&b.1.dist(x)))
            .expect("mesh has nodes");
        (i, self.u[i])
    }
}

/// Assembled stiffness matrix over all nodes plus the lumped mass vector.
pub fn assemble(mesh: &TriMesh) -> (Csr, Vec<f64>) {
    let n = mesh.nodes().len();
    let mut entries = Vec::with_capacity(9 * mesh.triangles().len());
    let mut mass = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let p = mesh.triangle_points(t);
        let area = mesh.triangle_area(t);
        let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
        for k in 0..3 {
            mass[tri[k]] += area / 3.0;
            for l in 0..3 {
                entries.push((tri[k], tri[l], e[k].dot(e[l]) / (4.0 * area)));
            }
        }
    }
    (Csr::from_entries(n, entries), mass)
}

/// Gradient of the linear interpolant of nodal values on one triangle.
fn element_gradient(p: [Vec2; 3], v: [f64; 3]) -> Vec2 {
    let area2 = (p[1] - p[0]).cross(p[2] - p[0]);
    let e = [p[2] - p[1], p[0] - p[2], p[1] - p[0]];
    let mut g = Vec2::default();
    for k in 0..3 {
        g += e[k].perp() * (v[k] / area2);
    }
    g
}

pub fn solve_torsion(mesh: TriMesh) -> Result<TorsionSolution> {
    let n = mesh.nodes().len();
    let boundary = mesh.is_boundary_flags();
    for t in 0..mesh.triangles().len() {
        if !(mesh.triangle_area(t) > 0.0) {
            return Err(Error::Solver(format!("triangle {t} has non-positive area")));
        }
    }
    let (k, mass) = assemble(&mesh);

    let mut interior = vec![usize::MAX; n];
    let mut free = Vec::new();
    for i in 0..n {
        if !boundary[i] {
            interior[i] = free.len();
            free.push(i);
        }
    }
    if free.is_empty() {
        return Err(Error::Solver("mesh has no interior nodes".into()));
    }
    let mut entries = Vec::with_capacity(k.val.len());
    for (ri, &i) in free.iter().enumerate() {
        for (j, v) in k.row(i) {
            if interior[j] != usize::MAX {
                entries.push((ri, interior[j], v));
            }
        }
    }
    let kii = Csr::from_entries(free.len(), entries);
    let rhs: Vec<f64> = free.iter().map(|&i| mass[i]).collect();
    let sol = if n <= DIRECT_SOLVER_LIMIT {
        solve_cholesky(&kii, &rhs, SOLVER_RTOL)?
    } else {
        solve_pcg(&kii, &rhs, SOLVER_RTOL, 20 * free.len())?
    };
    let residual = relative_residual(&kii, &sol, &rhs);

    let mut u = vec![0.0; n];
    for (ri, &i) in free.iter().enumerate() {
        u[i] = sol[ri];
    }
    let grad = (0..mesh.triangles().len())
        .map(|t| {
            let [a, b, c] = mesh.triangles()[t];
            element_gradient(mesh.triangle_points(t), [u[a], u[b], u[c]])
        })
        .collect();
    let (imax, u_max) = u
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    let u_argmax = mesh.nodes()[imax];
    let locator = Locator::new(&mesh);
    Ok(TorsionSolution { mesh, u, grad, u_max, u_argmax, residual, locator })
}

/// Probe depths for the boundary gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeDepths {
    /// Multiples of the local boundary edge length.
    EdgeMultiples(Vec<f64>),
    /// Fixed depths in length units.
    Absolute(Vec<f64>),
}

impl Default for ProbeDepths {
    fn default() -> Self {
        ProbeDepths::EdgeMultiples(vec![8.0, 4.0])
    }
}

impl ProbeDepths {
    fn values(&self) -> &[f64] {
        match self {
            ProbeDepths::EdgeMultiples(v) | ProbeDepths::Absolute(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSample {
    pub z: Vec2,
    /// Inward unit normal.
    pub normal: Vec2,
    /// Extrapolated boundary gradient.
    pub g: f64,
    /// Plain ratio `u(z + δ n)/δ` at the smallest depth used.
    pub single_ratio: f64,
    /// Length of the mesh boundary edge holding `z`.
    pub local_edge: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryGradientProfile {
    pub samples: Vec<ProbeSample>,
    pub g_max: f64,
    pub z_max: Vec2,
}

/// Mesh boundary edge lengths per polygon edge, keyed by start parameter.
fn boundary_edge_table(mesh: &TriMesh) -> Vec<Vec<(f64, f64, f64)>> {
    let poly = mesh.polygon();
    let mut table = vec![Vec::new(); poly.len()];
    for e in mesh.boundary_edges() {
        let (a, b) = poly.edge(e.polygon_edge);
        let d = b - a;
        let len2 = d.norm2();
        let pa = mesh.nodes()[e.a];
        let pb = mesh.nodes()[e.b];
        let ta = (pa - a).dot(d) / len2;
        let tb = (pb - a).dot(d) / len2;
        table[e.polygon_edge].push((ta.min(tb), ta.max(tb), pa.dist(pb)));
    }
    for row in &mut table {
        row.sort_by(|x, y| x.0.total_cmp(&y.0));
    }
    table
}

fn local_edge_length(table: &[Vec<(f64, f64, f64)>], k: usize, t: f64) -> f64 {
    let row = &table[k];
    let j = row.partition_point(|e| e.0 <= t).saturating_sub(1);
    row.get(j).map_or(0.0, |e| e.2)
}

/// Boundary gradient by inward probes at `n_samples` points of uniform
/// arclength, Richardson-extrapolated from the two smallest valid depths.
pub fn boundary_gradient(
    sol: &TorsionSolution,
    p: &ConvexPolygon,
    n_samples: usize,
    depths: &ProbeDepths,
) -> Result<BoundaryGradientProfile> {
    if p.vertices() != sol.mesh.polygon().vertices() {
        return Err(Error::InvalidInput("polygon does not match the solution mesh".into()));
    }
    if n_samples == 0 {
        return Err(Error::InvalidInput("need at least one boundary sample".into()));
    }
    let dv = depths.values();
    if dv.len() < 2 || dv.windows(2).any(|w| !(w[0] > w[1])) || dv.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::InvalidInput("probe depths must be positive and strictly decreasing".into()));
    }
    let table = boundary_edge_table(&sol.mesh);
    let perimeter = p.perimeter();
    let m = p.len();

    let mut samples = Vec::with_capacity(n_samples);
    for j in 0..n_samples {
        let s = perimeter * j as f64 / n_samples as f64;
        let (z, k, t) = p.point_at_arclength(s);
        let inward = |k: usize| -p.outward_normal(k);
        let (normal, local_edge) = if t <= 1e-12 {
            let prev = (k + m - 1) % m;
            (
                (inward(k) + inward(prev)).normalized(),
                local_edge_length(&table, k, 0.0).max(local_edge_length(&table, prev, 1.0)),
            )
        } else if t >= 1.0 - 1e-12 {
            let next = (k + 1) % m;
            (
                (inward(k) + inward(next)).normalized(),
                local_edge_length(&table, k, 1.0).max(local_edge_length(&table, next, 0.0)),
            )
        } else {
            (inward(k), local_edge_length(&table, k, t))
        };

        let mut ratios: Vec<(f64, f64)> = Vec::with_capacity(dv.len());
        for &d in dv {
            let delta = match depths {
                ProbeDepths::EdgeMultiples(_) => d * local_edge,
                ProbeDepths::Absolute(_) => d,
            };
            if delta < 2.0 * local_edge {
                continue;
            }
            let x = z + normal * delta;
            let u = sol.value_at(x).ok_or(Error::ProbeOutside { x: x.x, y: x.y })?;
            ratios.push((delta, u / delta));
        }
        if ratios.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "fewer than two probe depths reach 2× the local edge length at ({}, {})",
                z.x, z.y
            )));
        }
        let (d1, r1) = ratios[ratios.len() - 2];
        let (d2, r2) = ratios[ratios.len() - 1];
        let g = ((d1 * r2 - d2 * r1) / (d1 - d2)).max(0.0);
        samples.push(ProbeSample { z, normal, g, single_ratio: r2, local_edge });
    }
    let best = samples
        .iter()
        .fold(&samples[0], |b, s| if s.g > b.g { s } else { b });
    Ok(BoundaryGradientProfile { g_max: best.g, z_max: best.z, samples })
}

/// Supremum of `|∇u|` from the boundary probe and the element gradients.
///
/// Triangles touching the boundary are left to the probe: their constant
/// gradient carries the O(h) trace error that the probe is there to avoid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupGradient {
    pub g_max: f64,
    pub z_max: Vec2,
    pub boundary_max: f64,
    /// Largest element gradient over triangles without a boundary node.
    pub interior_max: f64,
    /// Whether the boundary value is at least the interior value up to
    /// `1e-3·g_max`.
    pub attained_on_boundary: bool,
}

pub fn sup_gradient(sol: &TorsionSolution, profile: &BoundaryGradientProfile) -> SupGradient {
    let flags = sol.mesh.is_boundary_flags();
    let (tmax, interior_max) = sol
        .grad
        .iter()
        .enumerate()
        .filter(|(t, _)| sol.mesh.triangles()[*t].iter().all(|&i| !flags[i]))
        .fold((0, 0.0_f64), |acc, (t, g)| if g.norm() > acc.1 { (t, g.norm()) } else { acc });
    let boundary_max = profile.g_max;
    let (g_max, z_max) = if boundary_max >= interior_max {
        (boundary_max, profile.z_max)
    } else {
        let p = sol.mesh.triangle_points(tmax);
        (interior_max, (p[0] + p[1] + p[2]) * (1.0 / 3.0))
    };
    SupGradient {
        g_max,
        z_max,
        boundary_max,
        interior_max,
        attained_on_boundary: boundary_max >= interior_max - 1e-3 * g_max,
    }
}

/// Closed contour `{u = c}` of the piecewise linear solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelCurve {
    pub level: f64,
    /// Counterclockwise vertices, each on a mesh edge.
    pub points: Vec<Vec2>,
}

impl LevelCurve {
    pub fn area(&self) -> f64 {
        signed_area(&self.points)
    }

    /// `(hull area − enclosed area) / enclosed area`.
    pub fn convexity_defect(&self) -> f64 {
        let a = self.area();
        (signed_area(&convex_hull(&self.points)) - a) / a
    }

    /// The curve as a polygon, if it is convex.
    pub fn to_polygon(&self) -> Result<ConvexPolygon> {
        ConvexPolygon::with_collinear(self.points.clone())
    }
}

/// Marching-triangles contour of `u = c`.
pub fn superlevel_curve(sol: &TorsionSolution, c: f64) -> Result<LevelCurve> {
    if !(c > 0.0 && c < sol.u_max) {
        return Err(Error::InvalidInput(format!("level {c} outside (0, {})", sol.u_max)));
    }
    let mesh = &sol.mesh;
    let u = &sol.u;
    let nodes = mesh.nodes();
    let above = |i: usize| u[i] >= c;

    let mut point_id: HashMap<(usize, usize), usize> = HashMap::new();
    let mut points: Vec<Vec2> = Vec::new();
    // Each crossing point has one outgoing link in the counterclockwise walk.
    let mut next: Vec<usize> = Vec::new();
    let mut id_of = |a: usize, b: usize, points: &mut Vec<Vec2>, next: &mut Vec<usize>| -> usize {
        let key = (a.min(b), a.max(b));
        *point_id.entry(key).or_insert_with(|| {
            let (lo, hi) = if above(key.0) { (key.1, key.0) } else { (key.0, key.1) };
            let s = (c - u[lo]) / (u[hi] - u[lo]);
            points.push(nodes[lo].lerp(nodes[hi], s));
            next.push(usize::MAX);
            points.len() - 1
        })
    };

    for tri in mesh.triangles() {
        let inside = [above(tri[0]), above(tri[1]), above(tri[2])];
        let count = inside.iter().filter(|&&b| b).count();
        if count == 0 || count == 3 {
            continue;
        }
        // Rotate so the odd vertex is first.
        let odd = (0..3)
            .find(|&k| inside[k] != inside[(k + 1) % 3] && inside[k] != inside[(k + 2) % 3])
            .expect("one vertex differs");
        let (a, b, cc) = (tri[odd], tri[(odd + 1) % 3], tri[(odd + 2) % 3]);
        let pab = id_of(a, b, &mut points, &mut next);
        let pac = id_of(a, cc, &mut points, &mut next);
        // Keep the superlevel set on the left of each link.
        let (from, to) = if inside[odd] { (pab, pac) } else { (pac, pab) };
        if next[from] != usize::MAX {
            return Err(Error::Contour("contour branches at a crossing point".into()));
        }
        next[from] = to;
    }
    if points.is_empty() {
        return Err(Error::Contour(format!("no crossing for level {c}")));
    }
    if next.iter().any(|&n| n == usize::MAX) {
        return Err(Error::Contour("open contour".into()));
    }
    let mut loop_pts = Vec::with_capacity(points.len());
    let mut i = 0;
    loop {
        loop_pts.push(points[i]);
        i = next[i];
        if i == 0 {
            break;
        }
        if loop_pts.len() > points.len() {
            return Err(Error::Contour("malformed contour".into()));
        }
    }
    if loop_pts.len() != points.len() {
        return Err(Error::Contour(format!(
            "level set is disconnected ({} of {} crossing points on the first loop)",
            loop_pts.len(),
            points.len()
        )));
    }
    if signed_area(&loop_pts) < 0.0 {
        loop_pts.reverse();
    }
    Ok(LevelCurve { level: c, points: loop_pts })
}

/// Outcome of the discrete subharmonicity test of `|∇u|²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubharmonicityReport {
    pub violation_fraction: f64,
    pub deep_nodes: usize,
    pub violations: usize,
    /// Largest nodal `|∇u|²` at graph distance ≥ 2 from the boundary.
    pub deep_max: f64,
    /// Largest nodal `|∇u|²` at graph distance ≤ 1.
    pub boundary_adjacent_max: f64,
}

fn adjacency(mesh: &TriMesh) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); mesh.nodes().len()];
    for (a, b) in mesh.edges() {
        adj[a].push(b);
        adj[b].push(a);
    }
    adj
}

/// Nodes within `rings` edges of `i`, sorted.
fn patch(adj: &[Vec<usize>], i: usize, rings: usize) -> Vec<usize> {
    let mut set = vec![i];
    let mut frontier = vec![i];
    for _ in 0..rings {
        let mut next = Vec::new();
        for &j in &frontier {
            for &k in &adj[j] {
                if !set.contains(&k) {
                    set.push(k);
                    next.push(k);
                }
            }
        }
        frontier = next;
    }
    set.sort_unstable();
    set
}

/// Least-squares quadratic `c0 + c1 x + c2 y + c3 x² + c4 xy + c5 y²` in
/// coordinates relative to `centre`; `scale` only conditions the system.
fn quadratic_fit(centre: Vec2, pts: &[Vec2], vals: &[f64], scale: f64) -> Option<[f64; 6]> {
    let mut a = [[0.0; 7]; 6];
    for (p, v) in pts.iter().zip(vals) {
        let d = (*p - centre) * (1.0 / scale);
        let phi = [1.0, d.x, d.y, d.x * d.x, d.x * d.y, d.y * d.y];
        for r in 0..6 {
            for q in 0..6 {
                a[r][q] += phi[r] * phi[q];
            }
            a[r][6] += phi[r] * v;
        }
    }
    for col in 0..6 {
        let piv = (col..6).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..6 {
            if r != col {
                let f = a[r][col] / a[col][col];
                for q in col..7 {
                    a[r][q] -= f * a[col][q];
                }
            }
        }
    }
    let c: Vec<f64> = (0..6).map(|r| a[r][6] / a[r][r]).collect();
    let s2 = scale * scale;
    Some([c[0], c[1] / scale, c[2] / scale, c[3] / s2, c[4] / s2, c[5] / s2])
}

/// Nodal `|∇u|²` from a quadratic least-squares fit of `u` over the
/// two-ring patch of each node. Falls back to the area-weighted element
/// average where the patch is too small for a fit.
pub fn nodal_gradient_sq(sol: &TorsionSolution) -> Vec<f64> {
    let mesh = &sol.mesh;
    let adj = adjacency(mesh);
    let nodes = mesh.nodes();
    let averaged = area_weighted_gradient_sq(sol);
    (0..nodes.len())
        .map(|i| {
            let p = patch(&adj, i, 2);
            let pts: Vec<Vec2> = p.iter().map(|&j| nodes[j]).collect();
            let vals: Vec<f64> = p.iter().map(|&j| sol.u[j]).collect();
            match quadratic_fit(nodes[i], &pts, &vals, mesh.h_target()) {
                Some(c) if p.len() >= 9 => c[1] * c[1] + c[2] * c[2],
                _ => averaged[i],
            }
        })
        .collect()
}

/// Area-weighted nodal average of the element values `|∇u|²`.
pub fn area_weighted_gradient_sq(sol: &TorsionSolution) -> Vec<f64> {
    let mesh = &sol.mesh;
    let n = mesh.nodes().len();
    let mut acc = vec![0.0; n];
    let mut wsum = vec![0.0; n];
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let a = mesh.triangle_area(t);
        let g2 = sol.grad[t].norm2();
        for &i in tri {
            acc[i] += a * g2;
            wsum[i] += a;
        }
    }
    acc.iter().zip(&wsum).map(|(a, w)| a / w).collect()
}

/// Graph distance of every node to the boundary.
pub fn boundary_distance(mesh: &TriMesh) -> Vec<usize> {
    let adj = adjacency(mesh);
    let mut dist = vec![usize::MAX; adj.len()];
    let mut queue = VecDeque::new();
    for &b in mesh.boundary_nodes() {
        dist[b] = 0;
        queue.push_back(b);
    }
    while let Some(i) = queue.pop_front() {
        for &j in &adj[i] {
            if dist[j] == usize::MAX {
                dist[j] = dist[i] + 1;
                queue.push_back(j);
            }
        }
    }
    dist
}

/// Laplacian of the recovered `|∇u|²` at each deep node (graph distance
/// ≥ 2 from the boundary), read off a quadratic least-squares fit over the
/// three-ring patch; `None` at shallower nodes. A failed fit gives −∞.
pub fn gradient_sq_laplacian(sol: &TorsionSolution) -> Vec<Option<f64>> {
    let mesh = &sol.mesh;
    let nodes = mesh.nodes();
    let w = nodal_gradient_sq(sol);
    let adj = adjacency(mesh);
    let dist = boundary_distance(mesh);
    (0..w.len())
        .map(|i| {
            (dist[i] >= 2).then(|| {
                let p = patch(&adj, i, 3);
                let pts: Vec<Vec2> = p.iter().map(|&j| nodes[j]).collect();
                let vals: Vec<f64> = p.iter().map(|&j| w[j]).collect();
                quadratic_fit(nodes[i], &pts, &vals, mesh.h_target()).map_or(f64::NEG_INFINITY, |c| 2.0 * (c[3] + c[5]))
            })
        })
        .collect()
}

/// Fraction of deep nodes where the Laplacian of the recovered `|∇u|²`
/// drops below `−SUBHARMONIC_TOL`.
pub fn subharmonicity_check(sol: &TorsionSolution) -> SubharmonicityReport {
    let w = nodal_gradient_sq(sol);
    let lap = gradient_sq_laplacian(sol);
    let mut deep = 0usize;
    let mut violations = 0usize;
    let mut deep_max = 0.0_f64;
    let mut edge_max = 0.0_f64;
    for (wi, li) in w.iter().zip(&lap) {
        match li {
            None => edge_max = edge_max.max(*wi),
            Some(l) => {
                deep += 1;
                deep_max = deep_max.max(*wi);
                if *l < -SUBHARMONIC_TOL {
                    violations += 1;
                }
            }
        }
    }
    SubharmonicityReport {
        violation_fraction: if deep == 0 { 0.0 } else { violations as f64 / deep as f64 },
        deep_nodes: deep,
        violations,
        deep_max,
        boundary_adjacent_max: edge_max,
    }
}
