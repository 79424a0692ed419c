//! Reference penetration depths that share no traversal code with the
//! solver: an exact support-function search for convex pairs and a
//! directional sweep over exact ray casts for arbitrary soups.

use std::collections::HashSet;

use crate::error::OracleError;
pub use crate::geometry::fibonacci_sphere as fibonacci_directions;
use crate::geometry::{raw_normal, Vec3};
use crate::mesh::TriangleMesh;
use crate::proximity::PosedBody;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OracleMethod {
    ConvexHull,
    DirectionalSampling,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleResult {
    pub pd_vector: Vec3,
    pub magnitude: f64,
    pub method: OracleMethod,
    pub direction_count: usize,
}

struct Posed {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    edges: Vec<(u32, u32)>,
}

fn posed(body: &PosedBody, offset: &Vec3) -> Posed {
    let mesh = body.mesh();
    let vertices: Vec<Vec3> = (0..mesh.vertices().len())
        .map(|i| body.vertex(i) + offset)
        .collect();
    let triangles: Vec<[u32; 3]> = mesh
        .valid_triangles()
        .map(|t| mesh.triangles()[t])
        .collect();
    let mut seen = HashSet::new();
    let mut edges = Vec::new();
    for t in &triangles {
        for k in 0..3 {
            let (u, w) = (t[k], t[(k + 1) % 3]);
            let e = (u.min(w), u.max(w));
            if seen.insert(e) {
                edges.push(e);
            }
        }
    }
    Posed {
        vertices,
        triangles,
        edges,
    }
}

fn check_convex(p: &Posed, mesh: &TriangleMesh) -> Result<(), OracleError> {
    let tol = 1e-9 * mesh.bounding_radius();
    for (f, t) in p.triangles.iter().enumerate() {
        let tri = t.map(|i| p.vertices[i as usize]);
        let n = raw_normal(&tri).normalize();
        for (v, x) in p.vertices.iter().enumerate() {
            let excess = n.dot(&(x - tri[0]));
            if excess > tol {
                return Err(OracleError::NonConvex {
                    face: f,
                    vertex: v,
                    excess,
                });
            }
        }
    }
    Ok(())
}

fn support(vertices: &[Vec3], n: &Vec3) -> f64 {
    vertices
        .iter()
        .map(|v| v.dot(n))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Exact depth of two convex bodies: the smallest support value of the
/// difference set `A - B` over its candidate facet normals (faces of each
/// body and cross products of edge pairs). Zero when the bodies are apart.
pub fn convex_pd(a: &PosedBody, qa: &Vec3, b: &PosedBody) -> Result<OracleResult, OracleError> {
    let pa = posed(a, qa);
    let pb = posed(b, &Vec3::zeros());
    check_convex(&pa, a.mesh())?;
    check_convex(&pb, b.mesh())?;
    let mut candidates: Vec<Vec3> = Vec::new();
    for t in &pa.triangles {
        candidates.push(raw_normal(&t.map(|i| pa.vertices[i as usize])));
    }
    for t in &pb.triangles {
        candidates.push(-raw_normal(&t.map(|i| pb.vertices[i as usize])));
    }
    for ea in &pa.edges {
        let da = pa.vertices[ea.1 as usize] - pa.vertices[ea.0 as usize];
        for eb in &pb.edges {
            let db = pb.vertices[eb.1 as usize] - pb.vertices[eb.0 as usize];
            let c = da.cross(&db);
            if c.norm() > 1e-12 * da.norm() * db.norm() {
                candidates.push(c);
                candidates.push(-c);
            }
        }
    }
    let mut best = (f64::INFINITY, Vec3::zeros());
    for n in candidates {
        let n = n.normalize();
        let h = support(&pa.vertices, &n) + support(&pb.vertices, &-n);
        if h < best.0 {
            best = (h, n);
        }
    }
    let magnitude = best.0.max(0.0);
    Ok(OracleResult {
        pd_vector: -best.1 * magnitude,
        magnitude,
        method: OracleMethod::ConvexHull,
        direction_count: 0,
    })
}

/// Uniform grid over the projections of primitives on a plane.
struct Bins {
    min: [f64; 2],
    inv: [f64; 2],
    size: usize,
    cells: Vec<Vec<u32>>,
}

impl Bins {
    fn new(min: [f64; 2], max: [f64; 2], size: usize) -> Self {
        let inv = [0, 1].map(|k| {
            let w = max[k] - min[k];
            if w > 0.0 {
                size as f64 / w
            } else {
                0.0
            }
        });
        Self {
            min,
            inv,
            size,
            cells: vec![Vec::new(); size * size],
        }
    }

    fn cell(&self, x: f64, k: usize) -> usize {
        (((x - self.min[k]) * self.inv[k]).floor().max(0.0) as usize).min(self.size - 1)
    }

    fn range(&self, lo: [f64; 2], hi: [f64; 2]) -> (usize, usize, usize, usize) {
        (
            self.cell(lo[0], 0),
            self.cell(hi[0], 0),
            self.cell(lo[1], 1),
            self.cell(hi[1], 1),
        )
    }

    fn insert(&mut self, id: u32, lo: [f64; 2], hi: [f64; 2]) {
        let (x0, x1, y0, y1) = self.range(lo, hi);
        for y in y0..=y1 {
            for x in x0..=x1 {
                self.cells[y * self.size + x].push(id);
            }
        }
    }

    fn at(&self, p: [f64; 2]) -> &[u32] {
        &self.cells[self.cell(p[1], 1) * self.size + self.cell(p[0], 0)]
    }
}

type P2 = [f64; 2];

fn bbox(points: &[P2]) -> (P2, P2) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}

fn cross2(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Barycentric weights of `p` in the projected triangle, if inside.
fn inside(p: P2, t: [P2; 3]) -> Option<[f64; 3]> {
    let area = cross2(t[0], t[1], t[2]);
    if area.abs() < 1e-300 {
        return None;
    }
    let w0 = cross2(t[1], t[2], p) / area;
    let w1 = cross2(t[2], t[0], p) / area;
    let w2 = 1.0 - w0 - w1;
    let slack = -1e-12;
    (w0 >= slack && w1 >= slack && w2 >= slack).then_some([w0, w1, w2])
}

/// Parameters where two projected segments cross, if they do.
fn segments_cross(p0: P2, p1: P2, r0: P2, r1: P2) -> Option<(f64, f64)> {
    let d1 = [p1[0] - p0[0], p1[1] - p0[1]];
    let d2 = [r1[0] - r0[0], r1[1] - r0[1]];
    let den = d1[0] * d2[1] - d1[1] * d2[0];
    if den.abs() < 1e-300 {
        return None;
    }
    let w = [r0[0] - p0[0], r0[1] - p0[1]];
    let s = (w[0] * d2[1] - w[1] * d2[0]) / den;
    let t = (w[0] * d1[1] - w[1] * d1[0]) / den;
    (-1e-12..=1.0 + 1e-12).contains(&s).then_some(())?;
    (-1e-12..=1.0 + 1e-12).contains(&t).then_some((s, t))
}

/// Largest `t` at which `A` translated by `t * u` still touches `B`.
fn last_contact(pa: &Posed, pb: &Posed, u: &Vec3) -> f64 {
    let e1 = u
        .cross(&if u.x.abs() < 0.9 {
            Vec3::x()
        } else {
            Vec3::y()
        })
        .normalize();
    let e2 = u.cross(&e1);
    let proj = |p: &Vec3| [p.dot(&e1), p.dot(&e2)];
    let a2: Vec<P2> = pa.vertices.iter().map(proj).collect();
    let b2: Vec<P2> = pb.vertices.iter().map(proj).collect();
    let (lo_a, hi_a) = bbox(&a2);
    let (lo_b, hi_b) = bbox(&b2);
    let lo = [lo_a[0].max(lo_b[0]), lo_a[1].max(lo_b[1])];
    let hi = [hi_a[0].min(hi_b[0]), hi_a[1].min(hi_b[1])];
    if lo[0] > hi[0] || lo[1] > hi[1] {
        return f64::NEG_INFINITY;
    }
    let n = pa.triangles.len().max(pb.triangles.len());
    let size = ((n as f64).sqrt() as usize).clamp(1, 256);
    let tri2 = |verts: &[P2], t: &[u32; 3]| t.map(|i| verts[i as usize]);
    let mut best = f64::NEG_INFINITY;

    // vertices of one body against faces of the other
    for (from, from2, to, to2, sign) in [(pa, &a2, pb, &b2, 1.0), (pb, &b2, pa, &a2, -1.0)] {
        let mut bins = Bins::new(lo, hi, size);
        for (i, t) in to.triangles.iter().enumerate() {
            let (l, h) = bbox(&tri2(to2, t));
            if l[0] <= hi[0] && l[1] <= hi[1] && h[0] >= lo[0] && h[1] >= lo[1] {
                bins.insert(i as u32, l, h);
            }
        }
        for (v, p) in from2.iter().enumerate() {
            if p[0] < lo[0] || p[0] > hi[0] || p[1] < lo[1] || p[1] > hi[1] {
                continue;
            }
            for &ti in bins.at(*p) {
                let t = &to.triangles[ti as usize];
                if let Some(w) = inside(*p, tri2(to2, t)) {
                    let hit = to.vertices[t[0] as usize] * w[0]
                        + to.vertices[t[1] as usize] * w[1]
                        + to.vertices[t[2] as usize] * w[2];
                    best = best.max(sign * u.dot(&(hit - from.vertices[v])));
                }
            }
        }
    }

    // edges against edges
    let mut bins = Bins::new(lo, hi, size);
    for (i, e) in pb.edges.iter().enumerate() {
        let (l, h) = bbox(&[b2[e.0 as usize], b2[e.1 as usize]]);
        if l[0] <= hi[0] && l[1] <= hi[1] && h[0] >= lo[0] && h[1] >= lo[1] {
            bins.insert(i as u32, l, h);
        }
    }
    let mut stamp = vec![usize::MAX; pb.edges.len()];
    for (ia, e) in pa.edges.iter().enumerate() {
        let (p0, p1) = (a2[e.0 as usize], a2[e.1 as usize]);
        let (l, h) = bbox(&[p0, p1]);
        if l[0] > hi[0] || l[1] > hi[1] || h[0] < lo[0] || h[1] < lo[1] {
            continue;
        }
        let (x0, x1, y0, y1) = bins.range(l, h);
        for y in y0..=y1 {
            for x in x0..=x1 {
                for &ib in &bins.cells[y * bins.size + x] {
                    if stamp[ib as usize] == ia {
                        continue;
                    }
                    stamp[ib as usize] = ia;
                    let f = pb.edges[ib as usize];
                    if let Some((s, t)) = segments_cross(p0, p1, b2[f.0 as usize], b2[f.1 as usize])
                    {
                        let pa3 = pa.vertices[e.0 as usize].lerp(&pa.vertices[e.1 as usize], s);
                        let pb3 = pb.vertices[f.0 as usize].lerp(&pb.vertices[f.1 as usize], t);
                        best = best.max(u.dot(&(pb3 - pa3)));
                    }
                }
            }
        }
    }
    best
}

/// Upper bound on the depth from the minimum over `directions` unit
/// directions of the distance `A` must travel along each to leave `B`.
pub fn sampled_pd(a: &PosedBody, qa: &Vec3, b: &PosedBody, directions: usize) -> OracleResult {
    let pa = posed(a, qa);
    let pb = posed(b, &Vec3::zeros());
    let mut best = (f64::INFINITY, Vec3::zeros());
    for u in fibonacci_directions(directions) {
        let t = last_contact(&pa, &pb, &u).max(0.0);
        if t < best.0 {
            best = (t, u);
        }
    }
    OracleResult {
        pd_vector: best.1 * best.0,
        magnitude: best.0,
        method: OracleMethod::DirectionalSampling,
        direction_count: directions,
    }
}

/// `|approx - exact| / (2 vbar_A + 2 vbar_B)` with `vbar` the mean vertex
/// distance from each model's origin.
pub fn relative_error(
    approx: f64,
    exact: f64,
    a: &TriangleMesh,
    b: &TriangleMesh,
) -> Result<f64, OracleError> {
    let den = 2.0 * a.mean_vertex_magnitude() + 2.0 * b.mean_vertex_magnitude();
    if !(den > 0.0) {
        return Err(OracleError::ZeroDenominator);
    }
    Ok((approx - exact).abs() / den)
}
