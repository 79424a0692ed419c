//! Static queries between a translated body `A` and a fixed body `B`.

use std::borrow::Cow;
use std::collections::HashSet;

use nalgebra::Rotation3;

use crate::bvh::{node_distance, Bvh, Capsule};
use crate::error::{BvhError, QueryError};
use crate::geometry::{
    closest_point_on_triangle, closest_points_segments, pair_status, raw_normal, triangle_distance,
    triangles_interpenetrate, PairStatus, Tri, TriRegion, Vec3,
};
use crate::mesh::TriangleMesh;

pub const DEFAULT_EPSILON_SCALE: f64 = 1e-5;
pub const DEFAULT_FEATURE_CAP: usize = 16;

/// A mesh together with its hierarchy.
#[derive(Debug, Clone)]
pub struct Body {
    pub mesh: TriangleMesh,
    pub bvh: Bvh,
}

impl Body {
    pub fn new(mesh: TriangleMesh) -> Result<Self, BvhError> {
        let bvh = Bvh::build(&mesh)?;
        Ok(Self { mesh, bvh })
    }
}

/// A body under a fixed orientation. Vertices and node volumes are rotated
/// once up front; queries then only add a translation.
#[derive(Debug, Clone)]
pub struct PosedBody<'a> {
    pub body: &'a Body,
    pub rotation: Rotation3<f64>,
    vertices: Cow<'a, [Vec3]>,
    volumes: Vec<Capsule>,
    aabb: (Vec3, Vec3),
}

impl<'a> PosedBody<'a> {
    pub fn new(body: &'a Body, rotation: Rotation3<f64>) -> Self {
        let identity = rotation == Rotation3::identity();
        let vertices = if identity {
            Cow::Borrowed(body.mesh.vertices())
        } else {
            Cow::Owned(body.mesh.vertices().iter().map(|v| rotation * v).collect())
        };
        let volumes = body
            .bvh
            .nodes()
            .iter()
            .map(|n| {
                if identity {
                    n.volume
                } else {
                    n.volume.transformed(&rotation, &Vec3::zeros())
                }
            })
            .collect();
        let aabb = vertices.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), v| (lo.inf(v), hi.sup(v)),
        );
        Self {
            body,
            rotation,
            vertices,
            volumes,
            aabb,
        }
    }

    /// Box around the rotated vertices, before translation.
    pub fn aabb(&self) -> (Vec3, Vec3) {
        self.aabb
    }

    pub fn fixed(body: &'a Body) -> Self {
        Self::new(body, Rotation3::identity())
    }

    pub fn mesh(&self) -> &TriangleMesh {
        &self.body.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.body.bvh
    }

    #[inline]
    pub fn vertex(&self, i: usize) -> Vec3 {
        self.vertices[i]
    }

    #[inline]
    pub fn triangle(&self, i: usize, offset: &Vec3) -> Tri {
        let t = self.body.mesh.triangles()[i];
        [
            self.vertices[t[0] as usize] + offset,
            self.vertices[t[1] as usize] + offset,
            self.vertices[t[2] as usize] + offset,
        ]
    }

    #[inline]
    pub fn volume(&self, node: usize) -> &Capsule {
        &self.volumes[node]
    }

    /// Centroid in the rotated frame, before translation.
    pub fn centroid(&self) -> Vec3 {
        self.rotation * self.body.mesh.centroid()
    }

    pub fn bounding_radius(&self) -> f64 {
        self.body.mesh.bounding_radius()
    }
}

/// Contact tolerance and interpenetration tolerance, in model units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Distance at or below which disjoint bodies count as touching.
    pub contact: f64,
    /// Slack used when deciding whether touching triangles cross.
    pub interpenetration: f64,
}

impl Tolerances {
    pub fn new(contact: f64) -> Self {
        Self {
            contact,
            interpenetration: contact * 1e-5,
        }
    }

    /// `eps_scale * max(r_A, r_B)`.
    pub fn for_bodies(a: &TriangleMesh, b: &TriangleMesh, eps_scale: f64) -> Self {
        Self::new(eps_scale * a.bounding_radius().max(b.bounding_radius()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CollisionStatus {
    Free,
    InContact,
    Penetrating,
}

/// Counters of bounding-volume and primitive pair evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct QueryStats {
    pub bv_tests: u64,
    pub primitive_tests: u64,
}

impl QueryStats {
    pub fn add(&mut self, other: &QueryStats) {
        self.bv_tests += other.bv_tests;
        self.primitive_tests += other.primitive_tests;
    }
}

pub(crate) enum Visit {
    Continue,
    Stop,
}

/// Depth-first walk over node pairs. `keep` decides whether a volume pair
/// is worth descending; `leaf` sees every surviving triangle pair.
pub(crate) fn traverse_pairs(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    stats: &mut QueryStats,
    mut keep: impl FnMut(&Capsule, &Capsule) -> bool,
    mut leaf: impl FnMut(usize, usize) -> Visit,
) {
    let bvh_a = a.bvh();
    let bvh_b = b.bvh();
    let mut stack = vec![(bvh_a.root(), bvh_b.root())];
    while let Some((ia, ib)) = stack.pop() {
        let va = a.volume(ia).translated(qa);
        let vb = b.volume(ib);
        stats.bv_tests += 1;
        if !keep(&va, vb) {
            continue;
        }
        let na = bvh_a.node(ia);
        let nb = bvh_b.node(ib);
        match (bvh_a.children(na), bvh_b.children(nb)) {
            (None, None) => {
                for &ta in bvh_a.triangles_of(na) {
                    for &tb in bvh_b.triangles_of(nb) {
                        stats.primitive_tests += 1;
                        if let Visit::Stop = leaf(ta as usize, tb as usize) {
                            return;
                        }
                    }
                }
            }
            (Some((l, r)), None) => {
                stack.push((l, ib));
                stack.push((r, ib));
            }
            (None, Some((l, r))) => {
                stack.push((ia, l));
                stack.push((ia, r));
            }
            (Some((al, ar)), Some((bl, br))) => {
                if va.radius >= vb.radius {
                    stack.push((al, ib));
                    stack.push((ar, ib));
                } else {
                    stack.push((ia, bl));
                    stack.push((ia, br));
                }
            }
        }
    }
}

/// Penetrating if any triangle pair interpenetrates; in contact if the
/// bodies are otherwise within `tol.contact`; free otherwise.
pub fn classify(a: &PosedBody, qa: &Vec3, b: &PosedBody, tol: &Tolerances) -> CollisionStatus {
    classify_with_stats(a, qa, b, tol, &mut QueryStats::default())
}

pub fn classify_with_stats(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    tol: &Tolerances,
    stats: &mut QueryStats,
) -> CollisionStatus {
    let mut penetrating = false;
    let mut contact = false;
    let reach = std::cell::Cell::new(tol.contact);
    traverse_pairs(
        a,
        qa,
        b,
        stats,
        |va, vb| node_distance(va, vb) <= reach.get(),
        |ia, ib| {
            let ta = a.triangle(ia, qa);
            let tb = b.triangle(ib, &Vec3::zeros());
            if contact {
                if triangles_interpenetrate(&ta, &tb, tol.interpenetration) {
                    penetrating = true;
                    return Visit::Stop;
                }
                return Visit::Continue;
            }
            match pair_status(&ta, &tb, tol.interpenetration, tol.contact) {
                PairStatus::Penetrating => {
                    penetrating = true;
                    return Visit::Stop;
                }
                PairStatus::Near => {
                    contact = true;
                    // only interpenetration can change the answer from here on
                    reach.set(tol.interpenetration);
                }
                PairStatus::Far => {}
            }
            Visit::Continue
        },
    );
    if penetrating {
        CollisionStatus::Penetrating
    } else if contact {
        CollisionStatus::InContact
    } else {
        CollisionStatus::Free
    }
}

/// Closest pair between the bodies.
#[derive(Debug, Clone, Copy)]
pub struct ClosestPair {
    pub distance: f64,
    pub point_a: Vec3,
    pub point_b: Vec3,
    pub triangle_a: usize,
    pub triangle_b: usize,
}

/// Exact minimum triangle-pair distance, zero when triangles touch or cross.
pub fn min_distance(a: &PosedBody, qa: &Vec3, b: &PosedBody) -> ClosestPair {
    min_distance_with_stats(a, qa, b, &mut QueryStats::default())
}

pub fn min_distance_with_stats(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    stats: &mut QueryStats,
) -> ClosestPair {
    let best = std::cell::Cell::new(ClosestPair {
        distance: f64::INFINITY,
        point_a: Vec3::zeros(),
        point_b: Vec3::zeros(),
        triangle_a: 0,
        triangle_b: 0,
    });
    traverse_pairs(
        a,
        qa,
        b,
        stats,
        |va, vb| node_distance(va, vb) < best.get().distance,
        |ia, ib| {
            let d = triangle_distance(&a.triangle(ia, qa), &b.triangle(ib, &Vec3::zeros()));
            if d.distance < best.get().distance {
                best.set(ClosestPair {
                    distance: d.distance,
                    point_a: d.point_a,
                    point_b: d.point_b,
                    triangle_a: ia,
                    triangle_b: ib,
                });
                if d.distance == 0.0 {
                    return Visit::Stop;
                }
            }
            Visit::Continue
        },
    );
    best.get()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKind {
    /// Vertex of `A` against a face of `B`.
    VF,
    /// Face of `A` against a vertex of `B`.
    FV,
    EE,
}

/// Mesh elements involved in a contact. Edges are sorted vertex-id pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureIds {
    VertexFace {
        vertex_a: u32,
        triangle_b: u32,
    },
    FaceVertex {
        triangle_a: u32,
        vertex_b: u32,
    },
    EdgeEdge {
        edge_a: (u32, u32),
        edge_b: (u32, u32),
    },
}

/// One primitive contact and the configuration-space half-space it induces:
/// translations `q` of `A` with `row . q >= bias` keep the pair apart. The
/// boundary plane sits where the gap along `normal` closes, so it lies at
/// most the contact tolerance behind the sampled configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactFeature {
    pub kind: FeatureKind,
    pub ids: FeatureIds,
    pub witness_a: Vec3,
    pub witness_b: Vec3,
    /// Unit contact normal pointing from `B` toward `A`.
    pub normal: Vec3,
    pub row: Vec3,
    pub bias: f64,
    /// Closest distance of the pair at the contact configuration.
    pub gap: f64,
}

impl ContactFeature {
    /// Distance from configuration `o` to this feature's plane.
    pub fn plane_distance(&self, o: &Vec3) -> f64 {
        (self.row.dot(o) - self.bias).abs()
    }

    fn vertex_ids(&self, a_tris: &[[u32; 3]], b_tris: &[[u32; 3]]) -> (Vec<u32>, Vec<u32>) {
        match self.ids {
            FeatureIds::VertexFace {
                vertex_a,
                triangle_b,
            } => (vec![vertex_a], b_tris[triangle_b as usize].to_vec()),
            FeatureIds::FaceVertex {
                triangle_a,
                vertex_b,
            } => (a_tris[triangle_a as usize].to_vec(), vec![vertex_b]),
            FeatureIds::EdgeEdge { edge_a, edge_b } => {
                (vec![edge_a.0, edge_a.1], vec![edge_b.0, edge_b.1])
            }
        }
    }
}

/// Parameters for contact enumeration.
#[derive(Debug, Clone, Copy)]
pub struct FeatureQuery {
    pub tolerances: Tolerances,
    pub feature_cap: usize,
    /// Configuration the plane distances are measured from (sort key).
    pub origin: Vec3,
    /// Direction along which `A` separates from `B`, used to orient normals
    /// when the witness points coincide.
    pub separation_hint: Option<Vec3>,
    /// Size used for the plane-merge tolerance.
    pub scale: f64,
}

/// Cosine of the largest angle between normals that still merge.
const MERGE_COS: f64 = 0.999_999_999_999_5;
/// Relative offset below which EE parameters count as interior.
const EDGE_INTERIOR: f64 = 1e-9;

/// All primitive contacts within the contact tolerance at translation `qa`.
///
/// Parallel-edge pairs are dropped, and vertex-vertex pairs count only when
/// nothing else touches. A vertex whose closest
/// point lies on an edge of a face contributes one vertex-face contact for
/// every face around that edge. Coincident planes are merged and the list is
/// sorted by plane distance from `query.origin`, then truncated to
/// `query.feature_cap`.
pub fn contact_features(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    query: &FeatureQuery,
) -> Result<Vec<ContactFeature>, QueryError> {
    contact_features_with_stats(a, qa, b, query, &mut QueryStats::default())
}

pub fn contact_features_with_stats(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    query: &FeatureQuery,
    stats: &mut QueryStats,
) -> Result<Vec<ContactFeature>, QueryError> {
    let eps = query.tolerances.contact;
    let mut raw = Vec::new();
    let mut penetrating = false;
    let mut near = Vec::new();
    traverse_pairs(
        a,
        qa,
        b,
        stats,
        |va, vb| node_distance(va, vb) <= eps,
        |ia, ib| {
            let ta = a.triangle(ia, qa);
            let tb = b.triangle(ib, &Vec3::zeros());
            match pair_status(&ta, &tb, query.tolerances.interpenetration, eps) {
                PairStatus::Penetrating => {
                    penetrating = true;
                    return Visit::Stop;
                }
                PairStatus::Near => {
                    near.push((ia, ib));
                    pair_features(a, ia, &ta, b, ib, &tb, qa, query, &mut raw);
                }
                PairStatus::Far => {}
            }
            Visit::Continue
        },
    );
    if penetrating || near.is_empty() {
        return Err(QueryError::NotInContact);
    }
    if raw.is_empty() {
        // only corners touch: use the witness direction as the plane normal
        for &(ia, ib) in &near {
            let ta = a.triangle(ia, qa);
            let tb = b.triangle(ib, &Vec3::zeros());
            corner_features(a, ia, &ta, b, ib, &tb, qa, query, &mut raw);
        }
    }
    Ok(finish_features(raw, query))
}

/// Features of a single triangle pair, appended to `out`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn pair_features(
    a: &PosedBody,
    ia: usize,
    ta: &Tri,
    b: &PosedBody,
    ib: usize,
    tb: &Tri,
    qa: &Vec3,
    query: &FeatureQuery,
    out: &mut Vec<ContactFeature>,
) {
    let eps = query.tolerances.contact;
    let ids_a = a.mesh().triangles()[ia];
    let ids_b = b.mesh().triangles()[ib];
    let hint = separation_hint(a, qa, tb, query);
    let mut push = |kind, ids, wa: Vec3, wb: Vec3, axis: Vec3| {
        push_feature(qa, &hint, kind, ids, wa, wb, axis, out)
    };

    let lateral = 1e-9 * query.scale;
    let nb = raw_normal(tb);
    for k in 0..3 {
        let p = ta[k];
        let (cp, region) = closest_point_on_triangle(&p, tb);
        if (p - cp).norm() > eps || !face_region(&p, &cp, region, &nb, lateral) {
            continue;
        }
        push(
            FeatureKind::VF,
            FeatureIds::VertexFace {
                vertex_a: ids_a[k],
                triangle_b: ib as u32,
            },
            p,
            cp,
            nb,
        );
    }
    let na = raw_normal(ta);
    for k in 0..3 {
        let p = tb[k];
        let (cp, region) = closest_point_on_triangle(&p, ta);
        if (p - cp).norm() > eps || !face_region(&p, &cp, region, &na, lateral) {
            continue;
        }
        push(
            FeatureKind::FV,
            FeatureIds::FaceVertex {
                triangle_a: ia as u32,
                vertex_b: ids_b[k],
            },
            cp,
            p,
            na,
        );
    }
    for i in 0..3 {
        let (pa, qa_) = (ta[i], ta[(i + 1) % 3]);
        let ea = qa_ - pa;
        for j in 0..3 {
            let (pb, qb) = (tb[j], tb[(j + 1) % 3]);
            let eb = qb - pb;
            let cross = ea.cross(&eb);
            if cross.norm() <= 1e-9 * ea.norm() * eb.norm() {
                continue;
            }
            let (s, t, c1, c2) = closest_points_segments(&pa, &qa_, &pb, &qb);
            let interior = |x: f64| x > EDGE_INTERIOR && x < 1.0 - EDGE_INTERIOR;
            if !interior(s) || !interior(t) || (c1 - c2).norm() > eps {
                continue;
            }
            let edge = |u: u32, w: u32| (u.min(w), u.max(w));
            push(
                FeatureKind::EE,
                FeatureIds::EdgeEdge {
                    edge_a: edge(ids_a[i], ids_a[(i + 1) % 3]),
                    edge_b: edge(ids_b[j], ids_b[(j + 1) % 3]),
                },
                c1,
                c2,
                cross,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn push_feature(
    qa: &Vec3,
    hint: &Vec3,
    kind: FeatureKind,
    ids: FeatureIds,
    wa: Vec3,
    wb: Vec3,
    axis: Vec3,
    out: &mut Vec<ContactFeature>,
) {
    let gap = (wa - wb).norm();
    let mut n = axis.normalize();
    let s = n.dot(&(wa - wb));
    let flip = if gap > 0.0 && s.abs() > 1e-6 * gap {
        s < 0.0
    } else {
        n.dot(hint) < 0.0
    };
    if flip {
        n = -n;
    }
    out.push(ContactFeature {
        kind,
        ids,
        witness_a: wa,
        witness_b: wb,
        normal: n,
        row: n,
        // plane through the touching configuration, not the sample
        bias: n.dot(qa) - n.dot(&(wa - wb)),
        gap,
    });
}

/// Vertex-vertex touches, which no face or edge interior sees. Each is
/// emitted as a vertex-face row along the witness offset.
#[allow(clippy::too_many_arguments)]
fn corner_features(
    a: &PosedBody,
    ia: usize,
    ta: &Tri,
    b: &PosedBody,
    ib: usize,
    tb: &Tri,
    qa: &Vec3,
    query: &FeatureQuery,
    out: &mut Vec<ContactFeature>,
) {
    let eps = query.tolerances.contact;
    let ids_a = a.mesh().triangles()[ia];
    let ids_b = b.mesh().triangles()[ib];
    let hint = separation_hint(a, qa, tb, query);
    let axis = |p: &Vec3, cp: &Vec3, n: Vec3| {
        let off = p - cp;
        if off.norm() > 0.0 {
            off
        } else {
            n
        }
    };
    for k in 0..3 {
        let (cp, region) = closest_point_on_triangle(&ta[k], tb);
        if region == TriRegion::Face || (ta[k] - cp).norm() > eps {
            continue;
        }
        let ids = FeatureIds::VertexFace {
            vertex_a: ids_a[k],
            triangle_b: ib as u32,
        };
        push_feature(
            qa,
            &hint,
            FeatureKind::VF,
            ids,
            ta[k],
            cp,
            axis(&ta[k], &cp, raw_normal(tb)),
            out,
        );
    }
    for k in 0..3 {
        let (cp, region) = closest_point_on_triangle(&tb[k], ta);
        if region == TriRegion::Face || (tb[k] - cp).norm() > eps {
            continue;
        }
        let ids = FeatureIds::FaceVertex {
            triangle_a: ia as u32,
            vertex_b: ids_b[k],
        };
        push_feature(
            qa,
            &hint,
            FeatureKind::FV,
            ids,
            cp,
            tb[k],
            axis(&cp, &tb[k], raw_normal(ta)),
            out,
        );
    }
}

/// Direction used to orient a normal when the witnesses coincide.
fn separation_hint(a: &PosedBody, qa: &Vec3, tb: &Tri, query: &FeatureQuery) -> Vec3 {
    query
        .separation_hint
        .unwrap_or_else(|| a.centroid() + qa - (tb[0] + tb[1] + tb[2]) / 3.0)
}

/// Whether a vertex whose closest point on a face is `cp` forms a
/// vertex-face contact with that face. Corner regions count only when the
/// offset runs along the face normal (stacked coplanar faces).
fn face_region(p: &Vec3, cp: &Vec3, region: TriRegion, normal: &Vec3, lateral: f64) -> bool {
    match region {
        TriRegion::Face | TriRegion::Edge(_) => true,
        TriRegion::Vertex(_) => {
            let n = normal.normalize();
            let off = p - cp;
            (off - n * n.dot(&off)).norm() <= lateral
        }
    }
}

/// Deduplicate, sort by plane distance, merge coincident planes, truncate.
pub(crate) fn finish_features(
    mut raw: Vec<ContactFeature>,
    query: &FeatureQuery,
) -> Vec<ContactFeature> {
    let mut seen = HashSet::new();
    raw.retain(|f| seen.insert(f.ids));
    raw.sort_by(|x, y| {
        x.plane_distance(&query.origin)
            .total_cmp(&y.plane_distance(&query.origin))
            .then_with(|| x.ids.cmp(&y.ids))
    });
    let bias_tol = 1e-7 * query.scale;
    let mut kept: Vec<ContactFeature> = Vec::new();
    for f in raw {
        let dup = kept
            .iter()
            .any(|k| k.row.dot(&f.row) >= MERGE_COS && (k.bias - f.bias).abs() <= bias_tol);
        if !dup {
            kept.push(f);
        }
    }
    kept.truncate(query.feature_cap);
    kept
}

/// Groups features into contact regions: two features share a region when
/// their witness points on `B` are within `radius` or they share a vertex on
/// either body. Returns the member indices of each region in input order.
pub fn cluster_features(
    a: &PosedBody,
    b: &PosedBody,
    features: &[ContactFeature],
    radius: f64,
) -> Vec<Vec<usize>> {
    let n = features.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    let verts: Vec<(Vec<u32>, Vec<u32>)> = features
        .iter()
        .map(|f| f.vertex_ids(a.mesh().triangles(), b.mesh().triangles()))
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let close = (features[i].witness_b - features[j].witness_b).norm() <= radius;
            let shared = verts[i].0.iter().any(|v| verts[j].0.contains(v))
                || verts[i].1.iter().any(|v| verts[j].1.contains(v));
            if close || shared {
                let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                if ri != rj {
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut slot = vec![usize::MAX; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        if slot[r] == usize::MAX {
            slot[r] = groups.len();
            groups.push(Vec::new());
        }
        groups[slot[r]].push(i);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn cube_body() -> Body {
        Body::new(shapes::unit_cube()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::new(1e-6)
    }

    #[test]
    fn classify_cube_offsets() {
        let body = cube_body();
        let a = PosedBody::fixed(&body);
        let b = PosedBody::fixed(&body);
        assert_eq!(
            classify(&a, &Vec3::new(0.3, 0.0, 0.0), &b, &tol()),
            CollisionStatus::Penetrating
        );
        assert_eq!(
            classify(&a, &Vec3::new(1.0, 0.0, 0.0), &b, &tol()),
            CollisionStatus::InContact
        );
        assert_eq!(
            classify(&a, &Vec3::new(2.0, 0.0, 0.0), &b, &tol()),
            CollisionStatus::Free
        );
        assert_eq!(
            classify(&a, &Vec3::new(0.3, 0.2, 0.1), &b, &tol()),
            CollisionStatus::Penetrating
        );
    }

    #[test]
    fn min_distance_cube_offsets() {
        let body = cube_body();
        let a = PosedBody::fixed(&body);
        let b = PosedBody::fixed(&body);
        assert!((min_distance(&a, &Vec3::new(2.0, 0.0, 0.0), &b).distance - 1.0).abs() < 1e-15);
        assert_eq!(
            min_distance(&a, &Vec3::new(1.0, 0.0, 0.0), &b).distance,
            0.0
        );
    }

    fn query(origin: Vec3) -> FeatureQuery {
        FeatureQuery {
            tolerances: tol(),
            feature_cap: usize::MAX,
            origin,
            separation_hint: Some(Vec3::x()),
            scale: 1.0,
        }
    }

    #[test]
    fn face_on_face_merges_to_one_plane() {
        let body = cube_body();
        let a = PosedBody::fixed(&body);
        let b = PosedBody::fixed(&body);
        let q = Vec3::new(1.0 + 5e-7, 0.0, 0.0);
        let mut raw = Vec::new();
        traverse_pairs(
            &a,
            &q,
            &b,
            &mut QueryStats::default(),
            |x, y| node_distance(x, y) <= 1e-6,
            |ia, ib| {
                let ta = a.triangle(ia, &q);
                let tb = b.triangle(ib, &Vec3::zeros());
                if triangle_distance(&ta, &tb).distance <= 1e-6 {
                    pair_features(
                        &a,
                        ia,
                        &ta,
                        &b,
                        ib,
                        &tb,
                        &q,
                        &query(Vec3::zeros()),
                        &mut raw,
                    );
                }
                Visit::Continue
            },
        );
        let vf = raw.iter().filter(|f| f.kind == FeatureKind::VF).count();
        assert!(vf >= 4);
        let feats = contact_features(&a, &q, &b, &query(Vec3::zeros())).unwrap();
        assert_eq!(feats.len(), 1);
        assert!((feats[0].normal - Vec3::x()).norm() < 1e-12);
        assert!((feats[0].row.dot(&q) - feats[0].bias - 5e-7).abs() < 1e-12);
        assert!((feats[0].bias - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vertex_on_face_gives_one_vf() {
        // tetrahedron tip resting on a big slab
        let tip = TriangleMesh::new(
            vec![
                Vec3::new(0.0, 0.0, 0.0),
                Vec3::new(-0.3, -0.3, 1.0),
                Vec3::new(0.4, -0.2, 1.0),
                Vec3::new(0.0, 0.4, 1.0),
            ],
            vec![[0, 2, 1], [0, 3, 2], [0, 1, 3], [1, 2, 3]],
        )
        .unwrap();
        let slab = shapes::cuboid(Vec3::new(-2.0, -2.0, -1.0), Vec3::new(2.0, 2.0, 0.0));
        let (ba, bb) = (Body::new(tip).unwrap(), Body::new(slab).unwrap());
        let (a, b) = (PosedBody::fixed(&ba), PosedBody::fixed(&bb));
        let q = Vec3::new(0.1, 0.2, 5e-7);
        let feats = contact_features(&a, &q, &b, &query(Vec3::zeros())).unwrap();
        assert_eq!(feats.len(), 1);
        assert_eq!(feats[0].kind, FeatureKind::VF);
        assert!((feats[0].normal - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn crossed_edges_give_ee_with_cross_product_normal() {
        // two thin wedges whose ridge edges cross at right angles
        let wedge = |flip: bool| {
            let s = if flip { -1.0 } else { 1.0 };
            let (x, y) = if flip {
                (Vec3::y(), Vec3::x())
            } else {
                (Vec3::x(), Vec3::y())
            };
            let verts = vec![
                x * -1.0,
                x * 1.0,
                x * -1.0 + y * 0.5 + Vec3::z() * (-s),
                x * 1.0 + y * 0.5 + Vec3::z() * (-s),
                x * -1.0 - y * 0.5 + Vec3::z() * (-s),
                x * 1.0 - y * 0.5 + Vec3::z() * (-s),
            ];
            let tris = vec![
                [0, 1, 3],
                [0, 3, 2],
                [0, 4, 5],
                [0, 5, 1],
                [2, 3, 5],
                [2, 5, 4],
                [0, 2, 4],
                [1, 5, 3],
            ];
            TriangleMesh::new(verts, tris).unwrap()
        };
        let (ba, bb) = (
            Body::new(wedge(true)).unwrap(),
            Body::new(wedge(false)).unwrap(),
        );
        let (a, b) = (PosedBody::fixed(&ba), PosedBody::fixed(&bb));
        let q = Vec3::new(0.0, 0.0, 5e-7);
        let feats = contact_features(&a, &q, &b, &query(Vec3::zeros())).unwrap();
        let ee: Vec<_> = feats.iter().filter(|f| f.kind == FeatureKind::EE).collect();
        assert_eq!(ee.len(), 1, "{feats:?}");
        assert!((ee[0].normal - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn features_require_contact() {
        let body = cube_body();
        let a = PosedBody::fixed(&body);
        let b = PosedBody::fixed(&body);
        for x in [0.3, 2.0] {
            assert_eq!(
                contact_features(&a, &Vec3::new(x, 0.0, 0.0), &b, &query(Vec3::zeros()))
                    .unwrap_err(),
                QueryError::NotInContact
            );
        }
    }

    #[test]
    fn feature_cap_truncates() {
        let body = Body::new(shapes::icosphere(1.0, 2)).unwrap();
        let slab = Body::new(shapes::cuboid(
            Vec3::new(-3.0, -3.0, -1.0),
            Vec3::new(3.0, 3.0, -0.2),
        ))
        .unwrap();
        let a = PosedBody::fixed(&body);
        let b = PosedBody::fixed(&slab);
        // rest the sphere on the slab with a tiny gap along z
        let low = body
            .mesh
            .vertices()
            .iter()
            .map(|v| v.z)
            .fold(f64::INFINITY, f64::min);
        let q = Vec3::new(0.0, 0.0, -0.2 - low + 5e-7);
        let mut qr = query(Vec3::zeros());
        qr.feature_cap = 1;
        let feats = contact_features(&a, &q, &b, &qr).unwrap();
        assert_eq!(feats.len(), 1);
    }
}
