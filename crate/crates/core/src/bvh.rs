//! Swept-sphere bounding volume hierarchy.
//!
//! Each node carries a capsule (a segment swept by a sphere; a point-swept
//! sphere when the segment collapses). Nodes are stored in a flat arena with
//! the root at index 0; leaves reference a contiguous run of `order`.

use nalgebra::{Matrix3, Rotation3, SymmetricEigen};

use crate::error::BvhError;
use crate::geometry::{closest_points_segments, Vec3};
use crate::mesh::TriangleMesh;

pub const DEFAULT_LEAF_CAPACITY: usize = 2;

/// Maximum conservative-advancement steps for a single volume pair.
pub const MAX_VOLUME_STEPS: usize = 64;

/// Segment-swept sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capsule {
    pub a: Vec3,
    pub b: Vec3,
    pub radius: f64,
}

impl Capsule {
    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            a: center,
            b: center,
            radius,
        }
    }

    pub fn transformed(&self, rotation: &Rotation3<f64>, translation: &Vec3) -> Self {
        Self {
            a: rotation * self.a + translation,
            b: rotation * self.b + translation,
            radius: self.radius,
        }
    }

    pub fn translated(&self, t: &Vec3) -> Self {
        Self {
            a: self.a + t,
            b: self.b + t,
            radius: self.radius,
        }
    }

    /// Distance from `p` to the capsule surface, negative inside.
    pub fn signed_distance(&self, p: &Vec3) -> f64 {
        let (_, _, c, _) = closest_points_segments(&self.a, &self.b, p, p);
        (p - c).norm() - self.radius
    }

    /// Exact distance between the two volumes, clamped at zero.
    pub fn distance(&self, other: &Capsule) -> f64 {
        let (_, _, c1, c2) = closest_points_segments(&self.a, &self.b, &other.a, &other.b);
        ((c2 - c1).norm() - self.radius - other.radius).max(0.0)
    }

    /// Lower bound on how far `self` can translate along `v` before touching
    /// `other` inflated by `margin`, found by conservative advancement with
    /// the motion bound `v . n`. `+inf` when the volumes never meet, and the
    /// search stops once the travelled length exceeds `horizon`.
    pub fn directional_distance(
        &self,
        other: &Capsule,
        v: &Vec3,
        margin: f64,
        horizon: f64,
    ) -> f64 {
        self.directional_distance_steps(other, v, margin, horizon).0
    }

    /// As [`Capsule::directional_distance`], also returning the number of
    /// distance evaluations spent.
    pub fn directional_distance_steps(
        &self,
        other: &Capsule,
        v: &Vec3,
        margin: f64,
        horizon: f64,
    ) -> (f64, u32) {
        let speed = v.norm();
        if !(speed > 0.0) {
            return (f64::INFINITY, 0);
        }
        let dir = v / speed;
        let rsum = self.radius + other.radius + margin;
        let stop = 1e-12 * (1.0 + rsum);
        let mut s = 0.0;
        for step in 1..=MAX_VOLUME_STEPS as u32 {
            let moved = self.translated(&(dir * s));
            let (_, _, c1, c2) = closest_points_segments(&moved.a, &moved.b, &other.a, &other.b);
            let delta = c2 - c1;
            let centers = delta.norm();
            let gap = centers - rsum;
            if gap <= stop {
                return (s, step);
            }
            let mu = dir.dot(&delta) / centers;
            if mu <= 0.0 {
                return (f64::INFINITY, step);
            }
            s += gap / mu;
            if s > horizon {
                return (f64::INFINITY, step);
            }
        }
        (s, MAX_VOLUME_STEPS as u32)
    }
}

#[derive(Debug, Clone)]
pub struct BvhNode {
    pub volume: Capsule,
    /// Index of the first child; the second is `left + 1`. `None` on leaves.
    pub left: Option<u32>,
    /// Range into [`Bvh::order`].
    pub start: u32,
    pub count: u32,
}

impl BvhNode {
    pub fn is_leaf(&self) -> bool {
        self.left.is_none()
    }
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
    leaf_capacity: usize,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Result<Self, BvhError> {
        Self::with_leaf_capacity(mesh, DEFAULT_LEAF_CAPACITY)
    }

    /// Top-down build splitting at the median along the longest extent of
    /// the triangle centroids.
    pub fn with_leaf_capacity(mesh: &TriangleMesh, leaf_capacity: usize) -> Result<Self, BvhError> {
        let leaf_capacity = leaf_capacity.max(1);
        let mut order: Vec<u32> = mesh.valid_triangles().map(|i| i as u32).collect();
        if order.is_empty() {
            return Err(BvhError::EmptyMesh);
        }
        let centroids: Vec<Vec3> = (0..mesh.triangles().len())
            .map(|i| {
                let t = mesh.triangle(i);
                (t[0] + t[1] + t[2]) / 3.0
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * order.len() / leaf_capacity + 1);
        nodes.push(BvhNode {
            volume: Capsule::sphere(Vec3::zeros(), 0.0),
            left: None,
            start: 0,
            count: order.len() as u32,
        });
        let mut stack = vec![0usize];
        let mut points = Vec::new();
        while let Some(ni) = stack.pop() {
            let (start, count) = (nodes[ni].start as usize, nodes[ni].count as usize);
            let tris = &mut order[start..start + count];
            points.clear();
            for &t in tris.iter() {
                points.extend_from_slice(&mesh.triangle(t as usize));
            }
            nodes[ni].volume = fit_capsule(&points);
            if count <= leaf_capacity {
                continue;
            }
            let (mut lo, mut hi) = (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY));
            for &t in tris.iter() {
                lo = lo.inf(&centroids[t as usize]);
                hi = hi.sup(&centroids[t as usize]);
            }
            let axis = (hi - lo).imax();
            let mid = count / 2;
            tris.select_nth_unstable_by(mid, |&x, &y| {
                centroids[x as usize][axis]
                    .partial_cmp(&centroids[y as usize][axis])
                    .unwrap()
                    .then(x.cmp(&y))
            });
            let left = nodes.len();
            nodes.push(BvhNode {
                volume: Capsule::sphere(Vec3::zeros(), 0.0),
                left: None,
                start: start as u32,
                count: mid as u32,
            });
            nodes.push(BvhNode {
                volume: Capsule::sphere(Vec3::zeros(), 0.0),
                left: None,
                start: (start + mid) as u32,
                count: (count - mid) as u32,
            });
            nodes[ni].left = Some(left as u32);
            stack.push(left);
            stack.push(left + 1);
        }
        Ok(Self {
            nodes,
            order,
            leaf_capacity,
        })
    }

    pub fn root(&self) -> usize {
        0
    }

    pub fn node(&self, i: usize) -> &BvhNode {
        &self.nodes[i]
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    /// Triangle indices stored under a node.
    pub fn triangles_of(&self, node: &BvhNode) -> &[u32] {
        &self.order[node.start as usize..(node.start + node.count) as usize]
    }

    pub fn children(&self, node: &BvhNode) -> Option<(usize, usize)> {
        node.left.map(|l| (l as usize, l as usize + 1))
    }

    pub fn height(&self) -> usize {
        let mut best = 0;
        let mut stack = vec![(0usize, 1usize)];
        while let Some((i, d)) = stack.pop() {
            best = best.max(d);
            if let Some((l, r)) = self.children(&self.nodes[i]) {
                stack.push((l, d + 1));
                stack.push((r, d + 1));
            }
        }
        best
    }
}

/// Capsule around `points`: axis along the principal direction through the
/// mean, clipped to the point extent, radius to the farthest point.
fn fit_capsule(points: &[Vec3]) -> Capsule {
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let eig = SymmetricEigen::new(cov);
    let axis_idx = eig.eigenvalues.imax();
    let axis = eig.eigenvectors.column(axis_idx).into_owned();
    let axis = if axis.norm() > 0.0 {
        axis.normalize()
    } else {
        Vec3::x()
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let s = axis.dot(&(p - mean));
        lo = lo.min(s);
        hi = hi.max(s);
    }
    let mut cap = Capsule {
        a: mean + axis * lo,
        b: mean + axis * hi,
        radius: 0.0,
    };
    // radius only needs to cover the points; a sphere may be tighter
    let mut r = 0.0f64;
    for p in points {
        let (_, _, c, _) = closest_points_segments(&cap.a, &cap.b, p, p);
        r = r.max((p - c).norm());
    }
    cap.radius = r * (1.0 + 1e-12) + 1e-300;
    let center = (cap.a + cap.b) * 0.5;
    let sr = points
        .iter()
        .map(|p| (p - center).norm())
        .fold(0.0, f64::max);
    if sr <= cap.radius {
        return Capsule::sphere(center, sr * (1.0 + 1e-12) + 1e-300);
    }
    cap
}

/// Lower bound on the distance between the triangles under two nodes.
pub fn node_distance(a: &Capsule, b: &Capsule) -> f64 {
    a.distance(b)
}

/// Lower bound on the minimal directional distance along `v` from the
/// triangles under `a` to those under `b`.
pub fn node_directional_distance(a: &Capsule, b: &Capsule, v: &Vec3) -> f64 {
    a.directional_distance(b, v, 0.0, f64::INFINITY)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shapes;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn check_containment(mesh: &TriangleMesh, bvh: &Bvh) {
        for node in bvh.nodes() {
            for &t in bvh.triangles_of(node) {
                for p in mesh.triangle(t as usize) {
                    assert!(
                        node.volume.signed_distance(&p) <= 1e-12,
                        "vertex escapes node volume"
                    );
                }
            }
        }
    }

    #[test]
    fn single_triangle_leaf() {
        let m = TriangleMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(0., 1., 0.)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        let bvh = Bvh::build(&m).unwrap();
        assert_eq!(bvh.nodes().len(), 1);
        assert!(bvh.node(0).is_leaf());
        check_containment(&m, &bvh);
    }

    #[test]
    fn two_distant_triangles_split() {
        let m = TriangleMesh::new(
            vec![
                v(0., 0., 0.),
                v(1., 0., 0.),
                v(0., 1., 0.),
                v(10., 0., 0.),
                v(11., 0., 0.),
                v(10., 1., 0.),
            ],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let bvh = Bvh::with_leaf_capacity(&m, 1).unwrap();
        assert_eq!(bvh.nodes().len(), 3);
        let (l, r) = bvh.children(bvh.node(0)).unwrap();
        assert!(bvh.node(l).is_leaf() && bvh.node(r).is_leaf());
        check_containment(&m, &bvh);
    }

    #[test]
    fn degenerate_only_mesh_is_rejected() {
        let m = TriangleMesh::new(
            vec![v(0., 0., 0.), v(1., 0., 0.), v(2., 0., 0.)],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(Bvh::build(&m).unwrap_err(), BvhError::EmptyMesh);
    }

    #[test]
    fn containment_and_height_on_larger_meshes() {
        for m in [
            shapes::blob(1.0, 40, 21),
            shapes::torus_knot(2, 3, 1.0, 0.1, 128, 8),
        ] {
            let bvh = Bvh::build(&m).unwrap();
            check_containment(&m, &bvh);
            let leaves = bvh.nodes().iter().filter(|n| n.is_leaf()).count();
            let covered: usize = bvh
                .nodes()
                .iter()
                .filter(|n| n.is_leaf())
                .map(|n| n.count as usize)
                .sum();
            assert_eq!(covered, m.num_valid_triangles());
            assert!(leaves >= m.num_valid_triangles() / 2);
        }
    }

    #[test]
    fn height_is_logarithmic() {
        let m = shapes::blob(1.0, 200, 101);
        let n = m.num_valid_triangles() as f64;
        let bvh = Bvh::build(&m).unwrap();
        let bound = 2.0 * (n / bvh.leaf_capacity() as f64).log2() + 2.0;
        assert!(
            (bvh.height() as f64) <= bound,
            "height {} > {bound}",
            bvh.height()
        );
    }

    #[test]
    fn sphere_volume_distances() {
        let a = Capsule::sphere(v(0., 0., 0.), 0.1);
        let b = Capsule::sphere(v(1., 0., 0.), 0.1);
        assert!((node_distance(&a, &b) - 0.8).abs() < 1e-15);
        assert_eq!(node_distance(&a, &a), 0.0);
        let c = Capsule::sphere(v(0.15, 0., 0.), 0.1);
        assert_eq!(node_distance(&a, &c), 0.0);
    }

    #[test]
    fn directional_distance_cases() {
        let a = Capsule::sphere(v(0., 0., 0.), 0.0);
        let b = Capsule::sphere(v(1., 0., 0.), 0.0);
        assert!((node_directional_distance(&a, &b, &v(1., 0., 0.)) - 1.0).abs() < 1e-12);
        assert_eq!(
            node_directional_distance(&a, &b, &v(-1., 0., 0.)),
            f64::INFINITY
        );
        let fat = Capsule::sphere(v(0.5, 0., 0.), 0.6);
        assert_eq!(node_directional_distance(&a, &fat, &v(0., 1., 0.)), 0.0);
        // capsules slide into each other along an oblique path
        let c1 = Capsule {
            a: v(0., 0., 0.),
            b: v(0., 1., 0.),
            radius: 0.1,
        };
        let c2 = Capsule {
            a: v(2., -1., 0.),
            b: v(2., 2., 0.),
            radius: 0.2,
        };
        let d = node_directional_distance(&c1, &c2, &v(1., 0.3, 0.));
        let dir = v(1., 0.3, 0.).normalize();
        assert!((d * dir.x - 1.7).abs() < 1e-9, "{d}");
    }

    #[test]
    fn directional_distance_is_antisymmetric_in_direction() {
        let c1 = Capsule {
            a: v(0., 0., 0.),
            b: v(0.3, 1., 0.2),
            radius: 0.1,
        };
        let c2 = Capsule {
            a: v(2., -1., 0.5),
            b: v(2.5, 0.4, -0.3),
            radius: 0.5,
        };
        let dir = v(1.0, 0.2, 0.1);
        let ab = node_directional_distance(&c1, &c2, &dir);
        let ba = node_directional_distance(&c2, &c1, &(-dir));
        assert!(ab.is_finite());
        assert!((ab - ba).abs() < 1e-9);
    }
}
