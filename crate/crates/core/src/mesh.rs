//! Triangle-soup geometry of a rigid body.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion};
use sha2::{Digest, Sha256};

use crate::error::MeshError;
use crate::geometry::{triangle_area, Tri, Vec3};

/// Relative area below which a triangle is treated as degenerate.
const ZERO_AREA_SCALE: f64 = 1e-12;

/// Indexed triangle soup with cached mass-free shape statistics.
///
/// No manifold or closedness requirement. Triangles whose area is below
/// `1e-12 * R^2` (R is the half diagonal of the vertex bounding box) are
/// flagged and skipped by every proximity query.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    degenerate: Vec<bool>,
    centroid: Vec3,
    bounding_radius: f64,
    mean_vertex_magnitude: f64,
    aabb_min: Vec3,
    aabb_max: Vec3,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() || triangles.is_empty() {
            return Err(MeshError::Empty);
        }
        for (ti, t) in triangles.iter().enumerate() {
            for &i in t {
                if i as usize >= vertices.len() {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: ti,
                        index: i as i64,
                        vertex_count: vertices.len(),
                    });
                }
            }
        }
        Ok(Self::from_validated(vertices, triangles))
    }

    fn from_validated(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Self {
        let mut aabb_min = Vec3::repeat(f64::INFINITY);
        let mut aabb_max = Vec3::repeat(f64::NEG_INFINITY);
        for v in &vertices {
            aabb_min = aabb_min.inf(v);
            aabb_max = aabb_max.sup(v);
        }
        let half_diag = 0.5 * (aabb_max - aabb_min).norm();
        let area_floor = ZERO_AREA_SCALE * half_diag * half_diag;

        let mut degenerate = Vec::with_capacity(triangles.len());
        let mut weighted = Vec3::zeros();
        let mut total_area = 0.0;
        for t in &triangles {
            let tri = [
                vertices[t[0] as usize],
                vertices[t[1] as usize],
                vertices[t[2] as usize],
            ];
            let area = triangle_area(&tri);
            let flat = !(area >= area_floor) || area == 0.0;
            degenerate.push(flat);
            if !flat {
                weighted += (tri[0] + tri[1] + tri[2]) * (area / 3.0);
                total_area += area;
            }
        }
        let centroid = if total_area > 0.0 {
            weighted / total_area
        } else {
            vertices.iter().sum::<Vec3>() / vertices.len() as f64
        };
        let bounding_radius = vertices
            .iter()
            .map(|v| (v - centroid).norm())
            .fold(0.0, f64::max);
        let mean_vertex_magnitude =
            vertices.iter().map(|v| v.norm()).sum::<f64>() / vertices.len() as f64;

        Self {
            vertices,
            triangles,
            degenerate,
            centroid,
            bounding_radius,
            mean_vertex_magnitude,
            aabb_min,
            aabb_max,
        }
    }

    /// Reads a Wavefront OBJ file. Only `v` and `f` records are used.
    pub fn load_obj(path: impl AsRef<Path>) -> Result<Self, MeshError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_obj_str(&text)
    }

    pub fn from_obj_str(text: &str) -> Result<Self, MeshError> {
        let mut vertices = Vec::new();
        let mut triangles: Vec<[u32; 3]> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            let mut parts = content.split_whitespace();
            match parts.next() {
                Some("v") => {
                    let mut xyz = [0.0; 3];
                    for c in xyz.iter_mut() {
                        let tok = parts.next().ok_or_else(|| MeshError::Parse {
                            line,
                            message: "vertex needs three coordinates".into(),
                        })?;
                        *c = tok.parse().map_err(|_| MeshError::Parse {
                            line,
                            message: format!("bad coordinate {tok:?}"),
                        })?;
                    }
                    vertices.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                }
                Some("f") => {
                    let mut poly = Vec::new();
                    for tok in parts {
                        let head = tok.split('/').next().unwrap_or("");
                        let idx: i64 = head.parse().map_err(|_| MeshError::Parse {
                            line,
                            message: format!("bad face index {tok:?}"),
                        })?;
                        let resolved = match idx {
                            i if i > 0 => i - 1,
                            i if i < 0 => vertices.len() as i64 + i,
                            _ => {
                                return Err(MeshError::Parse {
                                    line,
                                    message: "face index 0 is invalid".into(),
                                })
                            }
                        };
                        poly.push((idx, resolved));
                    }
                    if poly.len() < 3 {
                        return Err(MeshError::Parse {
                            line,
                            message: "face needs at least three vertices".into(),
                        });
                    }
                    // forward references are legal in OBJ, so range checks happen at the end
                    for &(orig, r) in &poly {
                        if r < 0 {
                            return Err(MeshError::IndexOutOfRange {
                                triangle: triangles.len(),
                                index: orig,
                                vertex_count: vertices.len(),
                            });
                        }
                    }
                    for k in 1..poly.len() - 1 {
                        triangles.push([poly[0].1 as u32, poly[k].1 as u32, poly[k + 1].1 as u32]);
                    }
                }
                _ => {}
            }
        }
        Self::new(vertices, triangles).map_err(|e| match e {
            MeshError::IndexOutOfRange {
                triangle,
                index,
                vertex_count,
            } => MeshError::IndexOutOfRange {
                triangle,
                index: index + 1,
                vertex_count,
            },
            other => other,
        })
    }

    pub fn to_obj_string(&self) -> String {
        let mut s = String::new();
        for v in &self.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn write_obj(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::write(path, self.to_obj_string())
    }

    /// Returns a copy with every vertex mapped through `pose`.
    pub fn apply_pose(&self, pose: &Pose) -> TriangleMesh {
        let vertices = self
            .vertices
            .iter()
            .map(|v| pose.transform_point(v))
            .collect();
        Self::from_validated(vertices, self.triangles.clone())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, i: usize) -> Tri {
        let t = self.triangles[i];
        [
            self.vertices[t[0] as usize],
            self.vertices[t[1] as usize],
            self.vertices[t[2] as usize],
        ]
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate[i]
    }

    /// Indices of triangles that take part in proximity queries.
    pub fn valid_triangles(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.triangles.len()).filter(move |&i| !self.degenerate[i])
    }

    pub fn num_valid_triangles(&self) -> usize {
        self.degenerate.iter().filter(|d| !**d).count()
    }

    /// Area-weighted centroid of the non-degenerate triangles.
    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    /// Radius of a centroid-centred sphere enclosing every vertex.
    pub fn bounding_radius(&self) -> f64 {
        self.bounding_radius
    }

    /// Mean distance of the vertices from the model origin.
    pub fn mean_vertex_magnitude(&self) -> f64 {
        self.mean_vertex_magnitude
    }

    pub fn aabb(&self) -> (Vec3, Vec3) {
        (self.aabb_min, self.aabb_max)
    }

    pub fn aabb_diagonal(&self) -> f64 {
        (self.aabb_max - self.aabb_min).norm()
    }

    /// SHA-256 over the vertex and index buffers.
    pub fn content_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update((self.vertices.len() as u64).to_le_bytes());
        for v in &self.vertices {
            for c in v.iter() {
                h.update(c.to_le_bytes());
            }
        }
        h.update((self.triangles.len() as u64).to_le_bytes());
        for t in &self.triangles {
            for i in t {
                h.update(i.to_le_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Rigid placement: `x' = R x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self {
            rotation: Rotation3::identity(),
            translation: t,
        }
    }

    /// Builds a pose from an explicit matrix, which must be a proper rotation to 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self, MeshError> {
        let err = (rotation.transpose() * rotation - Matrix3::identity())
            .abs()
            .max();
        if !(err <= 1e-9) {
            return Err(MeshError::InvalidPose(format!(
                "rotation is not orthonormal (error {err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > 1e-9 {
            return Err(MeshError::InvalidPose(format!(
                "rotation determinant is {det}"
            )));
        }
        Ok(Self {
            rotation: Rotation3::from_matrix_unchecked(rotation),
            translation,
        })
    }

    /// Quaternion in `w, x, y, z` order; normalized before use.
    pub fn from_quaternion(wxyz: [f64; 4], translation: Vec3) -> Result<Self, MeshError> {
        let q = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let n = q.norm();
        if !(n > 1e-12) || !n.is_finite() {
            return Err(MeshError::InvalidPose("zero quaternion".into()));
        }
        let uq = UnitQuaternion::from_quaternion(q);
        Ok(Self {
            rotation: uq.to_rotation_matrix(),
            translation,
        })
    }

    pub fn quaternion_wxyz(&self) -> [f64; 4] {
        let q = UnitQuaternion::from_rotation_matrix(&self.rotation);
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform_point(&self, v: &Vec3) -> Vec3 {
        self.rotation * v + self.translation
    }

    pub fn rotation_only(&self) -> Pose {
        Pose {
            rotation: self.rotation,
            translation: Vec3::zeros(),
        }
    }
}
