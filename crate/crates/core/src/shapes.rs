//! Procedural meshes used by the benchmark harness and the test suites.
//!
//! All generators emit closed surfaces with outward (counter-clockwise) winding.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use rand::Rng;

use crate::geometry::Vec3;
use crate::mesh::TriangleMesh;

fn build(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> TriangleMesh {
    TriangleMesh::new(vertices, triangles).expect("generator produced an invalid mesh")
}

/// Axis-aligned box with corners `min` and `max`.
pub fn cuboid(min: Vec3, max: Vec3) -> TriangleMesh {
    let c = |x: usize, y: usize, z: usize| {
        Vec3::new(
            if x == 0 { min.x } else { max.x },
            if y == 0 { min.y } else { max.y },
            if z == 0 { min.z } else { max.z },
        )
    };
    let vertices = vec![
        c(0, 0, 0),
        c(1, 0, 0),
        c(1, 1, 0),
        c(0, 1, 0),
        c(0, 0, 1),
        c(1, 0, 1),
        c(1, 1, 1),
        c(0, 1, 1),
    ];
    let triangles = vec![
        [0, 3, 2],
        [0, 2, 1],
        [4, 5, 6],
        [4, 6, 7],
        [0, 1, 5],
        [0, 5, 4],
        [1, 2, 6],
        [1, 6, 5],
        [2, 3, 7],
        [2, 7, 6],
        [3, 0, 4],
        [3, 4, 7],
    ];
    build(vertices, triangles)
}

/// Unit cube anchored at the origin.
pub fn unit_cube() -> TriangleMesh {
    cuboid(Vec3::zeros(), Vec3::repeat(1.0))
}

/// Unit cube centred at the origin.
pub fn centered_cube(edge: f64) -> TriangleMesh {
    cuboid(Vec3::repeat(-0.5 * edge), Vec3::repeat(0.5 * edge))
}

/// Latitude/longitude surface `r(u) * u` for unit directions `u`.
fn radial_surface(slices: usize, stacks: usize, radius: impl Fn(&Vec3) -> f64) -> TriangleMesh {
    assert!(slices >= 3 && stacks >= 2);
    let dir = |i: usize, j: usize| {
        let theta = PI * i as f64 / stacks as f64;
        let phi = TAU * j as f64 / slices as f64;
        Vec3::new(
            theta.sin() * phi.cos(),
            theta.sin() * phi.sin(),
            theta.cos(),
        )
    };
    let mut vertices = Vec::new();
    let north = Vec3::z();
    vertices.push(north * radius(&north));
    for i in 1..stacks {
        for j in 0..slices {
            let u = dir(i, j);
            vertices.push(u * radius(&u));
        }
    }
    let south = -Vec3::z();
    vertices.push(south * radius(&south));
    let ring = |i: usize, j: usize| (1 + (i - 1) * slices + j % slices) as u32;
    let south_idx = (vertices.len() - 1) as u32;
    let mut triangles = Vec::new();
    for j in 0..slices {
        triangles.push([0, ring(1, j), ring(1, j + 1)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..slices {
            let (a, b, c, d) = (
                ring(i, j),
                ring(i, j + 1),
                ring(i + 1, j),
                ring(i + 1, j + 1),
            );
            triangles.push([a, c, d]);
            triangles.push([a, d, b]);
        }
    }
    for j in 0..slices {
        triangles.push([south_idx, ring(stacks - 1, j + 1), ring(stacks - 1, j)]);
    }
    build(vertices, triangles)
}

pub fn uv_sphere(radius: f64, slices: usize, stacks: usize) -> TriangleMesh {
    radial_surface(slices, stacks, |_| radius)
}

/// Non-convex "bunny-class" blob: a sphere with two ear-like lobes, a dent
/// and low-frequency ripples. `slices * stacks * 2` triangles, roughly.
pub fn blob(radius: f64, slices: usize, stacks: usize) -> TriangleMesh {
    let ear1 = Vec3::new(0.35, 0.25, 0.9).normalize();
    let ear2 = Vec3::new(-0.35, 0.25, 0.9).normalize();
    let dent = Vec3::new(0.2, -0.9, 0.1).normalize();
    let lobe = Vec3::new(-0.7, -0.3, -0.6).normalize();
    radial_surface(slices, stacks, move |u| {
        let g = |c: &Vec3, w: f64| (-(u - c).norm_squared() / w).exp();
        let r = 1.0 + 0.45 * g(&ear1, 0.04) + 0.45 * g(&ear2, 0.04) - 0.25 * g(&dent, 0.12)
            + 0.2 * g(&lobe, 0.2)
            + 0.04 * (3.0 * u.x).sin() * (2.0 * u.y + 1.0).sin();
        radius * r
    })
}

pub fn icosphere(radius: f64, subdivisions: usize) -> TriangleMesh {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: u32, b: u32, vs: &mut Vec<Vec3>| {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                vs.push(((vs[a as usize] + vs[b as usize]) * 0.5).normalize());
                (vs.len() - 1) as u32
            })
        };
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    build(vertices, triangles)
}

/// Torus around the z axis.
pub fn torus(major: f64, minor: f64, n_major: usize, n_minor: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(n_major * n_minor);
    for i in 0..n_major {
        let u = TAU * i as f64 / n_major as f64;
        for j in 0..n_minor {
            let v = TAU * j as f64 / n_minor as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    tube_faces(vertices, n_major, n_minor)
}

fn tube_faces(vertices: Vec<Vec3>, rings: usize, sides: usize) -> TriangleMesh {
    let idx = |i: usize, j: usize| ((i % rings) * sides + j % sides) as u32;
    let mut triangles = Vec::with_capacity(rings * sides * 2);
    for i in 0..rings {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    build(vertices, triangles)
}

/// Tube of radius `tube` swept along a `(p, q)` torus knot.
pub fn torus_knot(
    p: u32,
    q: u32,
    scale: f64,
    tube: f64,
    segments: usize,
    sides: usize,
) -> TriangleMesh {
    let (p, q) = (p as f64, q as f64);
    let curve = |t: f64| {
        let r = 2.0 + (q * t).cos();
        Vec3::new(r * (p * t).cos(), r * (p * t).sin(), -(q * t).sin()) * (scale / 3.0)
    };
    let h = 1e-4;
    let mut vertices = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let t = TAU * i as f64 / segments as f64;
        let c = curve(t);
        let d1 = (curve(t + h) - curve(t - h)) / (2.0 * h);
        let d2 = (curve(t + h) - c * 2.0 + curve(t - h)) / (h * h);
        let tangent = d1.normalize();
        let normal = (d2 - tangent * tangent.dot(&d2)).normalize();
        let binormal = tangent.cross(&normal);
        for j in 0..sides {
            let a = TAU * j as f64 / sides as f64;
            vertices.push(c + (normal * a.cos() - binormal * a.sin()) * tube);
        }
    }
    tube_faces(vertices, segments, sides)
}

/// Boundary surface of a set of filled unit voxels, scaled by `cell`.
pub fn voxel_solid(
    dims: [usize; 3],
    cell: f64,
    filled: impl Fn(usize, usize, usize) -> bool,
) -> TriangleMesh {
    let inside = |x: i64, y: i64, z: i64| {
        x >= 0
            && y >= 0
            && z >= 0
            && (x as usize) < dims[0]
            && (y as usize) < dims[1]
            && (z as usize) < dims[2]
            && filled(x as usize, y as usize, z as usize)
    };
    let mut index: HashMap<[i64; 3], u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut corner = |c: [i64; 3], vs: &mut Vec<Vec3>| {
        *index.entry(c).or_insert_with(|| {
            vs.push(Vec3::new(c[0] as f64, c[1] as f64, c[2] as f64) * cell);
            (vs.len() - 1) as u32
        })
    };
    let mut triangles = Vec::new();
    for x in 0..dims[0] as i64 {
        for y in 0..dims[1] as i64 {
            for z in 0..dims[2] as i64 {
                if !inside(x, y, z) {
                    continue;
                }
                for axis in 0..3 {
                    for dir in [-1i64, 1] {
                        let mut n = [x, y, z];
                        n[axis] += dir;
                        if inside(n[0], n[1], n[2]) {
                            continue;
                        }
                        // quad on the face between the voxel and its empty neighbour
                        let u = (axis + 1) % 3;
                        let w = (axis + 2) % 3;
                        let mut base = [x, y, z];
                        if dir > 0 {
                            base[axis] += 1;
                        }
                        let mut q = [base; 4];
                        q[1][u] += 1;
                        q[2][u] += 1;
                        q[2][w] += 1;
                        q[3][w] += 1;
                        let ids: Vec<u32> = q.iter().map(|c| corner(*c, &mut vertices)).collect();
                        // (u x w) = +axis, so keep order for outward +axis faces
                        if dir > 0 {
                            triangles.push([ids[0], ids[1], ids[2]]);
                            triangles.push([ids[0], ids[2], ids[3]]);
                        } else {
                            triangles.push([ids[0], ids[2], ids[1]]);
                            triangles.push([ids[0], ids[3], ids[2]]);
                        }
                    }
                }
            }
        }
    }
    build(vertices, triangles)
}

/// Thick-walled open-top box: 6x6x6 cells with a 4x4x5 cavity.
pub fn cup(cell: f64) -> TriangleMesh {
    voxel_solid([6, 6, 6], cell, |x, y, z| {
        !((1..5).contains(&x) && (1..5).contains(&y) && z >= 1)
    })
}

/// Slab of 9x9x3 cells pierced by two parallel 2-cell slots.
pub fn grate(cell: f64) -> TriangleMesh {
    voxel_solid([9, 9, 3], cell, |x, y, _| {
        let slot = ((2..4).contains(&x) || (5..7).contains(&x)) && (1..8).contains(&y);
        !slot
    })
}

/// Convex hull of `n` random points scattered near a sphere of `radius`.
///
/// The hull is built by brute force over point triples, which is fine for
/// the small point counts used by the tests.
pub fn random_convex_polytope<R: Rng>(rng: &mut R, n: usize, radius: f64) -> TriangleMesh {
    assert!(n >= 4);
    let stretch = Vec3::new(
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
        rng.gen_range(0.6..1.4),
    );
    let points: Vec<Vec3> = (0..n)
        .map(|_| loop {
            let v = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let l = v.norm();
            if l > 0.1 && l <= 1.0 {
                let r = radius * rng.gen_range(0.8..1.0);
                break (v / l * r).component_mul(&stretch);
            }
        })
        .collect();
    convex_hull(&points)
}

/// Brute-force convex hull of points in general position.
pub fn convex_hull(points: &[Vec3]) -> TriangleMesh {
    let n = points.len();
    let scale = points
        .iter()
        .map(|p| p.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = 1e-12 * scale;
    let mut faces = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let nrm = (points[j] - points[i]).cross(&(points[k] - points[i]));
                let l = nrm.norm();
                if l < tol * scale {
                    continue;
                }
                let nrm = nrm / l;
                let (mut pos, mut neg) = (false, false);
                for (m, p) in points.iter().enumerate() {
                    if m == i || m == j || m == k {
                        continue;
                    }
                    let s = nrm.dot(&(p - points[i]));
                    if s > tol {
                        pos = true;
                    } else if s < -tol {
                        neg = true;
                    }
                    if pos && neg {
                        break;
                    }
                }
                if pos && neg {
                    continue;
                }
                faces.push(if pos { [i, k, j] } else { [i, j, k] });
            }
        }
    }
    let mut remap = vec![u32::MAX; n];
    let mut vertices = Vec::new();
    let triangles = faces
        .iter()
        .map(|f| {
            f.map(|v| {
                if remap[v] == u32::MAX {
                    remap[v] = vertices.len() as u32;
                    vertices.push(points[v]);
                }
                remap[v]
            })
        })
        .collect();
    build(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashMap;

    /// Every directed edge must appear once, and its reverse once.
    fn assert_closed_oriented(m: &TriangleMesh) {
        let mut edges: HashMap<(u32, u32), usize> = HashMap::new();
        for t in m.triangles() {
            for i in 0..3 {
                *edges.entry((t[i], t[(i + 1) % 3])).or_default() += 1;
            }
        }
        for (&(a, b), &count) in &edges {
            assert_eq!(count, 1, "edge {a}-{b} repeated");
            assert_eq!(edges.get(&(b, a)), Some(&1), "edge {a}-{b} has no twin");
        }
    }

    fn signed_volume(m: &TriangleMesh) -> f64 {
        (0..m.triangles().len())
            .map(|i| {
                let t = m.triangle(i);
                t[0].dot(&t[1].cross(&t[2])) / 6.0
            })
            .sum()
    }

    #[test]
    fn generators_are_closed_and_outward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for (m, vol) in [
            (unit_cube(), Some(1.0)),
            (uv_sphere(1.0, 24, 12), None),
            (icosphere(1.0, 2), None),
            (torus(1.0, 0.3, 24, 12), None),
            (torus_knot(2, 3, 1.0, 0.12, 96, 8), None),
            (blob(1.0, 32, 17), None),
            (cup(1.0), Some(216.0 - 80.0)),
            (grate(1.0), Some(243.0 - 2.0 * 2.0 * 7.0 * 3.0)),
            (random_convex_polytope(&mut rng, 30, 1.0), None),
        ] {
            assert_closed_oriented(&m);
            let v = signed_volume(&m);
            assert!(v > 0.0);
            if let Some(exact) = vol {
                assert!((v - exact).abs() < 1e-9, "volume {v} vs {exact}");
            }
        }
    }

    #[test]
    fn blob_triangle_budget() {
        assert_eq!(blob(1.0, 32, 17).triangles().len(), 1024);
        assert!(blob(1.0, 200, 101).triangles().len() >= 40_000);
    }
}
