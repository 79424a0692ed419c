//! Low-level closest-point and intersection routines on triangles and segments.
//!
//! Everything here works on plain `Vector3<f64>` values so the same code is
//! shared by the BVH, the proximity queries and the CCD loop.

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// A triangle given by its three corners.
pub type Tri = [Vec3; 3];

/// Feature of a triangle that holds the closest point to a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriRegion {
    /// Corner `i`.
    Vertex(usize),
    /// Edge `i`, running from corner `i` to corner `(i + 1) % 3`.
    Edge(usize),
    /// Interior of the face.
    Face,
}

/// Closest point on triangle `t` to `p`, with the region it falls in.
pub fn closest_point_on_triangle(p: &Vec3, t: &Tri) -> (Vec3, TriRegion) {
    let [a, b, c] = t;
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, TriRegion::Vertex(0));
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, TriRegion::Vertex(1));
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, TriRegion::Edge(0));
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, TriRegion::Vertex(2));
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, TriRegion::Edge(2));
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, TriRegion::Edge(1));
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, TriRegion::Face)
}

/// Closest points between segments `p1q1` and `p2q2`.
///
/// Returns `(s, t, c1, c2)` where `c1 = p1 + s (q1 - p1)` and
/// `c2 = p2 + t (q2 - p2)`, with `s, t` in `[0, 1]`.
pub fn closest_points_segments(
    p1: &Vec3,
    q1: &Vec3,
    p2: &Vec3,
    q2: &Vec3,
) -> (f64, f64, Vec3, Vec3) {
    const EPS: f64 = 1e-300;
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= EPS && e <= EPS {
        s = 0.0;
        t = 0.0;
    } else if a <= EPS {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= EPS {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut ss = if denom > 1e-14 * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut tt = (b * ss + f) / e;
            if tt < 0.0 {
                tt = 0.0;
                ss = (-c / a).clamp(0.0, 1.0);
            } else if tt > 1.0 {
                tt = 1.0;
                ss = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = ss;
            t = tt;
        }
    }
    (s, t, p1 + d1 * s, p2 + d2 * t)
}

/// Euclidean distance between two triangles together with a witness pair.
#[derive(Debug, Clone, Copy)]
pub struct TriDistance {
    pub distance: f64,
    pub point_a: Vec3,
    pub point_b: Vec3,
}

fn plane_sides(t: &Tri, normal: &Vec3, origin: &Vec3) -> [f64; 3] {
    [
        normal.dot(&(t[0] - origin)),
        normal.dot(&(t[1] - origin)),
        normal.dot(&(t[2] - origin)),
    ]
}

/// Unnormalized face normal `(b - a) x (c - a)`.
#[inline]
pub fn raw_normal(t: &Tri) -> Vec3 {
    (t[1] - t[0]).cross(&(t[2] - t[0]))
}

/// Point where segment `pq` crosses triangle `t`, if it does (touching counts).
fn segment_crosses_triangle(p: &Vec3, q: &Vec3, t: &Tri, n: &Vec3) -> Option<Vec3> {
    let sp = n.dot(&(p - t[0]));
    let sq = n.dot(&(q - t[0]));
    if (sp > 0.0 && sq > 0.0) || (sp < 0.0 && sq < 0.0) || sp == sq {
        return None;
    }
    let x = p + (q - p) * (sp / (sp - sq));
    // inside test by edge half-planes
    for i in 0..3 {
        let e = t[(i + 1) % 3] - t[i];
        if e.cross(&(x - t[i])).dot(n) < 0.0 {
            return None;
        }
    }
    Some(x)
}

/// Exact distance between two triangles (zero when they touch or cross).
pub fn triangle_distance(a: &Tri, b: &Tri) -> TriDistance {
    let mut best = TriDistance {
        distance: f64::INFINITY,
        point_a: a[0],
        point_b: b[0],
    };
    let mut best_sq = f64::INFINITY;
    let mut consider = |pa: Vec3, pb: Vec3| {
        let d = (pa - pb).norm_squared();
        if d < best_sq {
            best_sq = d;
            best.point_a = pa;
            best.point_b = pb;
        }
    };
    for i in 0..3 {
        let (p1, q1) = (&a[i], &a[(i + 1) % 3]);
        for j in 0..3 {
            let (_, _, c1, c2) = closest_points_segments(p1, q1, &b[j], &b[(j + 1) % 3]);
            consider(c1, c2);
        }
    }
    for v in a {
        let (cp, _) = closest_point_on_triangle(v, b);
        consider(*v, cp);
    }
    for v in b {
        let (cp, _) = closest_point_on_triangle(v, a);
        consider(cp, *v);
    }
    if best_sq > 0.0 {
        // Crossing configurations are not caught by the feature pairs above.
        let na = raw_normal(a);
        let nb = raw_normal(b);
        let sa = plane_sides(a, &nb, &b[0]);
        let sb = plane_sides(b, &na, &a[0]);
        let straddles = |s: &[f64; 3]| s.iter().any(|&x| x <= 0.0) && s.iter().any(|&x| x >= 0.0);
        if straddles(&sa) && straddles(&sb) {
            for i in 0..3 {
                if let Some(x) = segment_crosses_triangle(&a[i], &a[(i + 1) % 3], b, &nb) {
                    best_sq = 0.0;
                    best.point_a = x;
                    best.point_b = x;
                    break;
                }
                if let Some(x) = segment_crosses_triangle(&b[i], &b[(i + 1) % 3], a, &na) {
                    best_sq = 0.0;
                    best.point_a = x;
                    best.point_b = x;
                    break;
                }
            }
        }
    }
    best.distance = best_sq.sqrt();
    best
}

/// Whether two triangles interpenetrate, as opposed to merely touching.
///
/// Non-coplanar triangles interpenetrate when each strictly straddles the
/// other's plane and the two crossing intervals on the common line overlap by
/// more than `tol`. Coplanar triangles interpenetrate only when their faces
/// point the same way and they share more than a `tol`-thin sliver of area;
/// opposed coplanar faces are face-to-face contact.
pub fn triangles_interpenetrate(a: &Tri, b: &Tri, tol: f64) -> bool {
    let na = raw_normal(a);
    let nb = raw_normal(b);
    let la = na.norm();
    let lb = nb.norm();
    if la == 0.0 || lb == 0.0 {
        return false;
    }
    let na = na / la;
    let nb = nb / lb;
    let sa = plane_sides(a, &nb, &b[0]);
    let sb = plane_sides(b, &na, &a[0]);
    let flat_a = sa.iter().all(|s| s.abs() <= tol);
    let flat_b = sb.iter().all(|s| s.abs() <= tol);
    if flat_a || flat_b {
        if na.dot(&nb) <= 0.0 {
            return false;
        }
        return coplanar_overlap(a, b, &na, tol);
    }
    let straddle = |s: &[f64; 3]| {
        let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mn = s.iter().cloned().fold(f64::INFINITY, f64::min);
        mx > tol && mn < -tol
    };
    if !straddle(&sa) || !straddle(&sb) {
        return false;
    }
    let line = na.cross(&nb);
    let ll = line.norm();
    if ll < 1e-15 {
        return false;
    }
    let line = line / ll;
    let (a0, a1) = crossing_interval(a, &sa, &line, tol);
    let (b0, b1) = crossing_interval(b, &sb, &line, tol);
    a1.min(b1) - a0.max(b0) > tol
}

fn crossing_interval(t: &Tri, s: &[f64; 3], line: &Vec3, tol: f64) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut push = |p: Vec3| {
        let x = line.dot(&p);
        lo = lo.min(x);
        hi = hi.max(x);
    };
    for i in 0..3 {
        let j = (i + 1) % 3;
        if s[i].abs() <= tol {
            push(t[i]);
        }
        if (s[i] > tol && s[j] < -tol) || (s[i] < -tol && s[j] > tol) {
            push(t[i] + (t[j] - t[i]) * (s[i] / (s[i] - s[j])));
        }
    }
    (lo, hi)
}

fn coplanar_overlap(a: &Tri, b: &Tri, n: &Vec3, tol: f64) -> bool {
    // separating-axis test in the common plane; touching does not count
    for (t, _) in [(a, 0), (b, 1)] {
        for i in 0..3 {
            let e = t[(i + 1) % 3] - t[i];
            let axis = n.cross(&e);
            let len = axis.norm();
            if len == 0.0 {
                continue;
            }
            let axis = axis / len;
            let (amin, amax) = project(a, &axis);
            let (bmin, bmax) = project(b, &axis);
            if amax <= bmin + tol || bmax <= amin + tol {
                return false;
            }
        }
    }
    true
}

fn project(t: &Tri, axis: &Vec3) -> (f64, f64) {
    let p = [axis.dot(&t[0]), axis.dot(&t[1]), axis.dot(&t[2])];
    (p[0].min(p[1]).min(p[2]), p[0].max(p[1]).max(p[2]))
}

/// `n` roughly uniform unit vectors on a Fibonacci lattice.
pub fn fibonacci_sphere(n: usize) -> Vec<Vec3> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - (2 * k + 1) as f64 / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64;
            Vec3::new(r * phi.cos(), r * phi.sin(), z)
        })
        .collect()
}

/// Relation of a triangle pair for static queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairStatus {
    Penetrating,
    /// Within `eps` without interpenetrating.
    Near,
    Far,
}

/// Interpenetration test plus an `eps` proximity test that skips the exact
/// distance when either triangle lies more than `eps` off the other's plane.
pub fn pair_status(a: &Tri, b: &Tri, tol: f64, eps: f64) -> PairStatus {
    if triangles_interpenetrate(a, b, tol) {
        return PairStatus::Penetrating;
    }
    let off = |t: &Tri, n: Vec3, p: &Vec3| {
        let l = n.norm();
        if l == 0.0 {
            return false;
        }
        let s = plane_sides(t, &(n / l), p);
        s.iter().all(|x| *x > eps) || s.iter().all(|x| *x < -eps)
    };
    if off(b, raw_normal(a), &a[0]) || off(a, raw_normal(b), &b[0]) {
        return PairStatus::Far;
    }
    if triangle_distance(a, b).distance <= eps {
        PairStatus::Near
    } else {
        PairStatus::Far
    }
}

/// Area of a triangle.
pub fn triangle_area(t: &Tri) -> f64 {
    0.5 * raw_normal(t).norm()
}
