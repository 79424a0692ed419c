use nalgebra::{DMatrix, DVector, Rotation3, UnitQuaternion, Vector3};
use proptest::prelude::*;

use pendepth::ccd::{mdd, triangle_mdd, CcdCounters};
use pendepth::geometry::{triangle_distance, Vec3};
use pendepth::lcs::build_lcs;
use pendepth::mesh::TriangleMesh;
use pendepth::pgs::{solve, PgsOptions};
use pendepth::pipeline::{compute_pd, PdQuery};
use pendepth::proximity::{
    classify, contact_features, min_distance, Body, CollisionStatus, FeatureQuery, PosedBody,
    Tolerances, DEFAULT_EPSILON_SCALE, DEFAULT_FEATURE_CAP,
};
use pendepth::shapes;

fn rotation(axis: [f64; 3], angle: f64) -> Rotation3<f64> {
    let v = Vector3::from(axis);
    if v.norm() < 1e-6 {
        return Rotation3::identity();
    }
    UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(v), angle).to_rotation_matrix()
}

fn vec3() -> impl Strategy<Value = [f64; 3]> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64]
}

fn naive_min(a: &PosedBody, qa: &Vec3, b: &PosedBody) -> f64 {
    let mut best = f64::INFINITY;
    for i in a.mesh().valid_triangles() {
        let ta = a.triangle(i, qa);
        for j in b.mesh().valid_triangles() {
            best = best.min(triangle_distance(&ta, &b.triangle(j, &Vec3::zeros())).distance);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn min_distance_matches_all_pairs(axis in vec3(), angle in 0.0..3.2f64, t in vec3(), far in 0.5..2.5f64) {
        let body_a = Body::new(shapes::icosphere(0.5, 1)).unwrap();
        let body_b = Body::new(shapes::torus(1.0, 0.3, 10, 6)).unwrap();
        let a = PosedBody::new(&body_a, rotation(axis, angle));
        let b = PosedBody::fixed(&body_b);
        let q = Vec3::from(t) * far;
        let fast = min_distance(&a, &q, &b).distance;
        let slow = naive_min(&a, &q, &b);
        prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
    }

    #[test]
    fn mdd_matches_all_pairs(axis in vec3(), angle in 0.0..3.2f64, dir in vec3(), t in vec3()) {
        let v = Vec3::from(dir);
        prop_assume!(v.norm() > 0.1);
        let body_a = Body::new(shapes::icosphere(0.4, 1)).unwrap();
        let body_b = Body::new(shapes::uv_sphere(0.6, 10, 6)).unwrap();
        let a = PosedBody::new(&body_a, rotation(axis, angle));
        let b = PosedBody::fixed(&body_b);
        let q = Vec3::from(t) * 0.2 - v.normalize() * 2.5;
        let (delta, horizon) = (1e-4, 10.0);
        let fast = mdd(&a, &q, &b, &v, delta, horizon, &mut CcdCounters::default()).unwrap();
        let dir = v.normalize();
        let mut slow = f64::INFINITY;
        for i in a.mesh().valid_triangles() {
            let ta = a.triangle(i, &q);
            for j in b.mesh().valid_triangles() {
                slow = slow.min(triangle_mdd(&ta, &b.triangle(j, &Vec3::zeros()), &dir, delta, horizon).0);
            }
        }
        prop_assert_eq!(fast.is_finite(), slow.is_finite());
        if fast.is_finite() {
            prop_assert!((fast - slow).abs() <= 1e-12, "{} vs {}", fast, slow);
            let moved = naive_min(&a, &(q + dir * fast), &b);
            prop_assert!(moved > 0.0 && moved <= delta, "gap after sweep {}", moved);
        }
    }

    #[test]
    fn features_lie_within_tolerance(axis in vec3(), angle in 0.0..3.2f64, u in vec3()) {
        let dir = Vec3::from(u);
        prop_assume!(dir.norm() > 0.1);
        let body_a = Body::new(shapes::blob(0.6, 12, 7)).unwrap();
        let body_b = Body::new(shapes::unit_cube()).unwrap();
        let a = PosedBody::new(&body_a, rotation(axis, angle));
        let b = PosedBody::fixed(&body_b);
        let tol = Tolerances::for_bodies(&body_a.mesh, &body_b.mesh, DEFAULT_EPSILON_SCALE);
        // sweep in from far away to land in contact
        let start = b.centroid() - a.centroid() + dir.normalize() * 4.0;
        let to = b.centroid() - a.centroid();
        let r = pendepth::ccd::out_project(&a, &start, &to, &b, &tol).unwrap();
        prop_assume!(r.toc.is_some());
        let q = r.translation;
        prop_assert_eq!(classify(&a, &q, &b, &tol), CollisionStatus::InContact);
        let fq = FeatureQuery {
            tolerances: tol,
            feature_cap: DEFAULT_FEATURE_CAP,
            origin: to,
            separation_hint: Some(start - q),
            scale: body_b.mesh.bounding_radius(),
        };
        let feats = contact_features(&a, &q, &b, &fq).unwrap();
        prop_assert!(!feats.is_empty());
        prop_assert!(feats.len() <= DEFAULT_FEATURE_CAP);
        for f in &feats {
            prop_assert!(f.gap <= tol.contact);
            prop_assert!((f.normal.norm() - 1.0).abs() < 1e-12);
            // the sample satisfies its own half-space, with the gap as slack
            let slack = f.row.dot(&q) - f.bias;
            prop_assert!(slack >= -1e-12 && slack <= tol.contact + 1e-12, "slack {}", slack);
        }
        prop_assert!(build_lcs(&feats).is_ok());
    }

    #[test]
    fn pgs_meets_complementarity(rows in prop::collection::vec(vec3(), 1..7), c in prop::collection::vec(-1.0..1.0f64, 7)) {
        let rows: Vec<Vec3> = rows.into_iter().map(Vec3::from).filter(|r| r.norm() > 0.2).map(|r| r.normalize()).collect();
        prop_assume!(!rows.is_empty());
        let n = rows.len();
        let j = DMatrix::from_fn(n, 3, |i, k| rows[i][k]);
        let c = DVector::from_fn(n, |i, _| c[i]);
        let opts = PgsOptions { max_sweeps: 5000, rel_tol: 1e-12 };
        let s = solve(&j, &c, &opts).unwrap();
        // consistent systems only: a feasible point must exist
        prop_assume!(s.converged);
        let slack = &j * &s.q - &c;
        for i in 0..n {
            prop_assert!(s.lambda[i] >= 0.0);
            prop_assert!(slack[i] >= -1e-8, "row {} violated by {}", i, slack[i]);
            prop_assert!((s.lambda[i] * slack[i]).abs() <= 1e-7, "row {} not complementary", i);
        }
        prop_assert!((&s.q - j.transpose() * &s.lambda * 0.25).norm() <= 1e-12);
    }

    #[test]
    fn cube_pd_is_exact_and_separating(t in vec3()) {
        let body = Body::new(shapes::unit_cube()).unwrap();
        let o = Vec3::from(t) * 0.9;
        let expected = (0..3).map(|k| 1.0 - o[k].abs()).fold(f64::INFINITY, f64::min);
        let r = compute_pd(&PdQuery::new(&body, Rotation3::identity(), o, &body)).unwrap();
        let tol = Tolerances::for_bodies(&body.mesh, &body.mesh, DEFAULT_EPSILON_SCALE);
        prop_assert_ne!(classify(&PosedBody::fixed(&body), &(o + r.d), &PosedBody::fixed(&body), &tol), CollisionStatus::Penetrating);
        prop_assert!(r.magnitude >= expected - tol.contact, "{} below {}", r.magnitude, expected);
        prop_assert!(r.magnitude <= expected + tol.contact, "{} above {}", r.magnitude, expected);
    }

    #[test]
    fn pd_is_never_penetrating(axis in vec3(), angle in 0.0..3.2f64, t in vec3()) {
        let body_a = Body::new(shapes::torus(0.8, 0.25, 12, 6)).unwrap();
        let body_b = Body::new(shapes::blob(1.0, 12, 7)).unwrap();
        let rot = rotation(axis, angle);
        let o = Vec3::from(t) * 0.8;
        let r = compute_pd(&PdQuery::new(&body_a, rot, o, &body_b)).unwrap();
        let a = PosedBody::new(&body_a, rot);
        let b = PosedBody::fixed(&body_b);
        let tol = Tolerances::for_bodies(&body_a.mesh, &body_b.mesh, DEFAULT_EPSILON_SCALE);
        prop_assert_ne!(classify(&a, &(o + r.d), &b, &tol), CollisionStatus::Penetrating);
        prop_assert!((r.d.norm() - r.magnitude).abs() <= 1e-12);
    }
}

#[test]
fn obj_round_trip_through_file() {
    let mesh = shapes::torus_knot(2, 3, 1.0, 0.12, 24, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("knot.obj");
    mesh.write_obj(&path).unwrap();
    let back = TriangleMesh::load_obj(&path).unwrap();
    assert_eq!(back.triangles(), mesh.triangles());
    assert_eq!(back.content_hash(), mesh.content_hash());
}

#[test]
fn touching_poles_give_a_vertex_contact() {
    // icospheres meet vertex to vertex along x
    let sphere = Body::new(shapes::icosphere(0.5, 4)).unwrap();
    let r = compute_pd(&PdQuery::new(
        &sphere,
        Rotation3::identity(),
        Vec3::new(0.6, 0.0, 0.0),
        &sphere,
    ))
    .unwrap();
    assert!((r.d - Vec3::new(0.4, 0.0, 0.0)).norm() < 1e-9, "{:?}", r.d);
    assert_eq!(r.iterations, 1);
}
