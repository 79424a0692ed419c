//! Penetration depth by alternating out-projection and in-projection.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, Rotation3};

use crate::ccd::{out_project, CcdCounters};
use crate::error::{PdError, QueryError};
use crate::geometry::{fibonacci_sphere, Vec3};
use crate::lcs::build_lcs;
use crate::pgs::{self, PgsOptions};
use crate::proximity::{
    classify_with_stats, cluster_features, contact_features_with_stats, Body, CollisionStatus,
    FeatureQuery, PosedBody, QueryStats, Tolerances, DEFAULT_EPSILON_SCALE, DEFAULT_FEATURE_CAP,
};
use crate::seeding::{
    auto_seed, nested, refine_by_line_search, ClearanceField, CoherenceCache, SeedContext,
    Strategy, DEFAULT_LINE_SAMPLES, DEFAULT_RANDOM_TRIES,
};

pub const DEFAULT_MAX_OUTER_ITERS: usize = 64;
/// Local PD regions join features within this many contact tolerances.
pub const CLUSTER_RADIUS_EPS: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdConfig {
    pub epsilon_scale: f64,
    pub feature_cap: usize,
    pub max_outer_iters: usize,
    pub pgs: PgsOptions,
    pub strategy: Strategy,
    pub rng_seed: u64,
    pub random_tries: usize,
    pub line_samples: usize,
    pub local_pds: bool,
    /// Extra walks seeded from this many directions spread over the sphere.
    /// Off by default; the walk alone is a local search and these widen it.
    pub restarts: usize,
}

impl Default for PdConfig {
    fn default() -> Self {
        Self {
            epsilon_scale: DEFAULT_EPSILON_SCALE,
            feature_cap: DEFAULT_FEATURE_CAP,
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            pgs: PgsOptions::default(),
            strategy: Strategy::Auto,
            rng_seed: 0,
            random_tries: DEFAULT_RANDOM_TRIES,
            line_samples: DEFAULT_LINE_SAMPLES,
            local_pds: true,
            restarts: 0,
        }
    }
}

/// `A` under `rotation` placed at `translation` against `B` at the identity.
#[derive(Debug, Clone, Copy)]
pub struct PdQuery<'a> {
    pub a: &'a Body,
    pub rotation: Rotation3<f64>,
    pub translation: Vec3,
    pub b: &'a Body,
    pub cache: Option<&'a CoherenceCache>,
    pub field: Option<&'a ClearanceField>,
    pub config: PdConfig,
}

impl<'a> PdQuery<'a> {
    pub fn new(a: &'a Body, rotation: Rotation3<f64>, translation: Vec3, b: &'a Body) -> Self {
        Self {
            a,
            rotation,
            translation,
            b,
            cache: None,
            field: None,
            config: PdConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Seed,
    OutProjection,
    InProjection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStep {
    pub phase: Phase,
    pub translation: Vec3,
    pub status: CollisionStatus,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalPd {
    pub normal: Vec3,
    pub depth: Vec3,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PdCounters {
    pub bv_tests: u64,
    pub primitive_tests: u64,
    pub advancement_steps: u64,
    pub pgs_sweeps: u64,
    /// Sum over solves of sweeps times squared row count.
    pub pgs_work: u64,
}

impl PdCounters {
    fn add_query(&mut self, s: &QueryStats) {
        self.bv_tests += s.bv_tests;
        self.primitive_tests += s.primitive_tests;
    }

    fn add_ccd(&mut self, c: &CcdCounters) {
        self.bv_tests += c.bv_tests;
        self.primitive_tests += c.primitive_tests;
        self.advancement_steps += c.advancement_steps;
    }
}

/// Wall time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PhaseTimes {
    pub seed: Duration,
    pub ccd: Duration,
    pub features: Duration,
    pub pgs: Duration,
    pub classify: Duration,
    pub local: Duration,
    pub total: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdResult {
    /// Translation that moves `A` out of `B`.
    pub d: Vec3,
    pub magnitude: f64,
    /// Status of `A` at `translation + d`.
    pub status: CollisionStatus,
    pub iterations: usize,
    /// Rows of the last local contact space.
    pub contact_count: usize,
    pub local_pds: Vec<LocalPd>,
    pub trace: Vec<TraceStep>,
    pub counters: PdCounters,
    pub times: PhaseTimes,
    pub seed_strategy: Option<Strategy>,
    /// The iteration cap or a stalled sweep ended the search.
    pub capped: bool,
}

impl PdResult {
    fn zero(status: CollisionStatus) -> Self {
        Self {
            d: Vec3::zeros(),
            magnitude: 0.0,
            status,
            iterations: 0,
            contact_count: 0,
            local_pds: Vec::new(),
            trace: Vec::new(),
            counters: PdCounters::default(),
            times: PhaseTimes::default(),
            seed_strategy: None,
            capped: false,
        }
    }
}

struct Search<'q, 'b> {
    a: &'q PosedBody<'b>,
    b: &'q PosedBody<'b>,
    tol: Tolerances,
    cfg: &'q PdConfig,
    o: Vec3,
    scale: f64,
    counters: PdCounters,
    times: PhaseTimes,
    trace: Vec<TraceStep>,
    /// Non-penetrating samples with the row count of the space that produced
    /// them.
    candidates: Vec<(Vec3, CollisionStatus, usize)>,
    iterations: usize,
    capped: bool,
}

impl Search<'_, '_> {
    fn classify(&mut self, q: &Vec3) -> CollisionStatus {
        let t = Instant::now();
        let mut st = QueryStats::default();
        let mut s = classify_with_stats(self.a, q, self.b, &self.tol, &mut st);
        if s == CollisionStatus::Free && nested(self.a, q, self.b) {
            s = CollisionStatus::Penetrating;
        }
        self.counters.add_query(&st);
        self.times.classify += t.elapsed();
        s
    }

    fn record(&mut self, phase: Phase, q: Vec3, status: CollisionStatus, rows: usize) {
        self.trace.push(TraceStep {
            phase,
            translation: q,
            status,
        });
        if status != CollisionStatus::Penetrating {
            self.candidates.push((q, status, rows));
        }
    }

    fn sweep(&mut self, from: &Vec3, to: &Vec3) -> Result<Option<Vec3>, QueryError> {
        let t = Instant::now();
        let r = out_project(self.a, from, to, self.b, &self.tol);
        self.times.ccd += t.elapsed();
        let r = r?;
        self.counters.add_ccd(&r.counters);
        Ok(r.toc.map(|_| r.translation))
    }

    /// Alternates projections starting from the free configuration `seed`
    /// until an in-projection lands in contact.
    fn walk(&mut self, seed: Vec3) -> Result<(), PdError> {
        let o = self.o;
        let cfg = self.cfg;
        let mut source = seed;
        let mut contact = self.sweep(&seed, &o)?;
        let mut steps = 0;

        while let Some(q_contact) = contact {
            if steps >= cfg.max_outer_iters {
                self.capped = true;
                break;
            }

            let t = Instant::now();
            let fq = FeatureQuery {
                tolerances: self.tol,
                feature_cap: cfg.feature_cap,
                origin: o,
                separation_hint: Some(source - q_contact).filter(|h| h.norm() > 0.0),
                scale: self.scale,
            };
            let mut qs = QueryStats::default();
            let feats = contact_features_with_stats(self.a, &q_contact, self.b, &fq, &mut qs);
            self.counters.add_query(&qs);
            self.times.features += t.elapsed();
            // enumeration doubles as the contact check of the sweep result
            let Ok(feats) = feats else { break };
            let Ok(lcs) = build_lcs(&feats) else { break };
            self.record(
                Phase::OutProjection,
                q_contact,
                CollisionStatus::InContact,
                lcs.rows(),
            );

            let t = Instant::now();
            let sol = pgs::solve(&lcs.j, &lcs.relative_bias(&o), &cfg.pgs)?;
            self.times.pgs += t.elapsed();
            self.counters.pgs_sweeps += sol.sweeps as u64;
            self.counters.pgs_work += (sol.sweeps * lcs.rows() * lcs.rows()) as u64;
            steps += 1;
            self.iterations += 1;

            let q_in = o + Vec3::new(sol.q[0], sol.q[1], sol.q[2]);
            let st = self.classify(&q_in);
            self.record(Phase::InProjection, q_in, st, lcs.rows());
            let next = match st {
                CollisionStatus::InContact => break,
                CollisionStatus::Free => {
                    source = q_in;
                    self.sweep(&q_in, &o)?
                }
                CollisionStatus::Penetrating => {
                    if (q_in - q_contact).norm() <= 1e-12 * self.scale {
                        self.capped = true;
                        break;
                    }
                    source = q_contact;
                    self.sweep(&q_contact, &q_in)?
                }
            };
            if let Some(n) = next {
                if (n - q_contact).norm() <= 1e-12 * self.scale {
                    self.capped = true;
                    break;
                }
            }
            contact = next;
        }
        Ok(())
    }
}

/// Computes a locally optimal translational penetration depth.
///
/// The returned `d` always leaves the bodies touching or apart: the answer is
/// the nearest verified non-penetrating sample of the search, which in the
/// worst case is the seed itself.
pub fn compute_pd(query: &PdQuery) -> Result<PdResult, PdError> {
    let start = Instant::now();
    let cfg = &query.config;
    let a = PosedBody::new(query.a, query.rotation);
    let b = PosedBody::fixed(query.b);
    let tol = Tolerances::for_bodies(&query.a.mesh, &query.b.mesh, cfg.epsilon_scale);
    let scale = query
        .a
        .mesh
        .bounding_radius()
        .max(query.b.mesh.bounding_radius());
    let o = query.translation;
    let mut s = Search {
        a: &a,
        b: &b,
        tol,
        cfg,
        o,
        scale,
        counters: PdCounters::default(),
        times: PhaseTimes::default(),
        trace: Vec::new(),
        candidates: Vec::new(),
        iterations: 0,
        capped: false,
    };

    let initial = s.classify(&o);
    if initial != CollisionStatus::Penetrating {
        let mut r = PdResult::zero(initial);
        r.counters = s.counters;
        r.times = s.times;
        r.times.total = start.elapsed();
        return Ok(r);
    }

    let t = Instant::now();
    let ctx = SeedContext {
        strategy: cfg.strategy,
        cache: query.cache,
        field: query.field,
        rng_seed: cfg.rng_seed,
        random_tries: cfg.random_tries,
        line_samples: cfg.line_samples,
    };
    let seed = auto_seed(&a, &o, &b, &ctx, &tol);
    s.times.seed = t.elapsed();
    let seed = seed?;
    s.record(Phase::Seed, seed.translation, CollisionStatus::Free, 0);
    s.walk(seed.translation)?;

    if cfg.restarts > 0 {
        // bounding spheres apart, so every far start is free
        let centre = b.centroid() - a.centroid();
        let far = (a.bounding_radius() + b.bounding_radius()) * 1.01 + (o - centre).norm();
        for u in fibonacci_sphere(cfg.restarts) {
            let t = Instant::now();
            let q = refine_by_line_search(&o, &(o + u * far), &a, &b, cfg.line_samples, &tol);
            s.times.seed += t.elapsed();
            s.record(Phase::Seed, q, CollisionStatus::Free, 0);
            s.walk(q)?;
        }
    }

    // nearest sample that still checks out; the seed was verified free
    let mut order: Vec<usize> = (0..s.candidates.len()).collect();
    order.sort_by(|&i, &j| {
        (s.candidates[i].0 - o)
            .norm()
            .total_cmp(&(s.candidates[j].0 - o).norm())
            .then(i.cmp(&j))
    });
    let mut chosen = s.candidates[0];
    for i in order {
        let (q, _, rows) = s.candidates[i];
        let st = s.classify(&q);
        if st != CollisionStatus::Penetrating {
            chosen = (q, st, rows);
            break;
        }
    }
    let (best, status, contact_count) = chosen;

    let d = best - o;
    let mut local = Vec::new();
    if cfg.local_pds && status == CollisionStatus::InContact {
        let t = Instant::now();
        local = local_pds_posed(&a, &b, &best, &d, &tol, scale).unwrap_or_default();
        s.times.local = t.elapsed();
    }
    let mut times = s.times;
    times.total = start.elapsed();
    Ok(PdResult {
        d,
        magnitude: d.norm(),
        status,
        iterations: s.iterations,
        contact_count,
        local_pds: local,
        trace: s.trace,
        counters: s.counters,
        times,
        seed_strategy: Some(seed.strategy),
        capped: s.capped,
    })
}

/// Projects the global depth `d` on each contact region's normal at the
/// touching translation `o + d`.
pub fn local_pds(query: &PdQuery, d: &Vec3) -> Result<Vec<LocalPd>, QueryError> {
    let a = PosedBody::new(query.a, query.rotation);
    let b = PosedBody::fixed(query.b);
    let tol = Tolerances::for_bodies(&query.a.mesh, &query.b.mesh, query.config.epsilon_scale);
    let scale = query
        .a
        .mesh
        .bounding_radius()
        .max(query.b.mesh.bounding_radius());
    local_pds_posed(&a, &b, &(query.translation + d), d, &tol, scale)
}

fn local_pds_posed(
    a: &PosedBody,
    b: &PosedBody,
    q: &Vec3,
    d: &Vec3,
    tol: &Tolerances,
    scale: f64,
) -> Result<Vec<LocalPd>, QueryError> {
    let fq = FeatureQuery {
        tolerances: *tol,
        feature_cap: usize::MAX,
        origin: q - d,
        separation_hint: Some(*d).filter(|h| h.norm() > 0.0),
        scale,
    };
    let feats = contact_features_with_stats(a, q, b, &fq, &mut QueryStats::default())?;
    let groups = cluster_features(a, b, &feats, CLUSTER_RADIUS_EPS * tol.contact);
    Ok(groups
        .iter()
        .map(|g| {
            // the member normal that resists d the most
            let n = g
                .iter()
                .map(|&i| feats[i].normal)
                .fold(
                    feats[g[0]].normal,
                    |m, n| if n.dot(d) > m.dot(d) { n } else { m },
                );
            LocalPd {
                normal: n,
                depth: n * d.dot(&n),
            }
        })
        .collect())
}

/// Minimum-norm `q` with `J q >= c` for rows given as 3-vectors.
pub fn in_project(rows: &[Vec3], c: &[f64], opts: &PgsOptions) -> Result<Vec3, PdError> {
    let j = DMatrix::from_fn(rows.len(), 3, |i, k| rows[i][k]);
    let sol = pgs::solve(&j, &nalgebra::DVector::from_column_slice(c), opts)?;
    Ok(Vec3::new(sol.q[0], sol.q[1], sol.q[2]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proximity::classify;
    use crate::shapes;

    #[test]
    fn offset_cubes_take_one_iteration() {
        let body = Body::new(shapes::unit_cube()).unwrap();
        let q = PdQuery::new(
            &body,
            Rotation3::identity(),
            Vec3::new(0.3, 0.0, 0.0),
            &body,
        );
        let r = compute_pd(&q).unwrap();
        let eps = 1e-5 * body.mesh.bounding_radius();
        assert!((r.d - Vec3::new(0.7, 0.0, 0.0)).norm() <= eps, "{:?}", r.d);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.status, CollisionStatus::InContact);
        assert!(!r.local_pds.is_empty());
    }

    #[test]
    fn separated_input_returns_zero() {
        let body = Body::new(shapes::unit_cube()).unwrap();
        let q = PdQuery::new(
            &body,
            Rotation3::identity(),
            Vec3::new(3.0, 0.0, 0.0),
            &body,
        );
        let r = compute_pd(&q).unwrap();
        assert_eq!(r.d, Vec3::zeros());
        assert_eq!(r.status, CollisionStatus::Free);
    }

    #[test]
    fn sphere_pair_depth() {
        let sphere = Body::new(shapes::icosphere(0.5, 4)).unwrap();
        let q = PdQuery::new(
            &sphere,
            Rotation3::identity(),
            Vec3::new(0.6, 0.0, 0.0),
            &sphere,
        );
        let r = compute_pd(&q).unwrap();
        assert!((r.magnitude - 0.4).abs() < 5e-3, "{}", r.magnitude);
        let a = PosedBody::fixed(&sphere);
        let b = PosedBody::fixed(&sphere);
        let tol = Tolerances::for_bodies(&sphere.mesh, &sphere.mesh, DEFAULT_EPSILON_SCALE);
        assert_ne!(
            classify(&a, &(q.translation + r.d), &b, &tol),
            CollisionStatus::Penetrating
        );
    }

    #[test]
    fn local_pd_projection() {
        let body = Body::new(shapes::unit_cube()).unwrap();
        let q = PdQuery::new(
            &body,
            Rotation3::identity(),
            Vec3::new(0.3, 0.0, 0.0),
            &body,
        );
        let r = compute_pd(&q).unwrap();
        for l in &r.local_pds {
            assert!(l.depth.norm() <= r.magnitude + 1e-12);
        }
        let d = Vec3::new(0.7, 0.0, 0.0);
        let l = local_pds(&q, &d).unwrap();
        assert_eq!(l.len(), 1);
        assert!((l[0].depth - d).norm() < 1e-12);
    }
}
