//! Translational continuous collision detection by conservative advancement.

use crate::bvh::MAX_VOLUME_STEPS;
use crate::error::QueryError;
use crate::geometry::{triangle_distance, triangles_interpenetrate, Tri, Vec3};
use crate::proximity::{PosedBody, Tolerances};

/// Iteration cap of the primitive-level advancement loop.
pub const MAX_ADVANCEMENT_STEPS: u32 = 64;

/// Work done by a directional-distance query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CcdCounters {
    /// Bounding-volume pairs whose directional distance was evaluated.
    pub bv_tests: u64,
    /// Triangle pairs whose directional distance was evaluated.
    pub primitive_tests: u64,
    /// Distance evaluations spent inside advancement loops, volumes included.
    pub advancement_steps: u64,
}

impl CcdCounters {
    pub fn add(&mut self, o: &CcdCounters) {
        self.bv_tests += o.bv_tests;
        self.primitive_tests += o.primitive_tests;
        self.advancement_steps += o.advancement_steps;
    }

    /// Average advancement iterations per evaluated pair.
    pub fn mean_steps(&self) -> f64 {
        let pairs = self.bv_tests + self.primitive_tests;
        if pairs == 0 {
            0.0
        } else {
            self.advancement_steps as f64 / pairs as f64
        }
    }
}

/// Length `A` can travel along unit direction `dir` before coming within
/// `delta` of `B`, with the iteration count. `+inf` when the triangles
/// separate along `dir` or the length exceeds `horizon`.
///
/// Each step aims to leave half the threshold as clearance, so the result is
/// never an exactly touching pair. A pair that starts inside the threshold
/// only counts once its gap halves, which lets tangential motion through.
pub fn triangle_mdd(ta: &Tri, tb: &Tri, dir: &Vec3, delta: f64, horizon: f64) -> (f64, u32) {
    let mut s = 0.0;
    let mut target = delta;
    for step in 1..=MAX_ADVANCEMENT_STEPS {
        let moved = [ta[0] + dir * s, ta[1] + dir * s, ta[2] + dir * s];
        let d = triangle_distance(&moved, tb);
        if d.distance == 0.0 {
            return (s, step);
        }
        let n = (d.point_b - d.point_a) / d.distance;
        let mu = dir.dot(&n);
        if mu <= 0.0 {
            return (f64::INFINITY, step);
        }
        if step == 1 && d.distance < delta {
            target = d.distance * 0.5;
        }
        if d.distance < target {
            return (s, step);
        }
        s += (d.distance - target * 0.5) / mu;
        if s > horizon {
            return (f64::INFINITY, step);
        }
    }
    (s, MAX_ADVANCEMENT_STEPS)
}

/// Minimal directional distance from `A` at `qa` to `B` along `v`, as a
/// travelled length, capped at `horizon` (`+inf` beyond it).
///
/// Node pairs are bounded by advancement between capsules inflated by
/// `delta`, which never overshoots the primitive result.
pub fn mdd(
    a: &PosedBody,
    qa: &Vec3,
    b: &PosedBody,
    v: &Vec3,
    delta: f64,
    horizon: f64,
    counters: &mut CcdCounters,
) -> Result<f64, QueryError> {
    let speed = v.norm();
    if !(speed > 0.0) {
        return Err(QueryError::ZeroMotion);
    }
    let dir = v / speed;
    let bvh_a = a.bvh();
    let bvh_b = b.bvh();
    let mut best = horizon;
    let mut found = false;

    let bound = |ia: usize, ib: usize, best: f64, counters: &mut CcdCounters| {
        counters.bv_tests += 1;
        let va = a.volume(ia).translated(qa);
        let (s, steps) = va.directional_distance_steps(b.volume(ib), &dir, delta, best);
        counters.advancement_steps += steps.min(MAX_VOLUME_STEPS as u32) as u64;
        s
    };

    let root_bound = bound(bvh_a.root(), bvh_b.root(), best, counters);
    let mut stack = vec![(root_bound, bvh_a.root(), bvh_b.root())];
    while let Some((lb, ia, ib)) = stack.pop() {
        if lb > best || (found && lb >= best) {
            continue;
        }
        let na = bvh_a.node(ia);
        let nb = bvh_b.node(ib);
        let pairs = match (bvh_a.children(na), bvh_b.children(nb)) {
            (None, None) => {
                for &ta in bvh_a.triangles_of(na) {
                    let tri_a = a.triangle(ta as usize, qa);
                    for &tb in bvh_b.triangles_of(nb) {
                        let tri_b = b.triangle(tb as usize, &Vec3::zeros());
                        counters.primitive_tests += 1;
                        let (s, steps) = triangle_mdd(&tri_a, &tri_b, &dir, delta, best);
                        counters.advancement_steps += steps as u64;
                        if s == 0.0 && triangles_interpenetrate(&tri_a, &tri_b, delta * 1e-5) {
                            return Err(QueryError::SourcePenetrating);
                        }
                        if s < best || (!found && s <= best) {
                            best = s;
                            found = true;
                        }
                    }
                }
                continue;
            }
            (Some((l, r)), None) => [(l, ib), (r, ib)],
            (None, Some((l, r))) => [(ia, l), (ia, r)],
            (Some((al, ar)), Some((bl, br))) => {
                if a.volume(ia).radius >= b.volume(ib).radius {
                    [(al, ib), (ar, ib)]
                } else {
                    [(ia, bl), (ia, br)]
                }
            }
        };
        let mut children = [(0.0, 0, 0); 2];
        for (k, &(ca, cb)) in pairs.iter().enumerate() {
            children[k] = (bound(ca, cb, best, counters), ca, cb);
        }
        // nearer child on top of the stack
        if children[0].0 < children[1].0 {
            children.swap(0, 1);
        }
        for c in children {
            if c.0.is_finite() && c.0 <= best {
                stack.push(c);
            }
        }
    }
    Ok(if found { best } else { f64::INFINITY })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcdResult {
    /// Normalized time of first contact in `[0, 1]`, `None` when the whole
    /// segment is free.
    pub toc: Option<f64>,
    /// Translation at first contact, or the target when there is none.
    pub translation: Vec3,
    pub counters: CcdCounters,
}

/// Sweeps `A` from `from` toward `to` and stops at the first configuration
/// within the contact tolerance of `B`.
pub fn out_project(
    a: &PosedBody,
    from: &Vec3,
    to: &Vec3,
    b: &PosedBody,
    tol: &Tolerances,
) -> Result<CcdResult, QueryError> {
    let v = to - from;
    let len = v.norm();
    let mut counters = CcdCounters::default();
    let s = mdd(a, from, b, &v, tol.contact * 0.5, len, &mut counters)?;
    if s.is_finite() && s <= len {
        let toc = s / len;
        Ok(CcdResult {
            toc: Some(toc),
            translation: from + v * toc,
            counters,
        })
    } else {
        Ok(CcdResult {
            toc: None,
            translation: *to,
            counters,
        })
    }
}
