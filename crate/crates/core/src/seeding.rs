//! Collision-free starting configurations.

use std::collections::VecDeque;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{FieldIoError, SeedError};
use crate::geometry::{closest_point_on_triangle, Vec3};
use crate::mesh::TriangleMesh;
use crate::proximity::{classify, Body, CollisionStatus, PosedBody, Tolerances};

pub const DEFAULT_GRID: usize = 32;
pub const DEFAULT_LINE_SAMPLES: usize = 16;
pub const DEFAULT_RANDOM_TRIES: usize = 100;
pub const COHERENCE_SLOTS: usize = 3;
/// Nudge length as a fraction of `r_A + r_B`.
pub const NUDGE_FRACTION: f64 = 0.05;
/// Clearance below this many cell diagonals is discarded.
pub const SMALL_CLEARANCE_CELLS: f64 = 1.5;
/// Clear points tried per seed; a body larger than the cavities fails on
/// nearly all of them.
pub const CLEARANCE_TRIES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Auto,
    Centroid,
    Clearance,
    Coherence,
    Random,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Auto => "auto",
            Strategy::Centroid => "centroid",
            Strategy::Clearance => "clearance",
            Strategy::Coherence => "coherence",
            Strategy::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Strategy::Auto,
            Strategy::Centroid,
            Strategy::Clearance,
            Strategy::Coherence,
            Strategy::Random,
        ]
        .into_iter()
        .find(|k| k.name() == s)
    }
}

/// Free and not nested: surface tests alone cannot tell a body buried
/// inside the other from one far away.
pub fn is_free(a: &PosedBody, q: &Vec3, b: &PosedBody, tol: &Tolerances) -> bool {
    classify(a, q, b, tol) == CollisionStatus::Free && !nested(a, q, b)
}

/// Whether either body lies inside the other, for configurations whose
/// surfaces do not meet. One vertex of each decides it then.
pub fn nested(a: &PosedBody, q: &Vec3, b: &PosedBody) -> bool {
    let (alo, ahi) = a.aabb();
    let (alo, ahi) = (alo + q, ahi + q);
    let (blo, bhi) = b.aabb();
    let within = |lo: &Vec3, hi: &Vec3, olo: &Vec3, ohi: &Vec3| {
        (0..3).all(|i| lo[i] >= olo[i] && hi[i] <= ohi[i])
    };
    if !within(&alo, &ahi, &blo, &bhi) && !within(&blo, &bhi, &alo, &ahi) {
        return false;
    }
    let first = |m: &TriangleMesh| m.valid_triangles().next();
    let (Some(ta), Some(tb)) = (first(a.mesh()), first(b.mesh())) else {
        return false;
    };
    let pa = a.triangle(ta, q)[0];
    let pb = a.rotation.inverse() * (b.triangle(tb, &Vec3::zeros())[0] - q);
    winding_number(b.mesh(), &pa) >= 0.5 || winding_number(a.mesh(), &pb) >= 0.5
}

/// Moves `A` along the centroid difference until the bounding spheres of the
/// two bodies are disjoint.
pub fn centroid_difference(a: &PosedBody, q_in: &Vec3, b: &PosedBody) -> Result<Vec3, SeedError> {
    let diff = (a.centroid() + q_in) - b.centroid();
    let len = diff.norm();
    if !(len > 0.0) {
        return Err(SeedError::CoincidentCentroids);
    }
    Ok(q_in + diff * ((a.bounding_radius() + b.bounding_radius()) / len))
}

/// Walks from `q_in` toward the free configuration `q_f0` in equal steps and
/// returns the first free sample. Falls back to `q_f0`.
pub fn refine_by_line_search(
    q_in: &Vec3,
    q_f0: &Vec3,
    a: &PosedBody,
    b: &PosedBody,
    samples: usize,
    tol: &Tolerances,
) -> Vec3 {
    let n = samples.max(1);
    for k in 1..n {
        let q = q_in.lerp(q_f0, k as f64 / n as f64);
        if is_free(a, &q, b, tol) {
            return q;
        }
    }
    *q_f0
}

/// Uniform samples of `A`'s centroid in `B`'s bounding box grown by
/// `r_A + r_B`.
pub fn seed_random<R: Rng>(
    a: &PosedBody,
    b: &PosedBody,
    rng: &mut R,
    max_tries: usize,
    tol: &Tolerances,
) -> Option<Vec3> {
    let (lo, hi) = b.mesh().aabb();
    let grow = Vec3::repeat(a.bounding_radius() + b.bounding_radius());
    let (lo, hi) = (lo - grow, hi + grow);
    let ca = a.centroid();
    for _ in 0..max_tries {
        let p = Vec3::from_fn(|i, _| rng.gen_range(lo[i]..=hi[i]));
        let q = p - ca;
        if is_free(a, &q, b, tol) {
            return Some(q);
        }
    }
    None
}

/// The most recent in-contact configurations of a motion sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoherenceCache {
    entries: VecDeque<(Vec3, [f64; 4])>,
}

impl CoherenceCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Stores a configuration with the orientation (wxyz) it was found under.
    pub fn push(&mut self, q: Vec3, orientation: [f64; 4]) {
        self.entries.push_front((q, orientation));
        self.entries.truncate(COHERENCE_SLOTS);
    }

    /// Most recent first.
    pub fn entries(&self) -> impl Iterator<Item = &(Vec3, [f64; 4])> {
        self.entries.iter()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// Reuses the cached configuration nearest `q_in` under the current
/// orientation, nudging it once away from `q_in` if it no longer is free.
pub fn seed_from_coherence(
    cache: &CoherenceCache,
    a: &PosedBody,
    q_in: &Vec3,
    b: &PosedBody,
    tol: &Tolerances,
) -> Option<Vec3> {
    let (q_c, _) = cache
        .entries()
        .min_by(|x, y| (x.0 - q_in).norm().total_cmp(&(y.0 - q_in).norm()))?;
    if is_free(a, q_c, b, tol) {
        return Some(*q_c);
    }
    let away = q_c - q_in;
    if !(away.norm() > 0.0) {
        return None;
    }
    let step = NUDGE_FRACTION * (a.bounding_radius() + b.bounding_radius());
    let nudged = q_c + away.normalize() * step;
    is_free(a, &nudged, b, tol).then_some(nudged)
}

/// Sampled distance-to-surface over `B`'s bounding box and the grid points of
/// locally maximal clearance.
#[derive(Debug, Clone, PartialEq)]
pub struct ClearanceField {
    pub origin: Vec3,
    pub cell: Vec3,
    pub dims: [usize; 3],
    /// Unsigned distance per grid point, x fastest.
    pub values: Vec<f64>,
    pub clear_points: Vec<Vec3>,
    pub mesh_hash: [u8; 32],
}

impl ClearanceField {
    #[inline]
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn point(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin
            + self
                .cell
                .component_mul(&Vec3::new(i as f64, j as f64, k as f64))
    }

    pub fn value(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.index(i, j, k)]
    }
}

/// Exact distance from `p` to the surface of `body`.
pub fn point_distance(body: &Body, p: &Vec3) -> f64 {
    let bvh = &body.bvh;
    let mut best = f64::INFINITY;
    let mut stack = vec![bvh.root()];
    while let Some(n) = stack.pop() {
        let node = bvh.node(n);
        if node.volume.signed_distance(p) >= best {
            continue;
        }
        match bvh.children(node) {
            Some((l, r)) => {
                let (dl, dr) = (
                    bvh.node(l).volume.signed_distance(p),
                    bvh.node(r).volume.signed_distance(p),
                );
                if dl < dr {
                    stack.push(r);
                    stack.push(l);
                } else {
                    stack.push(l);
                    stack.push(r);
                }
            }
            None => {
                for &t in bvh.triangles_of(node) {
                    let (c, _) = closest_point_on_triangle(p, &body.mesh.triangle(t as usize));
                    best = best.min((p - c).norm());
                }
            }
        }
    }
    best
}

/// Generalized winding number of the surface around `p`; about 1 inside a
/// closed outward-oriented mesh and 0 outside.
pub fn winding_number(mesh: &TriangleMesh, p: &Vec3) -> f64 {
    let mut total = 0.0;
    for t in mesh.valid_triangles() {
        let [a, b, c] = mesh.triangle(t).map(|v| v - p);
        let (la, lb, lc) = (a.norm(), b.norm(), c.norm());
        let num = a.dot(&b.cross(&c));
        let den = la * lb * lc + a.dot(&b) * lc + b.dot(&c) * la + c.dot(&a) * lb;
        total += 2.0 * num.atan2(den);
    }
    total / (4.0 * PI)
}

/// Builds the clearance field of `body` on a grid of `dims` points spanning
/// its bounding box.
///
/// Grid points are eliminated in this order: distance below
/// 1.5 cell diagonals; not a local maximum along x and y; on the bounding box
/// boundary; not a local maximum along x, y and z. Ties survive. Points
/// enclosed by the surface are then dropped.
pub fn build_clearance_field(body: &Body, dims: [usize; 3]) -> ClearanceField {
    let dims = dims.map(|d| d.max(4));
    let (lo, hi) = body.mesh.aabb();
    let cell = Vec3::from_fn(|i, _| (hi[i] - lo[i]) / (dims[i] - 1) as f64);
    let mut field = ClearanceField {
        origin: lo,
        cell,
        dims,
        values: Vec::with_capacity(dims[0] * dims[1] * dims[2]),
        clear_points: Vec::new(),
        mesh_hash: body.mesh.content_hash(),
    };
    for k in 0..dims[2] {
        for j in 0..dims[1] {
            for i in 0..dims[0] {
                let p = field.point(i, j, k);
                field.values.push(point_distance(body, &p));
            }
        }
    }
    let threshold = SMALL_CLEARANCE_CELLS * cell.norm();
    let n = field.values.len();
    let mut alive: Vec<bool> = field.values.iter().map(|&d| d >= threshold).collect();

    let idx = |i: usize, j: usize, k: usize| i + dims[0] * (j + dims[1] * k);
    let coords = |m: usize| {
        (
            m % dims[0],
            (m / dims[0]) % dims[1],
            m / (dims[0] * dims[1]),
        )
    };
    let dominates = |m: usize, axes: &[usize]| {
        let (i, j, k) = coords(m);
        let c = [i, j, k];
        let v = field.values[m];
        axes.iter().all(|&ax| {
            let mut ok = true;
            for delta in [-1i64, 1] {
                let x = c[ax] as i64 + delta;
                if x < 0 || x >= dims[ax] as i64 {
                    continue;
                }
                let mut nb = c;
                nb[ax] = x as usize;
                ok &= v >= field.values[idx(nb[0], nb[1], nb[2])];
            }
            ok
        })
    };
    for m in 0..n {
        if alive[m] && !dominates(m, &[0, 1]) {
            alive[m] = false;
        }
    }
    for m in 0..n {
        let (i, j, k) = coords(m);
        let on_boundary = [i, j, k]
            .iter()
            .zip(dims)
            .any(|(&c, d)| c == 0 || c == d - 1);
        if on_boundary {
            alive[m] = false;
        }
    }
    for m in 0..n {
        if alive[m] && !dominates(m, &[0, 1, 2]) {
            alive[m] = false;
        }
    }
    field.clear_points = (0..n)
        .filter(|&m| alive[m])
        .map(|m| {
            let (i, j, k) = coords(m);
            field.point(i, j, k)
        })
        .filter(|p| winding_number(&body.mesh, p) < 0.5)
        .collect();
    field
}

/// Places `A`'s centroid on the clear points, nearest to `q_in` first, and
/// returns the first free translation among the [`CLEARANCE_TRIES`] nearest.
pub fn seed_from_clearance(
    field: &ClearanceField,
    a: &PosedBody,
    q_in: &Vec3,
    b: &PosedBody,
    tol: &Tolerances,
) -> Option<Vec3> {
    let ca = a.centroid();
    let mut candidates: Vec<Vec3> = field.clear_points.iter().map(|p| p - ca).collect();
    candidates.sort_by(|x, y| (x - q_in).norm().total_cmp(&(y - q_in).norm()));
    candidates
        .into_iter()
        .take(CLEARANCE_TRIES)
        .find(|q| is_free(a, q, b, tol))
}

const FIELD_MAGIC: &[u8; 4] = b"PDCF";
const FIELD_VERSION: u32 = 1;

impl ClearanceField {
    pub fn write_to(&self, mut w: impl Write) -> Result<(), FieldIoError> {
        let mut buf = Vec::new();
        buf.extend_from_slice(FIELD_MAGIC);
        buf.extend_from_slice(&FIELD_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.mesh_hash);
        for d in self.dims {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in self.origin.iter().chain(self.cell.iter()) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(self.clear_points.len() as u64).to_le_bytes());
        for p in &self.clear_points {
            for v in p.iter() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf)?;
        Ok(())
    }

    /// Reads a field and checks that it belongs to `mesh`.
    pub fn read_from(mut r: impl Read, mesh: &TriangleMesh) -> Result<Self, FieldIoError> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = bytes.as_slice();
        let mut take = |n: usize| -> Result<&[u8], FieldIoError> {
            if cur.len() < n {
                return Err(FieldIoError::Corrupt);
            }
            let (head, tail) = cur.split_at(n);
            cur = tail;
            Ok(head)
        };
        if take(4)? != FIELD_MAGIC {
            return Err(FieldIoError::BadMagic);
        }
        let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
        if version != FIELD_VERSION {
            return Err(FieldIoError::Version(version));
        }
        let hash: [u8; 32] = take(32)?.try_into().unwrap();
        if hash != mesh.content_hash() {
            return Err(FieldIoError::HashMismatch);
        }
        let mut read_u64 = || -> Result<u64, FieldIoError> {
            Ok(u64::from_le_bytes(take(8)?.try_into().unwrap()))
        };
        let mut dims = [0usize; 3];
        for d in &mut dims {
            *d = read_u64()? as usize;
        }
        let mut scalars = Vec::with_capacity(6);
        for _ in 0..6 {
            scalars.push(f64::from_bits(read_u64()?));
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or(FieldIoError::Corrupt)?;
        if count > bytes.len() / 8 {
            return Err(FieldIoError::Corrupt);
        }
        let mut values = Vec::with_capacity(count);
        for _ in 0..count {
            values.push(f64::from_bits(read_u64()?));
        }
        let n_clear = read_u64()? as usize;
        if n_clear > bytes.len() / 24 {
            return Err(FieldIoError::Corrupt);
        }
        let mut clear_points = Vec::with_capacity(n_clear);
        for _ in 0..n_clear {
            let x = f64::from_bits(read_u64()?);
            let y = f64::from_bits(read_u64()?);
            let z = f64::from_bits(read_u64()?);
            clear_points.push(Vec3::new(x, y, z));
        }
        Ok(Self {
            origin: Vec3::new(scalars[0], scalars[1], scalars[2]),
            cell: Vec3::new(scalars[3], scalars[4], scalars[5]),
            dims,
            values,
            clear_points,
            mesh_hash: hash,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FieldIoError> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>, mesh: &TriangleMesh) -> Result<Self, FieldIoError> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?), mesh)
    }
}

/// Inputs for the seeding cascade.
#[derive(Debug, Clone, Copy)]
pub struct SeedContext<'a> {
    pub strategy: Strategy,
    pub cache: Option<&'a CoherenceCache>,
    pub field: Option<&'a ClearanceField>,
    pub rng_seed: u64,
    pub random_tries: usize,
    pub line_samples: usize,
}

impl Default for SeedContext<'_> {
    fn default() -> Self {
        Self {
            strategy: Strategy::Auto,
            cache: None,
            field: None,
            rng_seed: 0,
            random_tries: DEFAULT_RANDOM_TRIES,
            line_samples: DEFAULT_LINE_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub translation: Vec3,
    pub strategy: Strategy,
}

/// Runs the requested strategy, or under [`Strategy::Auto`] the cascade
/// coherence, clearance, centroid, with random sampling only when all of
/// those fail. Every success is refined by line search and the candidate
/// nearest `q_in` wins.
pub fn auto_seed(
    a: &PosedBody,
    q_in: &Vec3,
    b: &PosedBody,
    ctx: &SeedContext,
    tol: &Tolerances,
) -> Result<Seed, SeedError> {
    let wanted = |s: Strategy| ctx.strategy == Strategy::Auto || ctx.strategy == s;
    let mut found: Vec<(Vec3, Strategy)> = Vec::new();
    if wanted(Strategy::Coherence) {
        if let Some(q) = ctx
            .cache
            .and_then(|c| seed_from_coherence(c, a, q_in, b, tol))
        {
            found.push((q, Strategy::Coherence));
        }
    }
    if wanted(Strategy::Clearance) {
        if let Some(q) = ctx
            .field
            .and_then(|f| seed_from_clearance(f, a, q_in, b, tol))
        {
            found.push((q, Strategy::Clearance));
        }
    }
    if wanted(Strategy::Centroid) {
        if let Ok(q) = centroid_difference(a, q_in, b) {
            if is_free(a, &q, b, tol) {
                found.push((q, Strategy::Centroid));
            }
        }
    }
    if wanted(Strategy::Random) && (found.is_empty() || ctx.strategy == Strategy::Random) {
        let mut rng = ChaCha8Rng::seed_from_u64(ctx.rng_seed);
        if let Some(q) = seed_random(a, b, &mut rng, ctx.random_tries, tol) {
            found.push((q, Strategy::Random));
        }
    }
    found
        .into_iter()
        .map(|(q, s)| {
            (
                refine_by_line_search(q_in, &q, a, b, ctx.line_samples, tol),
                s,
            )
        })
        .min_by(|x, y| (x.0 - q_in).norm().total_cmp(&(y.0 - q_in).norm()))
        .map(|(translation, strategy)| Seed {
            translation,
            strategy,
        })
        .ok_or(SeedError::AllStrategiesFailed)
}
