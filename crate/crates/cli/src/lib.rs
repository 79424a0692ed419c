//! Batch harness around [`pendepth`]: scenario files, random scenario
//! generation, per-frame runs with CSV output and summary statistics.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use pendepth::error::MeshError;
use pendepth::geometry::Vec3;
use pendepth::mesh::TriangleMesh;
use pendepth::oracle::{relative_error, sampled_pd};
use pendepth::pipeline::{compute_pd, PdConfig, PdQuery};
use pendepth::proximity::{
    classify, Body, CollisionStatus, PosedBody, Tolerances, DEFAULT_EPSILON_SCALE,
    DEFAULT_FEATURE_CAP,
};
use pendepth::seeding::{
    build_clearance_field, ClearanceField, CoherenceCache, Strategy, DEFAULT_GRID,
};

pub const SCENARIO_HEADER: &str = "pendepth-scenario";
pub const SCENARIO_VERSION: u32 = 1;
pub const DEFAULT_ORACLE_DIRECTIONS: usize = 1024;
/// Extension appended to `B`'s mesh path for the cached clearance field.
pub const FIELD_SIDECAR_EXT: &str = "pdcf";

/// Resampling budget per kept frame in [`generate_random_scenario`].
const MAX_DRAWS_PER_FRAME: usize = 10_000;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("scenario has no frames")]
    NoFrames,
    #[error("mesh {path}: {source}")]
    Mesh {
        path: PathBuf,
        #[source]
        source: MeshError,
    },
    #[error("mesh {0} has no usable triangles")]
    EmptyMesh(PathBuf),
    #[error("frames must be at least 1")]
    ZeroFrames,
    #[error("no penetrating configuration found after {0} draws")]
    NoPenetratingFrame(usize),
}

/// Placement of `A` for one frame; `B` stays at the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    /// Unit quaternion, `w x y z`.
    pub rotation: [f64; 4],
    pub translation: Vec3,
}

impl Frame {
    pub fn rotation_matrix(&self) -> nalgebra::Rotation3<f64> {
        let [w, x, y, z] = self.rotation;
        UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)).to_rotation_matrix()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub mesh_a: PathBuf,
    pub mesh_b: PathBuf,
    pub frames: Vec<Frame>,
    pub strategy: Strategy,
    pub epsilon_scale: f64,
    pub feature_cap: usize,
    pub grid: usize,
    pub rng_seed: u64,
    /// Extra walks from spread-out directions, see [`PdConfig::restarts`].
    pub restarts: usize,
    /// Direction count of the sampled oracle, `None` when it is off.
    pub oracle: Option<usize>,
}

impl Scenario {
    pub fn new(mesh_a: PathBuf, mesh_b: PathBuf, frames: Vec<Frame>) -> Self {
        Self {
            mesh_a,
            mesh_b,
            frames,
            strategy: Strategy::Auto,
            epsilon_scale: DEFAULT_EPSILON_SCALE,
            feature_cap: DEFAULT_FEATURE_CAP,
            grid: DEFAULT_GRID,
            rng_seed: 0,
            restarts: 0,
            oracle: None,
        }
    }

    /// Text form: a version header, then one `key value...` pair per line.
    /// Floats use the shortest representation that reads back exactly.
    pub fn to_text(&self) -> String {
        let mut s = format!("{SCENARIO_HEADER} {SCENARIO_VERSION}\n");
        let _ = writeln!(s, "mesh_a {}", self.mesh_a.display());
        let _ = writeln!(s, "mesh_b {}", self.mesh_b.display());
        let _ = writeln!(s, "strategy {}", self.strategy.name());
        let _ = writeln!(s, "epsilon_scale {}", self.epsilon_scale);
        let _ = writeln!(s, "feature_cap {}", self.feature_cap);
        let _ = writeln!(s, "grid {}", self.grid);
        let _ = writeln!(s, "seed {}", self.rng_seed);
        let _ = writeln!(s, "restarts {}", self.restarts);
        match self.oracle {
            Some(n) => {
                let _ = writeln!(s, "oracle {n}");
            }
            None => s.push_str("oracle off\n"),
        }
        for f in &self.frames {
            let [w, x, y, z] = f.rotation;
            let t = f.translation;
            let _ = writeln!(s, "frame {w} {x} {y} {z} {} {} {}", t.x, t.y, t.z);
        }
        s
    }

    /// Parses the text form. Relative mesh paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let err = |line: usize, message: String| ScenarioError::Parse { line, message };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (n, header) = lines
            .next()
            .ok_or_else(|| err(1, "empty scenario".into()))?;
        match header.split_whitespace().collect::<Vec<_>>()[..] {
            [SCENARIO_HEADER, v] if v == SCENARIO_VERSION.to_string() => {}
            [SCENARIO_HEADER, v] => return Err(err(n, format!("unsupported version {v}"))),
            _ => {
                return Err(err(
                    n,
                    format!("expected `{SCENARIO_HEADER} {SCENARIO_VERSION}`"),
                ))
            }
        }

        let mut sc = Scenario::new(PathBuf::new(), PathBuf::new(), Vec::new());
        let (mut have_a, mut have_b) = (false, false);
        for (n, line) in lines {
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let num = |what: &str| err(n, format!("invalid {what} `{rest}`"));
            match key {
                "mesh_a" | "mesh_b" => {
                    if rest.is_empty() {
                        return Err(err(n, format!("{key} needs a path")));
                    }
                    let p = base.join(rest);
                    if key == "mesh_a" {
                        sc.mesh_a = p;
                        have_a = true;
                    } else {
                        sc.mesh_b = p;
                        have_b = true;
                    }
                }
                "strategy" => sc.strategy = Strategy::parse(rest).ok_or_else(|| num("strategy"))?,
                "epsilon_scale" => {
                    sc.epsilon_scale = rest
                        .parse()
                        .ok()
                        .filter(|x: &f64| *x > 0.0)
                        .ok_or_else(|| num("epsilon_scale"))?
                }
                "feature_cap" => {
                    sc.feature_cap = rest
                        .parse()
                        .ok()
                        .filter(|k| *k > 0)
                        .ok_or_else(|| num("feature_cap"))?
                }
                "grid" => {
                    sc.grid = rest
                        .parse()
                        .ok()
                        .filter(|g| *g >= 4)
                        .ok_or_else(|| num("grid"))?
                }
                "seed" => sc.rng_seed = rest.parse().map_err(|_| num("seed"))?,
                "restarts" => sc.restarts = rest.parse().map_err(|_| num("restarts"))?,
                "oracle" => {
                    sc.oracle = match rest {
                        "off" => None,
                        _ => Some(
                            rest.parse()
                                .ok()
                                .filter(|k| *k > 0)
                                .ok_or_else(|| num("oracle"))?,
                        ),
                    }
                }
                "frame" => {
                    let v: Vec<f64> = rest
                        .split_whitespace()
                        .map(str::parse)
                        .collect::<Result<_, _>>()
                        .map_err(|_| num("frame"))?;
                    if v.len() != 7 || v.iter().any(|x| !x.is_finite()) {
                        return Err(err(n, "frame needs w x y z tx ty tz".into()));
                    }
                    if !(Quaternion::new(v[0], v[1], v[2], v[3]).norm() > 1e-12) {
                        return Err(err(n, "zero rotation quaternion".into()));
                    }
                    sc.frames.push(Frame {
                        rotation: [v[0], v[1], v[2], v[3]],
                        translation: Vec3::new(v[4], v[5], v[6]),
                    });
                }
                _ => return Err(err(n, format!("unknown key `{key}`"))),
            }
        }
        if !have_a || !have_b {
            return Err(err(0, "mesh_a and mesh_b are required".into()));
        }
        if sc.frames.is_empty() {
            return Err(ScenarioError::NoFrames);
        }
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
        let path = path.as_ref();
        fs::write(path, self.to_text()).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn load_body(path: &Path) -> Result<Body, ScenarioError> {
    let mesh = TriangleMesh::load_obj(path).map_err(|source| ScenarioError::Mesh {
        path: path.to_path_buf(),
        source,
    })?;
    Body::new(mesh).map_err(|_| ScenarioError::EmptyMesh(path.to_path_buf()))
}

/// Uniformly distributed rotation as a `w x y z` quaternion.
fn random_rotation<R: Rng>(rng: &mut R) -> [f64; 4] {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let tau = std::f64::consts::TAU;
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    [
        b * (tau * u3).cos(),
        a * (tau * u2).sin(),
        a * (tau * u2).cos(),
        b * (tau * u3).sin(),
    ]
}

fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    let z: f64 = rng.gen_range(-1.0..=1.0);
    let phi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Random frames for `mesh` against a copy of itself: uniform rotation, and
/// the centroid displaced by half the bounding-box diagonal in a uniform
/// direction. Draws that do not interpenetrate are discarded.
pub fn generate_random_body_frames(
    body: &Body,
    frames: usize,
    rng_seed: u64,
) -> Result<Vec<Frame>, ScenarioError> {
    if frames == 0 {
        return Err(ScenarioError::ZeroFrames);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let half = 0.5 * body.mesh.aabb_diagonal();
    let c = body.mesh.centroid();
    let tol = Tolerances::for_bodies(&body.mesh, &body.mesh, DEFAULT_EPSILON_SCALE);
    let b = PosedBody::fixed(body);
    let mut out = Vec::with_capacity(frames);
    while out.len() < frames {
        let mut draws = 0;
        loop {
            draws += 1;
            if draws > MAX_DRAWS_PER_FRAME {
                return Err(ScenarioError::NoPenetratingFrame(MAX_DRAWS_PER_FRAME));
            }
            let frame = Frame {
                rotation: random_rotation(&mut rng),
                translation: Vec3::zeros(),
            };
            let rot = frame.rotation_matrix();
            let t = c + random_direction(&mut rng) * half - rot * c;
            let a = PosedBody::new(body, rot);
            if classify(&a, &t, &b, &tol) == CollisionStatus::Penetrating {
                out.push(Frame {
                    translation: t,
                    ..frame
                });
                break;
            }
        }
    }
    Ok(out)
}

/// Random scenario of `mesh` against itself; see [`generate_random_body_frames`].
pub fn generate_random_scenario(
    mesh: impl AsRef<Path>,
    frames: usize,
    rng_seed: u64,
) -> Result<Scenario, ScenarioError> {
    let path = mesh.as_ref();
    let body = load_body(path)?;
    let frames = generate_random_body_frames(&body, frames, rng_seed)?;
    let mut sc = Scenario::new(path.to_path_buf(), path.to_path_buf(), frames);
    sc.rng_seed = rng_seed;
    Ok(sc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldSource {
    Unused,
    Loaded,
    Built,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Write wall times; when off the time columns are zero and the CSV is
    /// a pure function of the scenario.
    pub timing: bool,
    /// Read and write the clearance-field sidecar next to `B`'s mesh.
    pub field_cache: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            timing: true,
            field_cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRow {
    pub frame: usize,
    pub pd: Vec3,
    pub pd_norm: f64,
    pub iterations: usize,
    pub contacts: usize,
    pub n_bv: u64,
    pub n_p: u64,
    pub n_g_total: u64,
    pub time_us: u64,
    pub seed_time_us: u64,
    pub seed_strategy: String,
    pub oracle_pd: Option<f64>,
    pub rel_error_pct: Option<f64>,
    /// Empty on success.
    pub error: String,
}

impl FrameRow {
    fn failed(frame: usize, error: String) -> Self {
        Self {
            frame,
            pd: Vec3::zeros(),
            pd_norm: 0.0,
            iterations: 0,
            contacts: 0,
            n_bv: 0,
            n_p: 0,
            n_g_total: 0,
            time_us: 0,
            seed_time_us: 0,
            seed_strategy: String::new(),
            oracle_pd: None,
            rel_error_pct: None,
            error,
        }
    }

    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    pub count: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        };
        Self {
            mean: v.iter().sum::<f64>() / n as f64,
            median,
            count: n,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Summary {
    pub frames: usize,
    pub failed: usize,
    /// Excludes the first (warm-up) frame when there is more than one.
    pub time_us: Stat,
    pub contacts: Stat,
    pub iterations: Stat,
    pub rel_error_pct: Option<Stat>,
}

impl Summary {
    pub fn from_rows(rows: &[FrameRow]) -> Self {
        let ok: Vec<&FrameRow> = rows.iter().filter(|r| r.ok()).collect();
        let timed: Vec<f64> = ok
            .iter()
            .filter(|r| rows.len() == 1 || r.frame != rows[0].frame)
            .map(|r| r.time_us as f64)
            .collect();
        let errors: Vec<f64> = ok.iter().filter_map(|r| r.rel_error_pct).collect();
        Self {
            frames: rows.len(),
            failed: rows.len() - ok.len(),
            time_us: Stat::of(&timed),
            contacts: Stat::of(&ok.iter().map(|r| r.contacts as f64).collect::<Vec<_>>()),
            iterations: Stat::of(&ok.iter().map(|r| r.iterations as f64).collect::<Vec<_>>()),
            rel_error_pct: (!errors.is_empty()).then(|| Stat::of(&errors)),
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "frames {} failed {}", self.frames, self.failed)?;
        let line = |f: &mut std::fmt::Formatter<'_>, name: &str, s: &Stat| {
            writeln!(
                f,
                "{name:<14} mean {:>12.4} median {:>12.4} (n={})",
                s.mean, s.median, s.count
            )
        };
        line(f, "time_us", &self.time_us)?;
        line(f, "contacts", &self.contacts)?;
        line(f, "iterations", &self.iterations)?;
        if let Some(e) = &self.rel_error_pct {
            line(f, "rel_error_pct", e)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub rows: Vec<FrameRow>,
    pub oracle: bool,
    pub field: FieldSource,
}

impl RunReport {
    pub fn summary(&self) -> Summary {
        Summary::from_rows(&self.rows)
    }

    pub fn csv_header(&self) -> String {
        let mut h = String::from(
            "frame,pd_x,pd_y,pd_z,pd_norm,iterations,contacts,n_bv,n_p,n_g_total,time_us,seed_time_us,seed_strategy_used",
        );
        if self.oracle {
            h.push_str(",oracle_pd,rel_error_pct");
        }
        h.push_str(",error");
        h
    }

    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{}", self.csv_header())?;
        for r in &self.rows {
            if r.ok() {
                write!(
                    w,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.frame,
                    r.pd.x,
                    r.pd.y,
                    r.pd.z,
                    r.pd_norm,
                    r.iterations,
                    r.contacts,
                    r.n_bv,
                    r.n_p,
                    r.n_g_total,
                    r.time_us,
                    r.seed_time_us,
                    r.seed_strategy
                )?;
            } else {
                write!(w, "{},,,,,,,,,,,,", r.frame)?;
            }
            if self.oracle {
                let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
                write!(w, ",{},{}", opt(r.oracle_pd), opt(r.rel_error_pct))?;
            }
            // error text never contains the separator
            writeln!(w, ",{}", r.error.replace([',', '\n'], ";"))?;
        }
        Ok(())
    }

    pub fn csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

fn sidecar_path(mesh: &Path) -> PathBuf {
    let mut s = mesh.as_os_str().to_owned();
    s.push(".");
    s.push(FIELD_SIDECAR_EXT);
    PathBuf::from(s)
}

fn clearance_field(
    body: &Body,
    mesh_path: &Path,
    grid: usize,
    cache: bool,
) -> (ClearanceField, FieldSource) {
    let path = sidecar_path(mesh_path);
    if cache {
        if let Ok(f) = ClearanceField::load(&path, &body.mesh) {
            if f.dims == [grid; 3] {
                return (f, FieldSource::Loaded);
            }
        }
    }
    let f = build_clearance_field(body, [grid; 3]);
    if cache {
        // a read-only mesh directory only costs the cache
        let _ = f.save(&path);
    }
    (f, FieldSource::Built)
}

/// Runs every frame of `scenario`. Failures are recorded per row and the
/// run continues.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Result<RunReport, ScenarioError> {
    if scenario.frames.is_empty() {
        return Err(ScenarioError::NoFrames);
    }
    let body_a = load_body(&scenario.mesh_a)?;
    let body_b = if scenario.mesh_b == scenario.mesh_a {
        None
    } else {
        Some(load_body(&scenario.mesh_b)?)
    };
    let body_b = body_b.as_ref().unwrap_or(&body_a);

    let (field, field_source) = match scenario.strategy {
        Strategy::Auto | Strategy::Clearance => {
            let (f, s) = clearance_field(body_b, &scenario.mesh_b, scenario.grid, opts.field_cache);
            (Some(f), s)
        }
        _ => (None, FieldSource::Unused),
    };

    let mut cache = CoherenceCache::new();
    let mut rows = Vec::with_capacity(scenario.frames.len());
    for (i, frame) in scenario.frames.iter().enumerate() {
        let rotation = frame.rotation_matrix();
        let mut query = PdQuery::new(&body_a, rotation, frame.translation, body_b);
        query.cache = Some(&cache);
        query.field = field.as_ref();
        query.config = PdConfig {
            epsilon_scale: scenario.epsilon_scale,
            feature_cap: scenario.feature_cap,
            strategy: scenario.strategy,
            rng_seed: scenario.rng_seed.wrapping_add(i as u64),
            restarts: scenario.restarts,
            ..PdConfig::default()
        };
        let start = Instant::now();
        let result = compute_pd(&query);
        let elapsed = start.elapsed();
        let r = match result {
            Ok(r) => r,
            Err(e) => {
                rows.push(FrameRow::failed(i, e.to_string()));
                continue;
            }
        };
        let mut row = FrameRow {
            frame: i,
            pd: r.d,
            pd_norm: r.magnitude,
            iterations: r.iterations,
            contacts: r.contact_count,
            n_bv: r.counters.bv_tests,
            n_p: r.counters.primitive_tests,
            n_g_total: r.counters.pgs_sweeps,
            time_us: 0,
            seed_time_us: 0,
            seed_strategy: r
                .seed_strategy
                .map(|s| s.name().to_string())
                .unwrap_or_else(|| "none".into()),
            oracle_pd: None,
            rel_error_pct: None,
            error: String::new(),
        };
        if opts.timing {
            row.time_us = elapsed.as_micros() as u64;
            row.seed_time_us = r.times.seed.as_micros() as u64;
        }
        if let Some(dirs) = scenario.oracle {
            let a = PosedBody::new(&body_a, rotation);
            let b = PosedBody::fixed(body_b);
            let o = sampled_pd(&a, &frame.translation, &b, dirs);
            row.oracle_pd = Some(o.magnitude);
            match relative_error(r.magnitude, o.magnitude, &body_a.mesh, &body_b.mesh) {
                Ok(e) => row.rel_error_pct = Some(100.0 * e),
                Err(e) => row.error = e.to_string(),
            }
        }
        if r.magnitude > 0.0 {
            cache.push(frame.translation + r.d, frame.rotation);
        }
        rows.push(row);
    }
    Ok(RunReport {
        rows,
        oracle: scenario.oracle.is_some(),
        field: field_source,
    })
}
