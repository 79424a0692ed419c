use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no vertices or no triangles")]
    Empty,
    #[error(
        "triangle {triangle} references vertex {index} but the mesh has {vertex_count} vertices"
    )]
    IndexOutOfRange {
        triangle: usize,
        index: i64,
        vertex_count: usize,
    },
    #[error("invalid pose: {0}")]
    InvalidPose(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BvhError {
    #[error("mesh has no non-degenerate triangles")]
    EmptyMesh,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("configuration is not in contact")]
    NotInContact,
    #[error("source configuration is penetrating")]
    SourcePenetrating,
    #[error("direction of motion is zero")]
    ZeroMotion,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LcsError {
    #[error("local contact space needs at least one contact feature")]
    NoFeatures,
}

#[derive(Debug, Error, PartialEq)]
pub enum PgsError {
    #[error(
        "system matrix is not symmetric positive semidefinite with a positive diagonal (row {row})"
    )]
    InvalidMatrix { row: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SeedError {
    #[error("centroids coincide, centroid difference direction is undefined")]
    CoincidentCentroids,
    #[error("no seeding strategy produced a collision-free configuration")]
    AllStrategiesFailed,
}

#[derive(Debug, Error, PartialEq)]
pub enum PdError {
    #[error(transparent)]
    Seed(#[from] SeedError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error(transparent)]
    Lcs(#[from] LcsError),
    #[error(transparent)]
    Pgs(#[from] PgsError),
}

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("input mesh is not convex (vertex {vertex} lies {excess} outside face {face})")]
    NonConvex {
        face: usize,
        vertex: usize,
        excess: f64,
    },
    #[error("relative error denominator is zero")]
    ZeroDenominator,
}

#[derive(Debug, Error)]
pub enum FieldIoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a clearance field file")]
    BadMagic,
    #[error("unsupported clearance field version {0}")]
    Version(u32),
    #[error("clearance field was built for a different mesh")]
    HashMismatch,
    #[error("truncated or corrupt clearance field file")]
    Corrupt,
}
