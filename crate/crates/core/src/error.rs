use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while building, reading or processing meshes and maps.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error (line {line}): {message}")]
    Parse { line: usize, message: String },

    #[error("unsupported mesh format: {0}")]
    UnsupportedFormat(String),

    #[error("mesh has no vertices or no faces")]
    EmptyMesh,

    #[error("face {face} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },

    #[error("face {0} is degenerate (repeated vertex index)")]
    DegenerateFace(usize),

    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),

    #[error("non-manifold edge ({0}, {1}) is shared by more than two faces")]
    NonManifoldEdge(usize, usize),

    #[error("non-manifold vertex {0}")]
    NonManifoldVertex(usize),

    #[error("mesh is not orientable")]
    NonOrientable,

    #[error("mesh has {0} connected components; exactly one is required")]
    MultipleComponents(usize),

    #[error("no boundary loop (closed surface)")]
    ClosedSurface,

    #[error("mesh has {0} boundary loops; exactly one is required")]
    MultipleBoundaries(usize),

    #[error("nonzero genus: Euler characteristic V - E + F = {0}, expected 1")]
    NonZeroGenus(i64),

    #[error("zero-length edge ({0}, {1})")]
    ZeroLengthEdge(usize, usize),

    #[error("degenerate face {0} in {1}")]
    DegenerateGeometry(usize, &'static str),

    #[error("boundary points are collinear or coincident; cannot fit a plane")]
    DegenerateBoundaryPlane,

    #[error("point is off the spheroid surface (residual {0:.3e})")]
    OffSpheroid(f64),

    #[error("spheroidal projection is singular at the south pole")]
    ProjectionSingularity,

    #[error("invalid spheroid: {0}")]
    InvalidSpheroid(String),

    #[error("Beltrami coefficient on face {face} has modulus {modulus:.4} >= 1")]
    FoldedBeltrami { face: usize, modulus: f64 },

    #[error("linear system is singular or not positive definite: {0}")]
    SingularSystem(String),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("least-squares system is rank deficient ({rows} points, {cols} basis functions); try a lower n_max")]
    RankDeficient { rows: usize, cols: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    /// Wrap an error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub trait ResultExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> ResultExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| e.in_stage(stage))
    }
}
