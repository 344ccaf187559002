use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix dimension {0} unsupported (1..=8)")]
    Dimension(usize),
    #[error("matrix is singular to tolerance (condition {0:e})")]
    Singular(f64),
    #[error("matrix is not expansive: eigenvalue modulus {modulus}")]
    NotExpansive { modulus: f64 },
    #[error("theta {theta} outside ({lo}, 1)")]
    ThetaRange { theta: f64, lo: f64 },
    #[error("ellipsoid series did not converge within {0} terms")]
    SeriesDiverged(usize),
    #[error("ellipsoid certificate failed: contraction {norm} > theta {theta}")]
    Certificate { norm: f64, theta: f64 },
    #[error("scale index outside the window |i| <= {0}")]
    ScaleWindow(i64),
    #[error("zero vector has no scale index")]
    ZeroPoint,
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("grid: {0}")]
    Grid(String),
    #[error("profile: {0}")]
    Profile(String),
    #[error("inclusion hypothesis fails at (i, j) = ({0}, {1})")]
    Hypothesis(i64, i64),
    #[error("no admissible cell: {0}")]
    Plant(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("parse: {0}")]
    Parse(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
