use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("malformed expression: {0}")]
    MalformedExpr(String),

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("map is not immersed at the point: rank {rank} < {n}")]
    NotImmersed { rank: usize, n: usize },

    #[error("base point is singular: tangent rank {rank} < {n} at t = 0")]
    SingularBasePoint { rank: usize, n: usize },

    #[error("adapted frame is ill-conditioned (condition number {cond:.3e})")]
    FrameIllConditioned { cond: f64 },

    #[error("at least two independent second forms are required, found m = {m}")]
    MTooSmall { m: usize },

    #[error("no regular pencil with distinct eigenvalues after {tried} candidates")]
    NoRegularPair { tried: usize },

    #[error("leading form of the pencil is singular (sigma ratio {ratio:.3e})")]
    SingularLeadingForm { ratio: f64 },

    #[error("hypothesis not met: {0}")]
    HypothesisNotMet(String),

    #[error("generator spans drift across samples by {drift:.3e}")]
    DriftTooLarge { drift: f64 },

    #[error("vertex flats disagree across samples (residual {residual:.3e})")]
    InconsistentVertex { residual: f64 },

    #[error("generator directions are dependent on the director's tangent space")]
    DependentGenerators,

    #[error("director meets the vertex flat or the join is degenerate")]
    DegenerateJoin,

    #[error("rejection budget of {0} draws exceeded")]
    BudgetExceeded(usize),

    #[error("{msg} at line {line}, column {column}")]
    Parse {
        msg: String,
        line: usize,
        column: usize,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        // serde_json appends " at line L column C"; the variant carries those separately
        let full = e.to_string();
        let msg = match full.rfind(" at line ") {
            Some(i) => full[..i].to_owned(),
            None => full,
        };
        Error::Parse {
            msg,
            line: e.line(),
            column: e.column(),
        }
    }
}
