use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("no {r}-regular graph exists on {n} nodes")]
    Infeasible { n: usize, r: usize },

    #[error("configuration model gave up after {0} restarts")]
    RestartBudgetExhausted(usize),

    #[error("node {node} out of range for graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("anchor list is empty")]
    EmptyAnchors,

    #[error("graph is disconnected")]
    Disconnected,

    #[error("graph is not regular; regular Laplacian needs a uniform degree")]
    NotRegular,

    #[error("node {0} is isolated")]
    IsolatedNode(usize),

    #[error("matrix is not symmetric (max deviation {0:e})")]
    NotSymmetric(f64),

    #[error("eigensolver did not converge")]
    EigenNonConvergence,

    #[error("truncation order {m} out of range 1..={max}")]
    OrderOutOfRange { m: usize, max: usize },

    #[error("no node pairs within radius {0}")]
    NoPairsInRadius(u32),

    #[error("{0}")]
    InvalidParameter(String),

    #[error("requested {count} anchors from a graph with {n} nodes")]
    TooManyAnchors { count: usize, n: usize },

    #[error("anchor configuration is degenerate (singular value ratio {ratio:e})")]
    SingularSystem { ratio: f64 },

    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },

    #[error("bound hypothesis fails: delta {delta:e} is below the measured residual {measured:e}")]
    BoundPrecondition { delta: f64, measured: f64 },

    #[error("anchor block is singular and no regularization was requested")]
    SingularAnchorBlock,

    #[error("kernel approximation has rank {rank}, need {needed} positive eigenvalues")]
    InsufficientRank { rank: usize, needed: usize },

    #[error("input has zero variance")]
    ZeroVariance,

    #[error("feature column {0} is constant")]
    ConstantColumn(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
