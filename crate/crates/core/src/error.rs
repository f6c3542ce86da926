use thiserror::Error;

/// Errors raised by the geometric, feature, model and parsing layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("shape mismatch in {op}: {left_rows}x{left_cols} vs {right_rows}x{right_cols}")]
    ShapeMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("need at least {need} vectors, have {have}")]
    TooFewVectors { need: usize, have: usize },

    #[error("tuple has no position vectors")]
    NoPositionVectors,

    #[error("matrix is indefinite: most negative eigenvalue {min_eigenvalue:e}")]
    Indefinite { min_eigenvalue: f64 },

    #[error("input vector {index} is linearly dependent on its predecessors")]
    LinearlyDependent { index: usize },

    #[error("lightlike degeneracy persists after {restarts} restarts")]
    LightlikeDegeneracy { restarts: usize },

    #[error("particles {i} and {j} share a position")]
    CoincidentPositions { i: usize, j: usize },

    #[error("cannot compose {left} with {right}")]
    FamilyMismatch { left: &'static str, right: &'static str },

    #[error("permutation of length {found} applied to tuple of length {expected}")]
    PermutationLength { expected: usize, found: usize },

    #[error("not a permutation: {0:?}")]
    NotAPermutation(Vec<usize>),

    #[error("syntax error at byte {offset}: expected one of {expected:?}")]
    Syntax { offset: usize, expected: Vec<String> },

    #[error("unbound tensor name `{0}`")]
    Unbound(String),

    #[error("unsupported pattern: {0}")]
    Unsupported(String),

    #[error("size guard exceeded: {0}")]
    SizeGuard(String),

    #[error("explicit permutation averaging over n={n} inputs exceeds the limit of {limit}; use a pooled coefficient function")]
    TooManyForAveraging { n: usize, limit: usize },

    #[error("rejection sampling failed after {attempts} attempts")]
    RejectionFailed { attempts: usize },

    #[error("network input width {found} does not match expected {expected}")]
    WidthMismatch { expected: usize, found: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
