use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("factors have mismatched row counts ({0} vs {1})")]
    MismatchedRows(usize, usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix contains non-finite entries")]
    NonFiniteEntries,
    #[error("kruskal rank enumeration capped at {cap} rows, got {rows}")]
    TooManyRows { rows: usize, cap: usize },
    #[error("result would have {entries} entries, cap is {cap}")]
    TooLarge { entries: u128, cap: usize },
    #[error("matrix is not a row tensor product of stochastic factors (residual {0:e})")]
    NotKhatriRao(f64),
    #[error("invalid tripartition: {0}")]
    BadPartition(String),
    #[error("witness values must be distinct and positive")]
    DuplicateValues,
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("certificate requires exactly three variables, got {0}")]
    NotThreeVariables(usize),
    #[error("tripartition search requires at least three variables, got {0}")]
    TooFewVariables(usize),
    #[error("recovery precondition unmet: {0}")]
    PreconditionUnmet(String),
    #[error("eigenvalue ratios collide after {0} randomized attempts")]
    DegenerateSpectrum(usize),
    #[error("slice mixture has numerical rank {found}, expected {expected}")]
    RankDeficient { found: usize, expected: usize },
    #[error("recovered mixing weight {0:e} is negative beyond tolerance")]
    NegativeWeights(f64),
    #[error("reconstruction residual {residual:e} exceeds tolerance {tol:e}")]
    ResidualExceeded { residual: f64, tol: f64 },
    #[error("unit eigenvalue is not simple; stationary distribution is not unique")]
    NonUniqueStationary,
    #[error("distribution is not stationary for the transition matrix")]
    NotStationary,
    #[error("linear system is ill-conditioned (rank {found} < {expected})")]
    IllConditioned { found: usize, expected: usize },
    #[error("edge ({0}, {1}) is not a valid edge")]
    BadEdge(usize, usize),
    #[error("row oracle is inconsistent: {0}")]
    InconsistentOracle(String),
    #[error("connection probabilities are not distinct (found {0} distinct values)")]
    NotDistinct(usize),
    #[error("candidate grid exhausted with left nullspace of dimension {0}")]
    GridExhausted(usize),
    #[error("cdf table is not monotone: {0}")]
    NonMonotoneCdf(String),
    #[error("label chaining is ambiguous: {0}")]
    AmbiguousChaining(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
