use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("transition row (state {state}, action {action}) sums to {sum}, expected 1")]
    RowNotStochastic { state: usize, action: usize, sum: f64 },

    #[error("invalid probability {value} at (state {state}, action {action}, next {next})")]
    InvalidProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },

    #[error("discount out of range: {0} is not in (0, 1)")]
    DiscountOutOfRange(f64),

    #[error("initial distribution invalid: {0}")]
    InvalidInitialDistribution(String),

    #[error("non-finite reward at (state {state}, action {action})")]
    NonFiniteReward { state: usize, action: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("policy row {state} is not a probability vector")]
    InvalidPolicy { state: usize },

    #[error("matrix row {row} is not a probability vector (sum {sum})")]
    NotRowStochastic { row: usize, sum: f64 },

    #[error("reducible chain: state {to} is not reachable from state {from}")]
    ReducibleChain { from: usize, to: usize },

    #[error("stationarity residual {0:e} exceeds tolerance")]
    StationarityResidual(f64),

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("absolute continuity violated at coordinate {coord}: nu = {nu}, mu = {mu}")]
    AbsoluteContinuity { coord: usize, nu: f64, mu: f64 },

    #[error("absolute continuity violated at (state {state}, action {action}, next {next})")]
    KlSupport {
        state: usize,
        action: usize,
        next: usize,
    },

    #[error("mixture weight {0} outside [0, 1]")]
    MixtureWeight(f64),

    #[error("conjecture set is empty")]
    EmptyConjectureSet,

    #[error("duplicate conjecture label {0}")]
    DuplicateLabel(usize),

    #[error("negative occupation entry {value} at (state {state}, action {action})")]
    NegativeOccupation { state: usize, action: usize, value: f64 },

    #[error("linear program infeasible (phase-one objective {0:e})")]
    Infeasible(f64),

    #[error("linear program unbounded along column {0}")]
    Unbounded(usize),

    #[error("simplex iteration limit {0} reached")]
    IterationLimit(usize),

    #[error("fixed-point iteration did not converge in {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
