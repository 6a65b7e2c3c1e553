use thiserror::Error;

/// Errors raised by the field, sharing, protocol, simulation and oracle layers.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} outside supported range [2, 2^40)")]
    ModulusOutOfRange(u64),
    #[error("operands belong to different fields (p={0} vs p={1})")]
    MixedField(u64, u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("model vectors must have length >= 1")]
    EmptyVector,
    #[error("polynomial has no coefficients")]
    EmptyPolynomial,
    #[error("need at least {needed} points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("duplicate evaluation point {0}")]
    DuplicateAbscissa(u64),
    #[error("point at x={0} is inconsistent with the degree-{1} interpolant")]
    ConsistencyError(u64, usize),
    #[error("evaluation point must be nonzero")]
    ZeroEvaluationPoint,
    #[error("expected {expected} noise vectors, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("invalid protocol parameters: {0}")]
    InvalidParams(String),
    #[error("N={n} is not divisible by group size nu={nu}")]
    IndivisibleN { n: usize, nu: usize },
    #[error("phase violation: {0}")]
    PhaseViolation(String),
    #[error("sequence partial for t={got} delivered to sequence t={expected}")]
    WrongSequence { expected: usize, got: usize },
    #[error("server received {got} uploads, needs at least {needed}")]
    TooManyDropouts { needed: usize, got: usize },
    #[error("invalid dropout plan: {0}")]
    InvalidDropoutPlan(String),
    #[error("invalid adversary: {0}")]
    InvalidAdversary(String),
    #[error("adversary view contains a message not addressed to the adversary: {0}")]
    ViewLeak(String),
    #[error("enumeration size {size} exceeds guard {guard}")]
    TooLarge { size: u128, guard: u128 },
}

pub type Result<T> = std::result::Result<T, Error>;
