use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("precision exhausted: {0}")]
    PrecisionExhausted(&'static str),
    #[error("zero argument")]
    ZeroArgument,
    #[error("polynomial is not squarefree at working precision")]
    NotSquarefree,
    #[error("hermitian matrix has no factorization B B^dagger = H")]
    NoFactorization,
    #[error("generators are rank deficient")]
    RankDeficient,
    #[error("window enumeration exceeded budget of {0} candidates")]
    WindowTooLarge(u64),
    #[error("matrix is singular to working precision")]
    Singular,
    #[error("point is not integral")]
    NotIntegral,
    #[error("hermitian matrix does not lift for the given forms")]
    NoLift,
    #[error("det(I - A^2) vanishes at working precision")]
    Degenerate,
    #[error("point is not strongly compact")]
    NotStronglyCompact,
    #[error("iteration did not converge after {0} steps")]
    NonConvergence(u32),
    #[error("point is not in the descent locus")]
    NotInDescentLocus,
    #[error("irreducible factor of unsupported degree {0}")]
    UnsupportedDegree(usize),
    #[error("points are not stably conjugate")]
    NotStablyConjugate,
    #[error("roots cannot be assigned to the endoscopic partition")]
    PartitionMismatch,
    #[error("window {0} too small: a qualifying pair touches the boundary")]
    WindowTooSmall(u32),
    #[error("point is not elliptic")]
    NotElliptic,
    #[error("level {0} too small: a qualifying coset touches the boundary")]
    LevelTooSmall(u32),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
