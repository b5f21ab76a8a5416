use thiserror::Error;

/// Everything that can go wrong across the workbench.
///
/// Numerical verdicts ("this check failed") are ordinary return values, not
/// errors; `Error` is reserved for inputs that violate a contract (shape
/// mismatches, non-Hermitian data where Hermitian is required, size caps) and
/// for internal identities whose failure means the computation cannot be
/// trusted (`FormulaMismatch`).
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes don't line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    /// Self-adjointness fails beyond tolerance where a Hermitian matrix is required.
    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NonHermitian { defect: f64 },
    /// A grading unitary must be self-adjoint, unitary, and square to the identity.
    #[error("invalid grading unitary: {0}")]
    InvalidGrading(String),
    /// A subspace or algebra is not invariant under the grading automorphism.
    #[error("not grading invariant (defect {defect:.3e})")]
    NotGradingInvariant { defect: f64 },
    /// An operator expected to be homogeneous has even and odd parts both above tolerance.
    #[error("operator is not homogeneous: {0}")]
    NotHomogeneous(String),
    /// 1-indexed site out of range for the product space at hand.
    #[error("site {site} out of range for {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },
    /// A documented size cap was exceeded.
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    /// Two local observables were required to have disjoint supports.
    #[error("overlapping supports: {0}")]
    OverlappingSupports(String),
    /// A functional required to be positive has a Gram eigenvalue below tolerance.
    #[error("functional is not positive (min Gram eigenvalue {min_eig:.6e})")]
    NotPositive { min_eig: f64 },
    /// A state required to be even has mass on the odd part of the algebra.
    #[error("state is not even (odd-part defect {defect:.3e})")]
    NotEven { defect: f64 },
    /// A state required to be pure has a nontrivial commutant in its representation.
    #[error("state is not pure: {0}")]
    NotPure(String),
    /// A state required to generate a factor has a nontrivial center.
    #[error("representation is not a factor: {0}")]
    NotFactorial(String),
    /// No unitary implements the grading automorphism in the given representation.
    #[error("grading automorphism is not implementable: {0}")]
    NotImplementable(String),
    /// The two defining formulas for the twisted commutant disagree beyond tolerance.
    #[error("twisted-commutant formulas disagree (projector gap {gap:.3e})")]
    FormulaMismatch { gap: f64 },
    /// Operands live on different ambient spaces.
    #[error("ambient space mismatch: {0}")]
    AmbientMismatch(String),
    /// A cyclic vector was required to be even under the grading unitary.
    #[error("vector is not even under the grading (defect {defect:.3e})")]
    VectorNotEven { defect: f64 },
    /// A documented precondition of the operation does not hold for these inputs.
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    /// The functional is not invariant under the requested permutation.
    #[error("state is not permutation invariant (defect {defect:.3e})")]
    NotInvariant { defect: f64 },
    /// The functional is not symmetric (invariant under all finite permutations).
    #[error("state is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    /// Malformed run specification or input file.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    /// A dense factorization failed to converge or produced unusable output.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
