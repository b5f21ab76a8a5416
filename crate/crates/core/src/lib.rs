//! Finite-dimensional workbench for Z2-graded operator algebras.
//!
//! The crate models graded Hilbert spaces `(H, U)` with a self-adjoint grading
//! unitary, the Fermi (graded) tensor product of operators and algebras, von
//! Neumann algebra machinery at desk scale (commutants, centers, factors), the
//! twist automorphism and twisted commutants, permutation-symmetric states on
//! product algebras, and solvers that decompose symmetric states into convex
//! mixtures of product states.
//!
//! Everything is dense, double precision, and deterministic: randomized checks
//! take explicit seeds, and every verdict is reported together with the
//! residual or projector gap it was decided on.

pub mod definetti;
pub mod fermi;
pub mod graded;
pub mod linalg;
pub mod states;
pub mod suites;
pub mod symmetry;
pub mod twisted;
pub mod vonneumann;

mod error;

pub use error::{Error, Result};
pub use linalg::{ComplexMatrix, ToleranceConfig};
