//! Z2-graded Hilbert spaces, the grading automorphism, and homogeneous operators.
//!
//! A graded space is a pair `(H, U)` with `U` a self-adjoint unitary. The
//! grading automorphism is `theta(T) = U T U`; an operator is even when
//! `theta(T) = T`, odd when `theta(T) = -T`, and every operator splits as
//! `T = (T + theta(T))/2 + (T - theta(T))/2`. The even part of this split is
//! the canonical conditional expectation onto the even subalgebra.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::{self, ComplexMatrix};
use crate::{Error, Result};

/// Parity of a homogeneous operator or vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Grade {
    Even,
    Odd,
}

impl Grade {
    /// `+1` for even, `-1` for odd.
    pub fn sign(self) -> f64 {
        match self {
            Grade::Even => 1.0,
            Grade::Odd => -1.0,
        }
    }

    /// Grade of a product of homogeneous factors.
    pub fn product(self, other: Grade) -> Grade {
        if self == other {
            Grade::Even
        } else {
            Grade::Odd
        }
    }

    pub fn is_odd(self) -> bool {
        self == Grade::Odd
    }
}

/// Sign rule of the graded commutation relations: `-1` iff both factors are odd.
pub fn koszul_sign(a: Grade, b: Grade) -> f64 {
    if a.is_odd() && b.is_odd() {
        -1.0
    } else {
        1.0
    }
}

/// A graded Hilbert space: a dimension together with its grading unitary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedSpace {
    pub dim: usize,
    #[serde(rename = "U")]
    pub u: ComplexMatrix,
}

impl GradedSpace {
    /// Validate and wrap a grading unitary: square, self-adjoint, `U^2 = I`.
    pub fn new(u: ComplexMatrix, eq_tol: f64) -> Result<Self> {
        if !u.is_square() {
            return Err(Error::InvalidGrading(format!(
                "grading unitary must be square, got {}x{}",
                u.rows, u.cols
            )));
        }
        let defect = u.hermitian_defect();
        if defect > eq_tol {
            return Err(Error::InvalidGrading(format!(
                "grading unitary not self-adjoint (defect {defect:.3e})"
            )));
        }
        let sq = u.matmul(&u)?;
        let inv_defect = sq.sub(&ComplexMatrix::identity(u.rows))?.max_abs();
        if inv_defect > eq_tol {
            return Err(Error::InvalidGrading(format!(
                "grading unitary does not square to the identity (defect {inv_defect:.3e})"
            )));
        }
        Ok(Self { dim: u.rows, u })
    }

    /// Diagonal grading from a sign pattern.
    pub fn from_signs(signs: &[f64]) -> Self {
        Self {
            dim: signs.len(),
            u: ComplexMatrix::diag(signs),
        }
    }

    /// The standard graded qubit: `dim 2`, `U = diag(1, -1)`.
    pub fn qubit() -> Self {
        Self::from_signs(&[1.0, -1.0])
    }

    /// Trivial grading (everything even).
    pub fn trivial(dim: usize) -> Self {
        Self {
            dim,
            u: ComplexMatrix::identity(dim),
        }
    }

    fn check_dim(&self, t: &ComplexMatrix) -> Result<()> {
        if t.rows != self.dim || t.cols != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "operator {}x{} on space of dim {}",
                t.rows, t.cols, self.dim
            )));
        }
        Ok(())
    }

    /// Grading automorphism `theta(T) = U T U`.
    pub fn theta(&self, t: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_dim(t)?;
        self.u.matmul(t)?.matmul(&self.u)
    }

    /// Split into even and odd parts, `T = T_+ + T_-`.
    pub fn even_odd_split(&self, t: &ComplexMatrix) -> Result<(ComplexMatrix, ComplexMatrix)> {
        let th = self.theta(t)?;
        let half = Complex64::new(0.5, 0.0);
        let even = t.add(&th)?.scale(half);
        let odd = t.sub(&th)?.scale(half);
        Ok((even, odd))
    }

    /// Conditional expectation onto the even subalgebra, `(T + theta(T)) / 2`.
    pub fn conditional_expectation(&self, t: &ComplexMatrix) -> Result<ComplexMatrix> {
        Ok(self.even_odd_split(t)?.0)
    }

    /// Parity of a homogeneous operator.
    ///
    /// The zero operator counts as even. Fails with [`Error::NotHomogeneous`]
    /// when both parts exceed `tol` relative to the operator's largest entry.
    pub fn grade_of(&self, t: &ComplexMatrix, tol: f64) -> Result<Grade> {
        let (even, odd) = self.even_odd_split(t)?;
        let scale = t.max_abs().max(1.0);
        let (e, o) = (even.max_abs(), odd.max_abs());
        if o <= tol * scale {
            Ok(Grade::Even)
        } else if e <= tol * scale {
            Ok(Grade::Odd)
        } else {
            Err(Error::NotHomogeneous(format!(
                "even part {e:.3e}, odd part {o:.3e}"
            )))
        }
    }

    /// Largest residual of `theta` mapping the span outside itself.
    ///
    /// Zero (within tolerances) means the span is grading invariant.
    pub fn grading_invariance_defect(
        &self,
        span: &[ComplexMatrix],
        rank_tol: f64,
    ) -> Result<f64> {
        let basis: Vec<Vec<Complex64>> = span.iter().map(|m| m.flatten()).collect();
        let mut worst: f64 = 0.0;
        for m in span {
            let th = self.theta(m)?;
            let scale = th.fro_norm().max(1.0);
            let (_, res) = linalg::lstsq(&basis, &th.flatten(), rank_tol)?;
            worst = worst.max(res / scale);
        }
        Ok(worst)
    }

    /// Check that a span is grading invariant, failing loudly otherwise.
    pub fn check_grading_invariance(
        &self,
        span: &[ComplexMatrix],
        rank_tol: f64,
        eq_tol: f64,
    ) -> Result<()> {
        let defect = self.grading_invariance_defect(span, rank_tol)?;
        if defect > eq_tol {
            return Err(Error::NotGradingInvariant { defect });
        }
        Ok(())
    }

    /// Orthonormal homogeneous vector basis of `H`: the eigenbasis of `U`,
    /// each vector tagged even (`U v = v`) or odd (`U v = -v`).
    pub fn homogeneous_vector_basis(&self, eq_tol: f64) -> Result<Vec<(Vec<Complex64>, Grade)>> {
        let (vals, vecs) = linalg::hermitian_eig(&self.u, eq_tol)?;
        let mut out = Vec::with_capacity(self.dim);
        for (j, lam) in vals.iter().enumerate() {
            let grade = if *lam > 0.0 { Grade::Even } else { Grade::Odd };
            out.push(((0..self.dim).map(|i| vecs[(i, j)]).collect(), grade));
        }
        Ok(out)
    }

    /// Homogeneous operator basis of the full algebra `B(H)`: the matrix
    /// units in the eigenbasis of `U`, graded by whether they preserve or
    /// flip parity. For a diagonal grading these are the ordinary matrix
    /// units in the standard order `E(a,b), b fastest`.
    pub fn homogeneous_unit_basis(&self, eq_tol: f64) -> Result<Vec<GradedOperator>> {
        let hv = self.homogeneous_vector_basis(eq_tol)?;
        // For a diagonal U the eigensolver may permute the standard basis;
        // keep the standard order in that case so callers see E(a,b) directly.
        let diagonal = (0..self.dim).all(|i| {
            (0..self.dim).all(|j| i == j || self.u[(i, j)].norm() < 1e-14)
        });
        let units: Vec<(Vec<Complex64>, Grade)> = if diagonal {
            (0..self.dim)
                .map(|a| {
                    let mut v = vec![Complex64::new(0.0, 0.0); self.dim];
                    v[a] = Complex64::new(1.0, 0.0);
                    let g = if self.u[(a, a)].re > 0.0 {
                        Grade::Even
                    } else {
                        Grade::Odd
                    };
                    (v, g)
                })
                .collect()
        } else {
            hv
        };
        let mut out = Vec::with_capacity(self.dim * self.dim);
        for (va, ga) in &units {
            for (vb, gb) in &units {
                let mat = ComplexMatrix::from_fn(self.dim, self.dim, |i, j| va[i] * vb[j].conj());
                let grade = ga.product(*gb);
                out.push(GradedOperator { mat, grade });
            }
        }
        Ok(out)
    }
}

/// A matrix together with its parity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradedOperator {
    pub mat: ComplexMatrix,
    pub grade: Grade,
}

impl GradedOperator {
    /// Tag an operator with the parity computed from the space's grading.
    pub fn new(space: &GradedSpace, mat: ComplexMatrix, tol: f64) -> Result<Self> {
        let grade = space.grade_of(&mat, tol)?;
        Ok(Self { mat, grade })
    }
}

/// Nonzero homogeneous components of an arbitrary operator.
pub fn homogeneous_components(
    space: &GradedSpace,
    t: &ComplexMatrix,
    eq_tol: f64,
) -> Result<Vec<GradedOperator>> {
    let (even, odd) = space.even_odd_split(t)?;
    let scale = t.max_abs().max(1.0);
    let mut out = Vec::new();
    if even.max_abs() > eq_tol * scale {
        out.push(GradedOperator {
            mat: even,
            grade: Grade::Even,
        });
    }
    if odd.max_abs() > eq_tol * scale {
        out.push(GradedOperator {
            mat: odd,
            grade: Grade::Odd,
        });
    }
    Ok(out)
}

/// Replace a grading-invariant span by a homogeneous basis of the same span:
/// even and odd parts split off and orthonormalized separately.
///
/// Parts that are numerically zero relative to their parent element are
/// dropped (otherwise an all-noise parity group would acquire spurious
/// rank under the relative cutoff). The homogeneous basis must match the
/// span's rank exactly; a mismatch means the span was not grading
/// invariant after all.
pub fn homogenize_span(
    space: &GradedSpace,
    span: &[ComplexMatrix],
    rank_tol: f64,
) -> Result<Vec<GradedOperator>> {
    let mut evens = Vec::new();
    let mut odds = Vec::new();
    let mut all = Vec::new();
    for m in span {
        let scale = m.fro_norm();
        if scale == 0.0 {
            continue;
        }
        all.push(m.flatten());
        let (e, o) = space.even_odd_split(m)?;
        if e.fro_norm() > rank_tol * scale {
            evens.push(e.flatten());
        }
        if o.fro_norm() > rank_tol * scale {
            odds.push(o.flatten());
        }
    }
    let rank = linalg::orthonormal_columns(&all, rank_tol).len();
    let mut out = Vec::new();
    for (vecs, grade) in [(evens, Grade::Even), (odds, Grade::Odd)] {
        for col in linalg::orthonormal_columns(&vecs, rank_tol) {
            out.push(GradedOperator {
                mat: ComplexMatrix::unflatten(&col, space.dim, space.dim)?,
                grade,
            });
        }
    }
    if out.len() != rank {
        return Err(Error::NotGradingInvariant {
            defect: (out.len() as f64 - rank as f64).abs(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit(space: &GradedSpace, a: usize, b: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(space.dim, space.dim, |i, j| {
            if i == a && j == b {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    #[test]
    fn qubit_matrix_units_have_expected_grades() {
        let s = GradedSpace::qubit();
        assert_eq!(s.grade_of(&unit(&s, 0, 0), 1e-12).unwrap(), Grade::Even);
        assert_eq!(s.grade_of(&unit(&s, 1, 1), 1e-12).unwrap(), Grade::Even);
        assert_eq!(s.grade_of(&unit(&s, 0, 1), 1e-12).unwrap(), Grade::Odd);
        assert_eq!(s.grade_of(&unit(&s, 1, 0), 1e-12).unwrap(), Grade::Odd);
    }

    #[test]
    fn mixed_operator_is_not_homogeneous() {
        let s = GradedSpace::qubit();
        let mixed = unit(&s, 0, 0).add(&unit(&s, 0, 1)).unwrap();
        match s.grade_of(&mixed, 1e-12) {
            Err(Error::NotHomogeneous(_)) => {}
            other => panic!("expected NotHomogeneous, got {other:?}"),
        }
    }

    #[test]
    fn grading_unitary_validation() {
        let bad = ComplexMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap();
        assert!(matches!(
            GradedSpace::new(bad, 1e-10),
            Err(Error::InvalidGrading(_))
        ));
        let scaled = ComplexMatrix::diag(&[2.0, -2.0]);
        assert!(matches!(
            GradedSpace::new(scaled, 1e-10),
            Err(Error::InvalidGrading(_))
        ));
        assert!(GradedSpace::new(ComplexMatrix::diag(&[1.0, -1.0, 1.0]), 1e-10).is_ok());
    }

    #[test]
    fn conditional_expectation_is_unital_idempotent() {
        let s = GradedSpace::from_signs(&[1.0, -1.0, -1.0, 1.0]);
        let id = ComplexMatrix::identity(4);
        assert!(s.conditional_expectation(&id).unwrap().approx_eq(&id, 1e-14));
        let t = ComplexMatrix::from_fn(4, 4, |i, j| c((i + j) as f64, (i * j) as f64));
        let e1 = s.conditional_expectation(&t).unwrap();
        let e2 = s.conditional_expectation(&e1).unwrap();
        assert!(e1.approx_eq(&e2, 1e-13));
    }

    #[test]
    fn non_diagonal_grading_splits_consistently() {
        // Conjugate the qubit grading by a rotation; the split must still
        // satisfy theta(even) = even, theta(odd) = -odd.
        let th = 0.3f64;
        let r = ComplexMatrix::from_rows(vec![
            vec![c(th.cos(), 0.0), c(-th.sin(), 0.0)],
            vec![c(th.sin(), 0.0), c(th.cos(), 0.0)],
        ])
        .unwrap();
        let u = r
            .matmul(&ComplexMatrix::diag(&[1.0, -1.0]))
            .unwrap()
            .matmul(&r.adjoint())
            .unwrap();
        let s = GradedSpace::new(u, 1e-10).unwrap();
        let t = ComplexMatrix::from_fn(2, 2, |i, j| c(1.0 + i as f64, j as f64));
        let (e, o) = s.even_odd_split(&t).unwrap();
        assert!(s.theta(&e).unwrap().approx_eq(&e, 1e-12));
        assert!(s.theta(&o).unwrap().approx_eq(&o.scale(c(-1.0, 0.0)), 1e-12));
        assert!(e.add(&o).unwrap().approx_eq(&t, 1e-13));
    }

    #[test]
    fn homogeneous_unit_basis_of_qubit() {
        let s = GradedSpace::qubit();
        let basis = s.homogeneous_unit_basis(1e-10).unwrap();
        assert_eq!(basis.len(), 4);
        let grades: Vec<Grade> = basis.iter().map(|b| b.grade).collect();
        assert_eq!(
            grades,
            vec![Grade::Even, Grade::Odd, Grade::Odd, Grade::Even]
        );
        // standard order E(0,0), E(0,1), E(1,0), E(1,1)
        assert!(basis[1].mat.approx_eq(&unit(&s, 0, 1), 1e-14));
    }

    #[test]
    fn grading_invariance_defect_detects_non_invariant_span() {
        let s = GradedSpace::qubit();
        let diag_span = vec![unit(&s, 0, 0), unit(&s, 1, 1)];
        assert!(s.grading_invariance_defect(&diag_span, 1e-8).unwrap() < 1e-12);
        let tilted = vec![unit(&s, 0, 0).add(&unit(&s, 0, 1)).unwrap()];
        let defect = s.grading_invariance_defect(&tilted, 1e-8).unwrap();
        assert!(defect > 0.1, "defect = {defect}");
        assert!(matches!(
            s.check_grading_invariance(&tilted, 1e-8, 1e-10),
            Err(Error::NotGradingInvariant { .. })
        ));
    }

    #[test]
    fn homogenize_span_splits_invariant_span_and_rejects_others() {
        let s = GradedSpace::qubit();
        // span{E00+E01, E00-E01} is grading invariant with rank 2: the
        // homogeneous basis is {E00 (even), E01 (odd)}
        let plus = unit(&s, 0, 0).add(&unit(&s, 0, 1)).unwrap();
        let minus = unit(&s, 0, 0).sub(&unit(&s, 0, 1)).unwrap();
        let parts = homogenize_span(&s, &[plus.clone(), minus], 1e-8).unwrap();
        assert_eq!(parts.len(), 2);
        assert_eq!(parts[0].grade, Grade::Even);
        assert_eq!(parts[1].grade, Grade::Odd);
        assert!(parts[0].mat.fro_norm() > 0.9);
        // a single mixed generator spans a line that theta tilts out of
        // itself; homogenizing it would silently grow the span, so it fails
        assert!(matches!(
            homogenize_span(&s, &[plus], 1e-8),
            Err(Error::NotGradingInvariant { .. })
        ));
    }

    proptest! {
        #[test]
        fn split_reconstructs_and_theta_is_involutive(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let dim = 4;
            let s = GradedSpace::from_signs(&[1.0, -1.0, 1.0, -1.0]);
            let t = ComplexMatrix::from_fn(dim, dim, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let (e, o) = s.even_odd_split(&t).unwrap();
            prop_assert!(e.add(&o).unwrap().approx_eq(&t, 1e-13));
            let tt = s.theta(&s.theta(&t).unwrap()).unwrap();
            prop_assert!(tt.approx_eq(&t, 1e-13));
            // parity signs under theta
            prop_assert!(s.theta(&e).unwrap().approx_eq(&e, 1e-13));
            prop_assert!(s.theta(&o).unwrap().approx_eq(&o.scale(c(-1.0, 0.0)), 1e-13));
        }

        #[test]
        fn product_grades_multiply(seed in 0u64..50) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let s = GradedSpace::from_signs(&[1.0, 1.0, -1.0, -1.0]);
            let t1 = ComplexMatrix::from_fn(4, 4, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            let t2 = ComplexMatrix::from_fn(4, 4, |_, _| {
                c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            for (p1, g1) in [(0usize, Grade::Even), (1, Grade::Odd)] {
                for (p2, g2) in [(0usize, Grade::Even), (1, Grade::Odd)] {
                    let a = {
                        let (e, o) = s.even_odd_split(&t1).unwrap();
                        if p1 == 0 { e } else { o }
                    };
                    let b = {
                        let (e, o) = s.even_odd_split(&t2).unwrap();
                        if p2 == 0 { e } else { o }
                    };
                    let prod = a.matmul(&b).unwrap();
                    if prod.max_abs() > 1e-9 {
                        prop_assert_eq!(s.grade_of(&prod, 1e-9).unwrap(), g1.product(g2));
                    }
                }
            }
        }
    }
}
