//! Graded (Fermi) tensor products of operators, site embeddings with their
//! parity strings, CAR generators, and local algebras on finite products.
//!
//! The product of homogeneous operators follows the sign rule
//! `epsilon(p, q) = -1` iff both parities are odd: on homogeneous product
//! vectors, `(T1 (x) T2)(v1 (x) v2) = epsilon(dT2, dv1) T1 v1 (x) T2 v2`.
//! Concretely this is the Klein form `(T1 U1^k) (x) T2` with `k = 1` iff
//! `T2` is odd, which is what these routines build.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::graded::{koszul_sign, Grade, GradedOperator, GradedSpace};
use crate::linalg::ComplexMatrix;
use crate::{Error, Result};

/// Largest total dimension a [`ProductSpace`] is allowed to reach; dense
/// matrices beyond this would not fit the intended workloads.
pub const MAX_TOTAL_DIM: usize = 8192;

/// Largest basis a [`local_algebra`] call may enumerate.
pub const MAX_LOCAL_BASIS: usize = 16384;

/// A finite product of graded spaces with the product grading
/// `U_total = U_1 (x) ... (x) U_n`.
///
/// Sites are numbered `1..=n` throughout the public API.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductSpace {
    pub factors: Vec<GradedSpace>,
    pub total: GradedSpace,
}

impl ProductSpace {
    pub fn new(factors: Vec<GradedSpace>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidSpec("product space needs >= 1 factor".into()));
        }
        let mut dim = 1usize;
        for f in &factors {
            dim = dim.saturating_mul(f.dim);
            if dim > MAX_TOTAL_DIM {
                return Err(Error::SizeLimit(format!(
                    "total dimension exceeds {MAX_TOTAL_DIM}"
                )));
            }
        }
        let mut u = ComplexMatrix::identity(1);
        for f in &factors {
            u = u.kron(&f.u);
        }
        let total = GradedSpace { dim, u };
        Ok(Self { factors, total })
    }

    /// `n` copies of the same factor.
    pub fn uniform(factor: &GradedSpace, n: usize) -> Result<Self> {
        Self::new(vec![factor.clone(); n])
    }

    /// `n` graded qubits (`U = diag(1, -1)` at every site).
    pub fn qubits(n: usize) -> Result<Self> {
        Self::uniform(&GradedSpace::qubit(), n)
    }

    pub fn n_sites(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.total.dim
    }

    pub(crate) fn check_site(&self, site: usize) -> Result<()> {
        if site == 0 || site > self.n_sites() {
            return Err(Error::SiteOutOfRange {
                site,
                sites: self.n_sites(),
            });
        }
        Ok(())
    }
}

fn require_dim(op: &GradedOperator, space: &GradedSpace) -> Result<()> {
    if op.mat.rows != space.dim || op.mat.cols != space.dim {
        return Err(Error::DimensionMismatch(format!(
            "operator {}x{} on factor of dim {}",
            op.mat.rows, op.mat.cols, space.dim
        )));
    }
    Ok(())
}

/// Graded tensor product of two homogeneous operators, as a matrix on
/// `H1 (x) H2`: the Klein form `(T1 U1^k) (x) T2`, `k = 1` iff `T2` is odd.
///
/// Only the left factor's grading unitary enters; the right factor needs no
/// dressing because the sign rule charges `T2` against vectors of `H1` only.
pub fn op_graded_tensor(
    t1: &GradedOperator,
    space1: &GradedSpace,
    t2: &GradedOperator,
) -> Result<ComplexMatrix> {
    require_dim(t1, space1)?;
    let left = if t2.grade.is_odd() {
        t1.mat.matmul(&space1.u)?
    } else {
        t1.mat.clone()
    };
    Ok(left.kron(&t2.mat))
}

/// Fold [`op_graded_tensor`] over a list of homogeneous factors, returning
/// the result together with its parity (the product of the factor parities).
pub fn graded_tensor_all(
    factors: &[GradedSpace],
    ops: &[GradedOperator],
) -> Result<GradedOperator> {
    if factors.len() != ops.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} factors vs {} operators",
            factors.len(),
            ops.len()
        )));
    }
    let mut acc = GradedOperator {
        mat: ComplexMatrix::identity(1),
        grade: Grade::Even,
    };
    let mut acc_space = GradedSpace::trivial(1);
    for (f, op) in factors.iter().zip(ops) {
        let mat = op_graded_tensor(&acc, &acc_space, op)?;
        let grade = acc.grade.product(op.grade);
        acc_space = GradedSpace {
            dim: acc_space.dim * f.dim,
            u: acc_space.u.kron(&f.u),
        };
        acc = GradedOperator { mat, grade };
    }
    Ok(acc)
}

/// Embed a homogeneous single-site operator at `site` (1-based):
/// `(U_1^k (x) ... (x) U_{site-1}^k) (x) B (x) I (x) ... (x) I` with
/// `k = 1` iff `B` is odd. Even operators get the plain ampliation.
pub fn embed_site(
    b: &GradedOperator,
    site: usize,
    space: &ProductSpace,
) -> Result<ComplexMatrix> {
    space.check_site(site)?;
    require_dim(b, &space.factors[site - 1])?;
    let mut out = ComplexMatrix::identity(1);
    for (k, f) in space.factors.iter().enumerate() {
        let block = if k + 1 == site {
            b.mat.clone()
        } else if k + 1 < site && b.grade.is_odd() {
            f.u.clone()
        } else {
            ComplexMatrix::identity(f.dim)
        };
        out = out.kron(&block);
    }
    Ok(out)
}

/// Product of site embeddings `i_{s1}(b1) i_{s2}(b2) ...` for letters at
/// strictly ascending sites, built directly as a single Kronecker product:
/// the factor at site `k` is `(letter at k, or I) . U_k^(m_k)` where `m_k`
/// counts odd letters at sites above `k`.
pub fn embed_word(
    word: &[(usize, &GradedOperator)],
    space: &ProductSpace,
) -> Result<GradedOperator> {
    for pair in word.windows(2) {
        if pair[0].0 >= pair[1].0 {
            return Err(Error::InvalidSpec(
                "word letters must be at strictly ascending sites".into(),
            ));
        }
    }
    for (site, b) in word {
        space.check_site(*site)?;
        require_dim(b, &space.factors[site - 1])?;
    }
    let mut grade = Grade::Even;
    let mut mat = ComplexMatrix::identity(1);
    for (k, f) in space.factors.iter().enumerate() {
        let site = k + 1;
        let odd_above = word
            .iter()
            .filter(|(s, b)| *s > site && b.grade.is_odd())
            .count();
        let letter = word.iter().find(|(s, _)| *s == site).map(|(_, b)| *b);
        let mut block = match letter {
            Some(b) => b.mat.clone(),
            None => ComplexMatrix::identity(f.dim),
        };
        if odd_above % 2 == 1 {
            block = block.matmul(&f.u)?;
        }
        if let Some(b) = letter {
            grade = grade.product(b.grade);
        }
        mat = mat.kron(&block);
    }
    Ok(GradedOperator { mat, grade })
}

/// Embed an arbitrary (not necessarily homogeneous) single-site operator:
/// the even and odd parts are embedded separately and summed.
pub fn embed_element(
    b: &ComplexMatrix,
    site: usize,
    space: &ProductSpace,
) -> Result<ComplexMatrix> {
    space.check_site(site)?;
    let factor = &space.factors[site - 1];
    let (even, odd) = factor.even_odd_split(b)?;
    let mut out = embed_site(
        &GradedOperator {
            mat: even,
            grade: Grade::Even,
        },
        site,
        space,
    )?;
    if odd.fro_norm() > 0.0 {
        let odd_part = embed_site(
            &GradedOperator {
                mat: odd,
                grade: Grade::Odd,
            },
            site,
            space,
        )?;
        out = out.add(&odd_part)?;
    }
    Ok(out)
}

/// The annihilation letter `A = [[0,1],[0,0]]` on the graded qubit, odd.
pub fn annihilator() -> GradedOperator {
    let mut mat = ComplexMatrix::zeros(2, 2);
    mat[(0, 1)] = Complex64::new(1.0, 0.0);
    GradedOperator {
        mat,
        grade: Grade::Odd,
    }
}

/// CAR generators `a_1 ... a_n` on `(C^2)^(x)n` via site embeddings of the
/// annihilation letter: `a_j = U (x) ... (x) U (x) A (x) I (x) ... (x) I`.
///
/// They satisfy `a_j a_k + a_k a_j = 0` and `a_j a_k* + a_k* a_j = d_{jk} I`.
pub fn car_generators(n: usize) -> Result<Vec<ComplexMatrix>> {
    if n == 0 || n > 12 {
        return Err(Error::SizeLimit(format!(
            "CAR generator count must be in 1..=12, got {n}"
        )));
    }
    let space = ProductSpace::qubits(n)?;
    let a = annihilator();
    (1..=n).map(|j| embed_site(&a, j, &space)).collect()
}

/// A local algebra: the span generated by single-site operators at `sites`,
/// stored as a homogeneous basis on the ambient product space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LocalAlgebra {
    pub sites: Vec<usize>,
    pub basis: Vec<GradedOperator>,
}

impl LocalAlgebra {
    /// Plain (ungraded) matrices of the basis.
    pub fn matrices(&self) -> Vec<ComplexMatrix> {
        self.basis.iter().map(|b| b.mat.clone()).collect()
    }
}

/// Build the local algebra of a site set: its basis is every ascending
/// product of embedded homogeneous matrix units, one per site in the set.
/// These products are linearly independent, so the basis is exact and the
/// span is closed under products and adjoints. The empty set gives the
/// scalars.
pub fn local_algebra(sites: &[usize], space: &ProductSpace, eq_tol: f64) -> Result<LocalAlgebra> {
    let mut sorted: Vec<usize> = sites.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    for &s in &sorted {
        space.check_site(s)?;
    }
    if sorted.is_empty() {
        return Ok(LocalAlgebra {
            sites: sorted,
            basis: vec![GradedOperator {
                mat: ComplexMatrix::identity(space.dim()),
                grade: Grade::Even,
            }],
        });
    }
    let mut count = 1usize;
    let letters: Vec<Vec<GradedOperator>> = sorted
        .iter()
        .map(|&s| -> Result<Vec<GradedOperator>> {
            let units = space.factors[s - 1].homogeneous_unit_basis(eq_tol)?;
            count = count.saturating_mul(units.len());
            Ok(units)
        })
        .collect::<Result<_>>()?;
    if count > MAX_LOCAL_BASIS {
        return Err(Error::SizeLimit(format!(
            "local algebra basis would have {count} elements (cap {MAX_LOCAL_BASIS})"
        )));
    }
    let mut basis = Vec::with_capacity(count);
    let mut pick = vec![0usize; sorted.len()];
    loop {
        let word: Vec<(usize, &GradedOperator)> = sorted
            .iter()
            .zip(&pick)
            .map(|(&s, &c)| (s, &letters_at(&letters, &sorted, s)[c]))
            .collect();
        basis.push(embed_word(&word, space)?);
        // odometer increment
        let mut pos = sorted.len();
        loop {
            if pos == 0 {
                return Ok(LocalAlgebra {
                    sites: sorted,
                    basis,
                });
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] < letters[pos].len() {
                break;
            }
            pick[pos] = 0;
        }
    }
}

fn letters_at<'a>(
    letters: &'a [Vec<GradedOperator>],
    sorted: &[usize],
    site: usize,
) -> &'a [GradedOperator] {
    let idx = sorted.iter().position(|&s| s == site).unwrap();
    &letters[idx]
}

/// Graded locality check for homogeneous operators supported on disjoint
/// site sets: `x y = epsilon(dx, dy) y x` within `eq_tol`.
pub fn check_locality(
    x: &GradedOperator,
    x_sites: &[usize],
    y: &GradedOperator,
    y_sites: &[usize],
    eq_tol: f64,
) -> Result<bool> {
    if let Some(s) = x_sites.iter().find(|s| y_sites.contains(s)) {
        return Err(Error::OverlappingSupports(format!(
            "site {s} appears in both supports"
        )));
    }
    let xy = x.mat.matmul(&y.mat)?;
    let yx = y.mat.matmul(&x.mat)?;
    let sign = koszul_sign(x.grade, y.grade);
    let defect = xy
        .sub(&yx.scale(Complex64::new(sign, 0.0)))?
        .max_abs();
    Ok(defect <= eq_tol)
}
