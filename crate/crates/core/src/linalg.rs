//! Dense complex matrices and the numerical kernels everything else sits on.
//!
//! `ComplexMatrix` is a plain value type: row-major storage, explicit shape,
//! serialized as `{"rows", "cols", "data": [[re, im], ...]}`. Structural
//! operations (products, Kronecker products, adjoints, norms) are implemented
//! here; the dense factorizations (Hermitian eigendecomposition, SVD, rank
//! decisions) are delegated to `faer` behind the contracts in this module.
//!
//! Tolerance discipline: equality of matrices is always `eq_tol` on the
//! largest entry of the difference, rank decisions always compare singular (or
//! eigen-) values against `rank_tol` times the largest one, and positivity
//! allows eigenvalues down to `-psd_tol` times the spectral scale.

use faer::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default entrywise / operator-norm equality threshold.
pub const DEFAULT_EQ_TOL: f64 = 1e-10;
/// Default relative rank cutoff.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;
/// Default relative positivity slack.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// Shared tolerances, threaded through every check that makes a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToleranceConfig {
    /// Residuals below this count as equal.
    pub eq_tol: f64,
    /// Singular values below `rank_tol * s_max` count as zero.
    pub rank_tol: f64,
    /// Gram eigenvalues above `-psd_tol * scale` still count as nonnegative.
    pub psd_tol: f64,
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            eq_tol: DEFAULT_EQ_TOL,
            rank_tol: DEFAULT_RANK_TOL,
            psd_tol: DEFAULT_PSD_TOL,
        }
    }
}

impl ToleranceConfig {
    /// Threshold for membership/invariance checks on spans that were
    /// themselves computed at `rank_tol` accuracy: slightly looser than
    /// `rank_tol` so honest spans never trip their own consistency checks.
    pub fn span_check_tol(&self) -> f64 {
        self.rank_tol * 10.0
    }
}

/// Dense complex matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub rows: usize,
    pub cols: usize,
    /// Row-major entries; `data[i * cols + j]` is the `(i, j)` entry.
    pub data: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    /// Build from rows of `[re, im]`-style complex entries.
    pub fn from_rows(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    /// Real diagonal matrix.
    pub fn diag(entries: &[f64]) -> Self {
        let n = entries.len();
        Self::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(entries[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    fn same_shape(&self, other: &Self, what: &str) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "add")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.same_shape(other, "sub")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a * s).collect(),
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|a| a.conj()).collect(),
        }
    }

    /// Matrix product; dispatches to faer's GEMM.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "matmul: {}x{} * {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let prod = self.to_faer() * other.to_faer();
        Ok(Self::from_faer(prod.as_ref()))
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.cols != v.len() {
            return Err(Error::DimensionMismatch(format!(
                "matvec: {}x{} * {}",
                self.rows,
                self.cols,
                v.len()
            )));
        }
        let mut out = vec![Complex64::new(0.0, 0.0); self.rows];
        for i in 0..self.rows {
            let row = &self.data[i * self.cols..(i + 1) * self.cols];
            let mut acc = Complex64::new(0.0, 0.0);
            for (a, b) in row.iter().zip(v) {
                acc += a * b;
            }
            out[i] = acc;
        }
        Ok(out)
    }

    /// Kronecker product, row-major blocks: `(A kron B)[(i1*r2+i2),(j1*c2+j2)] = A[i1,j1] B[i2,j2]`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut out = Self::zeros(rows, cols);
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self[(i1, j1)];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for i2 in 0..other.rows {
                    for j2 in 0..other.cols {
                        out[(i1 * other.rows + i2, j1 * other.cols + j2)] = a * other[(i2, j2)];
                    }
                }
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        let n = self.rows.min(self.cols);
        (0..n).map(|i| self[(i, i)]).sum()
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.sub(&other.matmul(self)?)
    }

    pub fn anticommutator(&self, other: &Self) -> Result<Self> {
        self.matmul(other)?.add(&other.matmul(self)?)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn fro_norm(&self) -> f64 {
        self.data.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Operator (spectral) norm via SVD.
    pub fn op_norm(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        singular_values(self)
            .expect("singular value computation failed")
            .first()
            .copied()
            .unwrap_or(0.0)
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| (a - b).norm() <= tol)
    }

    pub fn hermitian_defect(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        self.sub(&self.adjoint()).map_or(f64::INFINITY, |d| d.max_abs())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_defect() <= tol
    }

    /// Column-flattened copy of the entries (the HS-vector of the matrix).
    ///
    /// The flattening convention is fixed (row-major, same as storage); all
    /// span computations in the crate go through this single function so that
    /// subspace comparisons are consistent.
    pub fn flatten(&self) -> Vec<Complex64> {
        self.data.clone()
    }

    /// Inverse of `flatten` for square matrices of dimension `n`.
    pub fn unflatten(v: &[Complex64], rows: usize, cols: usize) -> Result<Self> {
        if v.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "unflatten: {} entries into {rows}x{cols}",
                v.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data: v.to_vec(),
        })
    }

    /// Hilbert-Schmidt inner product `tr(self^* other)`.
    pub fn hs_inner(&self, other: &Self) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub(crate) fn to_faer(&self) -> Mat<c64> {
        Mat::from_fn(self.rows, self.cols, |i, j| self[(i, j)])
    }

    pub(crate) fn from_faer(m: MatRef<'_, c64>) -> Self {
        Self::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Add `s * (A kron B)` into `target` without allocating the product.
///
/// Used to assemble large Kronecker-structured sums (e.g. normal matrices
/// of stacked commutator maps) in place.
pub fn kron_add_scaled(
    target: &mut ComplexMatrix,
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    s: Complex64,
) -> Result<()> {
    if target.rows != a.rows * b.rows || target.cols != a.cols * b.cols {
        return Err(Error::DimensionMismatch(format!(
            "kron accumulate: target {}x{} vs factors ({}x{}) kron ({}x{})",
            target.rows, target.cols, a.rows, a.cols, b.rows, b.cols
        )));
    }
    for i1 in 0..a.rows {
        for j1 in 0..a.cols {
            let coeff = s * a[(i1, j1)];
            if coeff == Complex64::new(0.0, 0.0) {
                continue;
            }
            for i2 in 0..b.rows {
                for j2 in 0..b.cols {
                    target[(i1 * b.rows + i2, j1 * b.cols + j2)] += coeff * b[(i2, j2)];
                }
            }
        }
    }
    Ok(())
}

/// Singular values in descending order.
pub fn singular_values(m: &ComplexMatrix) -> Result<Vec<f64>> {
    if m.rows == 0 || m.cols == 0 {
        return Ok(Vec::new());
    }
    m.to_faer()
        .singular_values()
        .map_err(|e| Error::Numerical(format!("singular values: {e:?}")))
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns eigenvalues in ascending order together with the matrix whose
/// columns are the corresponding orthonormal eigenvectors. The input is
/// symmetrized before factorization; if its self-adjointness defect exceeds
/// `eq_tol` the call fails with [`Error::NonHermitian`].
pub fn hermitian_eig(m: &ComplexMatrix, eq_tol: f64) -> Result<(Vec<f64>, ComplexMatrix)> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "hermitian_eig on {}x{}",
            m.rows, m.cols
        )));
    }
    let defect = m.hermitian_defect();
    if defect > eq_tol {
        return Err(Error::NonHermitian { defect });
    }
    let sym = m.add(&m.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let evd = sym
        .to_faer()
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Numerical(format!("hermitian eigendecomposition: {e:?}")))?;
    let n = m.rows;
    let vals: Vec<f64> = (0..n).map(|i| evd.S().column_vector()[i].re).collect();
    let vecs = ComplexMatrix::from_faer(evd.U());
    Ok((vals, vecs))
}

/// Orthonormal basis of the null space of a linear map given as a matrix.
///
/// Every returned vector `v` satisfies `|L v| <= rank_tol * |L|`; the kernel
/// dimension is decided by the same relative threshold on the singular values.
pub fn nullspace(l: &ComplexMatrix, rank_tol: f64) -> Result<Vec<Vec<Complex64>>> {
    nullspace_scaled(l, rank_tol, 0.0)
}

/// [`nullspace`] with an external scale: singular values below
/// `rank_tol * max(s_max, scale_floor)` count as zero.
///
/// The floor matters when `L` may be *numerically* zero (entries are pure
/// rounding noise): a purely relative cutoff would then promote noise to
/// rank. Callers that know the natural scale of `L`'s ingredients (e.g.
/// commutator maps built from generators of known norm) pass it here.
pub fn nullspace_scaled(
    l: &ComplexMatrix,
    rank_tol: f64,
    scale_floor: f64,
) -> Result<Vec<Vec<Complex64>>> {
    let n = l.cols;
    if n == 0 {
        return Ok(Vec::new());
    }
    if l.rows == 0 {
        // Empty constraint set: the kernel is everything.
        let id = ComplexMatrix::identity(n);
        return Ok((0..n)
            .map(|j| (0..n).map(|i| id[(i, j)]).collect())
            .collect());
    }
    let svd = l
        .to_faer()
        .svd()
        .map_err(|e| Error::Numerical(format!("nullspace svd: {e:?}")))?;
    let k = l.rows.min(n);
    let sv: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i].re).collect();
    let smax = sv.first().copied().unwrap_or(0.0).max(scale_floor);
    let rank = if smax <= 0.0 {
        0
    } else {
        sv.iter().take_while(|s| **s > rank_tol * smax).count()
    };
    let v = svd.V(); // n x n
    let mut basis = Vec::with_capacity(n - rank);
    for j in rank..n {
        basis.push((0..n).map(|i| v[(i, j)]).collect());
    }
    Ok(basis)
}

/// Orthonormal basis (as columns) of the span of the given vectors.
///
/// Rank is decided by singular values against `rank_tol` relative to the
/// largest one. Returns an empty list for an empty or all-zero span.
pub fn orthonormal_columns(vectors: &[Vec<Complex64>], rank_tol: f64) -> Vec<Vec<Complex64>> {
    if vectors.is_empty() {
        return Vec::new();
    }
    let dim = vectors[0].len();
    let b = Mat::from_fn(dim, vectors.len(), |i, j| vectors[j][i]);
    let svd = match b.thin_svd() {
        Ok(s) => s,
        Err(_) => return Vec::new(),
    };
    let k = dim.min(vectors.len());
    let sv: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i].re).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return Vec::new();
    }
    let rank = sv.iter().take_while(|s| **s > rank_tol * smax).count();
    let u = svd.U();
    (0..rank)
        .map(|j| (0..dim).map(|i| u[(i, j)]).collect())
        .collect()
}

/// Outcome of comparing two spans.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SubspaceComparison {
    pub equal: bool,
    /// Operator-norm distance between the two orthogonal projectors.
    pub gap: f64,
    pub dim_left: usize,
    pub dim_right: usize,
}

/// Compare two spans of vectors: equality of the subspaces they generate.
///
/// The verdict is `gap <= tol` where `gap` is the operator norm of the
/// difference of orthogonal projectors, computed from the principal angles
/// between the spans (never by materializing the projectors).
pub fn subspace_equal_vectors(
    s1: &[Vec<Complex64>],
    s2: &[Vec<Complex64>],
    rank_tol: f64,
    tol: f64,
) -> Result<SubspaceComparison> {
    if let (Some(a), Some(b)) = (s1.first(), s2.first()) {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!(
                "subspace ambient dims {} vs {}",
                a.len(),
                b.len()
            )));
        }
    }
    let q1 = orthonormal_columns(s1, rank_tol);
    let q2 = orthonormal_columns(s2, rank_tol);
    let (r1, r2) = (q1.len(), q2.len());
    if r1 != r2 {
        return Ok(SubspaceComparison {
            equal: false,
            gap: 1.0,
            dim_left: r1,
            dim_right: r2,
        });
    }
    if r1 == 0 {
        return Ok(SubspaceComparison {
            equal: true,
            gap: 0.0,
            dim_left: 0,
            dim_right: 0,
        });
    }
    // For equal ranks |P1 - P2| = sin(theta_max). Computing it from the
    // cosines (cross-Gram singular values) loses half the digits near
    // equality, so instead form the residual R = Q1 - Q2 (Q2^* Q1) whose
    // largest singular value IS sin(theta_max), read off via the small
    // Hermitian Gram R^* R.
    let dim = q1[0].len();
    let m1 = Mat::from_fn(dim, r1, |i, j| q1[j][i]);
    let m2 = Mat::from_fn(dim, r2, |i, j| q2[j][i]);
    let cross = m2.adjoint() * &m1;
    let resid = &m1 - &m2 * &cross;
    let gram = resid.adjoint() * &resid;
    let gm = ComplexMatrix::from_faer(gram.as_ref());
    let herm_tol = f64::max(1e-6, gm.max_abs() * 1e-10);
    let (vals, _) = hermitian_eig(&gm, herm_tol)?;
    let gap = vals.last().copied().unwrap_or(0.0).max(0.0).sqrt();
    Ok(SubspaceComparison {
        equal: gap <= tol,
        gap,
        dim_left: r1,
        dim_right: r2,
    })
}

/// [`subspace_equal_vectors`] for spans given as matrices (flattened consistently).
pub fn subspace_equal(
    s1: &[ComplexMatrix],
    s2: &[ComplexMatrix],
    rank_tol: f64,
    tol: f64,
) -> Result<SubspaceComparison> {
    let v1: Vec<Vec<Complex64>> = s1.iter().map(|m| m.flatten()).collect();
    let v2: Vec<Vec<Complex64>> = s2.iter().map(|m| m.flatten()).collect();
    subspace_equal_vectors(&v1, &v2, rank_tol, tol)
}

/// Least-squares solve `min |B c - rhs|` over the column span of `basis`.
///
/// Robust to rank-deficient spans (SVD pseudo-inverse with the usual relative
/// cutoff). Returns the coefficient vector and the residual norm.
pub fn lstsq(
    basis: &[Vec<Complex64>],
    rhs: &[Complex64],
    rank_tol: f64,
) -> Result<(Vec<Complex64>, f64)> {
    if basis.is_empty() {
        let res = rhs.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        return Ok((Vec::new(), res));
    }
    let dim = basis[0].len();
    if rhs.len() != dim {
        return Err(Error::DimensionMismatch(format!(
            "lstsq rhs length {} vs ambient {}",
            rhs.len(),
            dim
        )));
    }
    let b = Mat::from_fn(dim, basis.len(), |i, j| basis[j][i]);
    let svd = b
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("lstsq svd: {e:?}")))?;
    let k = dim.min(basis.len());
    let sv: Vec<f64> = (0..k).map(|i| svd.S().column_vector()[i].re).collect();
    let smax = sv.first().copied().unwrap_or(0.0);
    let u = svd.U();
    let v = svd.V();
    let mut coef = vec![Complex64::new(0.0, 0.0); basis.len()];
    for (idx, s) in sv.iter().enumerate() {
        if smax <= 0.0 || *s <= rank_tol * smax {
            continue;
        }
        let mut proj = Complex64::new(0.0, 0.0);
        for i in 0..dim {
            proj += u[(i, idx)].conj() * rhs[i];
        }
        let scaled = proj / Complex64::new(*s, 0.0);
        for j in 0..basis.len() {
            coef[j] += v[(j, idx)] * scaled;
        }
    }
    let mut resid = rhs.to_vec();
    for (j, c) in coef.iter().enumerate() {
        for i in 0..dim {
            resid[i] -= c * basis[j][i];
        }
    }
    let res = resid.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    Ok((coef, res))
}
