//! State functionals on concrete algebras: evenness, product functionals
//! and their positivity, the GNS construction with a covariant grading
//! unitary, purity/trace/multiplicativity predicates, and the factor-type
//! classifier for infinite products of a single even state.
//!
//! A functional is stored by its values on the algebra's homogeneous basis
//! together with a precomputed Riesz representative `R` satisfying
//! `f(M) = tr(R^H M)` on the span; this evaluates products like
//! `f(x_a^* x_b)` without structure constants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::graded::{Grade, GradedOperator, GradedSpace};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};
use crate::vonneumann::{self, ConcreteAlgebra};
use crate::{Error, Result};

/// Default tolerance for the predicate checks (evenness, multiplicativity,
/// trace property, intertwining relations).
pub const DEFAULT_PREDICATE_TOL: f64 = 1e-8;

/// A linear functional on a concrete algebra, stored by basis values.
///
/// Not necessarily positive: product functionals of non-even states are
/// first-class objects here precisely so their positivity can be tested.
#[derive(Debug, Clone)]
pub struct StateFunctional {
    pub algebra: ConcreteAlgebra,
    /// Label used in the JSON wire format to identify the basis.
    pub basis_ref: String,
    /// One value per stored basis element.
    pub values: Vec<Complex64>,
    /// Density representative when the algebra is full: `f(a) = tr(rho a)`.
    pub density: Option<ComplexMatrix>,
    riesz: ComplexMatrix,
}

/// Wire format: `{"basis_ref": ..., "values": [[re,im],...], "density": ...}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateWire {
    pub basis_ref: String,
    pub values: Vec<Complex64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub density: Option<ComplexMatrix>,
}

impl StateFunctional {
    /// Build from basis values. Computes the Riesz representative on the
    /// span; fails if the basis is degenerate.
    pub fn from_values(
        algebra: ConcreteAlgebra,
        basis_ref: impl Into<String>,
        values: Vec<Complex64>,
    ) -> Result<Self> {
        if values.len() != algebra.basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a basis of {} elements",
                values.len(),
                algebra.basis.len()
            )));
        }
        let riesz = riesz_representative(&algebra, &values)?;
        Ok(Self {
            algebra,
            basis_ref: basis_ref.into(),
            values,
            density: None,
            riesz,
        })
    }

    /// Build from a density matrix: `f(a) = tr(rho a)`. The density must
    /// have unit trace (functional normalization).
    pub fn from_density(
        algebra: ConcreteAlgebra,
        basis_ref: impl Into<String>,
        rho: ComplexMatrix,
        eq_tol: f64,
    ) -> Result<Self> {
        if rho.rows != algebra.ambient.dim || rho.cols != algebra.ambient.dim {
            return Err(Error::DimensionMismatch(format!(
                "density {}x{} on ambient dim {}",
                rho.rows, rho.cols, algebra.ambient.dim
            )));
        }
        let tr = rho.trace();
        if (tr - Complex64::new(1.0, 0.0)).norm() > eq_tol {
            return Err(Error::InvalidSpec(format!(
                "density trace {tr} is not 1"
            )));
        }
        let rho_adj = rho.adjoint();
        let values: Vec<Complex64> = algebra
            .basis
            .iter()
            .map(|b| rho_adj.hs_inner(&b.mat))
            .collect();
        let mut out = Self::from_values(algebra, basis_ref, values)?;
        out.density = Some(rho);
        Ok(out)
    }

    /// A state on the full algebra of a graded space, given by a density.
    pub fn on_full(
        space: &GradedSpace,
        basis_ref: impl Into<String>,
        rho: ComplexMatrix,
        tol: &ToleranceConfig,
    ) -> Result<Self> {
        let algebra = ConcreteAlgebra::full(space, tol.eq_tol)?;
        Self::from_density(algebra, basis_ref, rho, tol.eq_tol)
    }

    /// The normalized trace on the full algebra of a graded space.
    pub fn normalized_trace(space: &GradedSpace, tol: &ToleranceConfig) -> Result<Self> {
        let d = space.dim as f64;
        let rho = ComplexMatrix::identity(space.dim).scale(Complex64::new(1.0 / d, 0.0));
        Self::on_full(space, format!("trace:{}", space.dim), rho, tol)
    }

    /// Evaluate on an element of the span (no membership check; elements
    /// outside the span are silently projected onto it).
    pub fn value_of(&self, m: &ComplexMatrix) -> Complex64 {
        self.riesz.hs_inner(m)
    }

    /// Evaluate with a span-membership check.
    pub fn value_of_checked(&self, m: &ComplexMatrix, rank_tol: f64) -> Result<Complex64> {
        if !self.algebra.contains(m, rank_tol)? {
            return Err(Error::PreconditionViolated(
                "element lies outside the functional's algebra".into(),
            ));
        }
        Ok(self.value_of(m))
    }

    /// `f(1)`, which is 1 for unital functionals.
    pub fn unit_value(&self) -> Complex64 {
        self.value_of(&ComplexMatrix::identity(self.algebra.ambient.dim))
    }

    /// `max |f(x^*) - conj f(x)|` over the basis: zero for hermitian f.
    pub fn hermitian_defect(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (b, v) in self.algebra.basis.iter().zip(&self.values) {
            let star = self.value_of(&b.mat.adjoint());
            worst = worst.max((star - v.conj()).norm());
        }
        Ok(worst)
    }

    /// Gram matrix `G[a][b] = f(x_a^* x_b)` over the stored basis.
    pub fn gram(&self) -> Result<ComplexMatrix> {
        let k = self.algebra.basis.len();
        // f(x_a^* x_b) = tr(R^H x_a^* x_b) = <x_a R, x_b>_HS
        let left: Vec<ComplexMatrix> = self
            .algebra
            .basis
            .iter()
            .map(|b| b.mat.matmul(&self.riesz))
            .collect::<Result<_>>()?;
        let mut g = ComplexMatrix::zeros(k, k);
        for (a, ya) in left.iter().enumerate() {
            for (b, xb) in self.algebra.basis.iter().enumerate() {
                g[(a, b)] = ya.hs_inner(&xb.mat);
            }
        }
        Ok(g)
    }

    /// Product-value matrix `M[a][b] = f(x_a x_b)`.
    fn product_values(&self) -> Result<ComplexMatrix> {
        let k = self.algebra.basis.len();
        let left: Vec<ComplexMatrix> = self
            .algebra
            .basis
            .iter()
            .map(|b| b.mat.adjoint().matmul(&self.riesz))
            .collect::<Result<_>>()?;
        let mut m = ComplexMatrix::zeros(k, k);
        for (a, ya) in left.iter().enumerate() {
            for (b, xb) in self.algebra.basis.iter().enumerate() {
                m[(a, b)] = ya.hs_inner(&xb.mat);
            }
        }
        Ok(m)
    }

    /// Serialize to the wire format.
    pub fn to_wire(&self) -> StateWire {
        StateWire {
            basis_ref: self.basis_ref.clone(),
            values: self.values.clone(),
            density: self.density.clone(),
        }
    }

    /// Rebuild from the wire format against a resolved algebra.
    pub fn from_wire(wire: StateWire, algebra: ConcreteAlgebra) -> Result<Self> {
        let mut s = Self::from_values(algebra, wire.basis_ref, wire.values)?;
        s.density = wire.density;
        Ok(s)
    }
}

/// Riesz representative `R` in the span with `tr(R^H x_a) = f(x_a)`.
fn riesz_representative(
    algebra: &ConcreteAlgebra,
    values: &[Complex64],
) -> Result<ComplexMatrix> {
    let d = algebra.ambient.dim;
    let flat: Vec<Vec<Complex64>> = algebra.basis.iter().map(|b| b.mat.flatten()).collect();
    let q = linalg::orthonormal_columns(&flat, 1e-12);
    let k = algebra.basis.len();
    if q.len() < k {
        return Err(Error::Numerical(format!(
            "stored basis is degenerate: rank {} of {k}",
            q.len()
        )));
    }
    // a[i][g] = <Q_i, x_g>; solve sum_i g_i a[i][g] = values[g]
    let cols: Vec<Vec<Complex64>> = q
        .iter()
        .map(|qi| {
            flat.iter()
                .map(|xg| {
                    qi.iter()
                        .zip(xg)
                        .map(|(a, b)| a.conj() * b)
                        .sum::<Complex64>()
                })
                .collect()
        })
        .collect();
    let (g, res) = linalg::lstsq(&cols, values, 1e-12)?;
    let scale = values
        .iter()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    if res > 1e-8 * scale {
        return Err(Error::Numerical(format!(
            "Riesz solve residual {res:.3e}"
        )));
    }
    let mut r = vec![Complex64::new(0.0, 0.0); d * d];
    for (gi, qi) in g.iter().zip(&q) {
        let c = gi.conj();
        for (ri, qv) in r.iter_mut().zip(qi) {
            *ri += c * qv;
        }
    }
    ComplexMatrix::unflatten(&r, d, d)
}

/// Evenness of a functional: `f(theta(x)) = f(x)`. On a homogeneous basis
/// this is exactly the vanishing of the values on odd basis elements; the
/// returned defect is `max |f(theta(x_a)) - f(x_a)| = 2 max_odd |f(x_a)|`.
pub fn evenness_defect(f: &StateFunctional) -> f64 {
    f.algebra
        .basis
        .iter()
        .zip(&f.values)
        .filter(|(b, _)| b.grade == Grade::Odd)
        .map(|(_, v)| 2.0 * v.norm())
        .fold(0.0, f64::max)
}

/// True iff the functional is even within `tol`.
pub fn is_even_state(f: &StateFunctional, tol: f64) -> bool {
    evenness_defect(f) <= tol
}

/// The product functional of one state per site: its value on the ordered
/// homogeneous product basis element `i_1(b_1) i_2(b_2) ...` is the plain
/// product of the single-site values. Positivity is NOT automatic; see
/// [`positivity_check`].
pub fn product_functional(
    states: &[StateFunctional],
    space: &crate::fermi::ProductSpace,
    tol: &ToleranceConfig,
) -> Result<StateFunctional> {
    if states.len() != space.n_sites() {
        return Err(Error::DimensionMismatch(format!(
            "{} states for {} sites",
            states.len(),
            space.n_sites()
        )));
    }
    for (i, (s, f)) in states.iter().zip(&space.factors).enumerate() {
        if s.algebra.ambient.dim != f.dim || s.algebra.span_dim() != f.dim * f.dim {
            return Err(Error::InvalidSpec(format!(
                "state {} does not live on the full factor algebra (dim {})",
                i + 1,
                f.dim
            )));
        }
    }
    // letters per site, with the per-site state values
    let mut letters: Vec<Vec<(GradedOperator, Complex64)>> = Vec::new();
    for (s, f) in states.iter().zip(&space.factors) {
        let units = f.homogeneous_unit_basis(tol.eq_tol)?;
        letters.push(
            units
                .into_iter()
                .map(|u| {
                    let v = s.value_of(&u.mat);
                    (u, v)
                })
                .collect(),
        );
    }
    let n = space.n_sites();
    let mut basis: Vec<GradedOperator> = Vec::new();
    let mut values: Vec<Complex64> = Vec::new();
    let mut pick = vec![0usize; n];
    'outer: loop {
        let word: Vec<(usize, &GradedOperator)> = (0..n)
            .map(|i| (i + 1, &letters[i][pick[i]].0))
            .collect();
        basis.push(crate::fermi::embed_word(&word, space)?);
        values.push((0..n).map(|i| letters[i][pick[i]].1).product());
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] < letters[pos].len() {
                break;
            }
            pick[pos] = 0;
        }
    }
    let mut gens = Vec::new();
    for (i, ls) in letters.iter().enumerate() {
        for (u, _) in ls {
            gens.push(crate::fermi::embed_site(u, i + 1, space)?);
        }
    }
    let algebra = ConcreteAlgebra::from_parts(space.total.clone(), basis, true, gens);
    let basis_ref = format!(
        "product({})",
        states
            .iter()
            .map(|s| s.basis_ref.as_str())
            .collect::<Vec<_>>()
            .join(",")
    );
    let mut out = StateFunctional::from_values(algebra, basis_ref, values)?;
    if out.algebra.span_dim() == space.dim() * space.dim() {
        // the span is everything, so the Riesz representative's adjoint is
        // a genuine density representative (not necessarily positive)
        out.density = Some(out.riesz.adjoint());
    }
    Ok(out)
}

/// PSD verdict for the functional's Gram matrix, with the minimal
/// eigenvalue of its hermitian part.
///
/// Positivity demands `f(y^* y) >= 0` for every `y` in the span; these
/// quadratic values are `<v, G v>` over coefficient vectors `v`. The Gram
/// of a hermitian functional is hermitian, but products of several
/// non-even states are not hermitian (odd-odd words flip sign under
/// adjoints), so the test reports `min Re f(y^* y)` — the minimal
/// eigenvalue of `(G + G^H)/2` — and fails positivity when either that is
/// negative or the Gram is visibly non-hermitian.
pub fn positivity_check(f: &StateFunctional, tol: &ToleranceConfig) -> Result<(bool, f64)> {
    let g = f.gram()?;
    let scale = g.max_abs().max(1e-12);
    let hermitian = g.hermitian_defect() <= 1e-7 * scale;
    let sym = g.add(&g.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let (vals, _) = linalg::hermitian_eig(&sym, 1e-9)?;
    let min_eig = vals.first().copied().unwrap_or(0.0);
    let max_eig = vals.last().copied().unwrap_or(0.0).max(1e-12);
    Ok((hermitian && min_eig >= -tol.psd_tol * max_eig, min_eig))
}

/// GNS data of a positive functional.
#[derive(Debug, Clone)]
pub struct GnsData {
    /// Hilbert-space dimension (rank of the Gram matrix).
    pub dim: usize,
    /// Images of the algebra's basis elements.
    pub rep: Vec<ComplexMatrix>,
    /// The cyclic vector.
    pub cyclic_vector: Vec<Complex64>,
    /// Covariant grading unitary, once computed.
    pub grading_unitary: Option<ComplexMatrix>,
    /// Gram matrix over the algebra basis.
    pub(crate) gram: ComplexMatrix,
    /// `Lambda^{-1/2} V_r^H` — maps Gram columns to GNS coordinates.
    pub(crate) proj: ComplexMatrix,
    /// Kept Gram eigenvalues, aligned with the rows of `proj`.
    pub(crate) lam: Vec<f64>,
}

impl GnsData {
    /// Image of an arbitrary element of the span under the representation.
    pub fn represent(
        &self,
        f: &StateFunctional,
        m: &ComplexMatrix,
        rank_tol: f64,
    ) -> Result<ComplexMatrix> {
        let basis: Vec<Vec<Complex64>> = f.algebra.basis.iter().map(|b| b.mat.flatten()).collect();
        let (coeff, res) = linalg::lstsq(&basis, &m.flatten(), rank_tol)?;
        let scale = m.fro_norm().max(1.0);
        if res > rank_tol * scale * 10.0 {
            return Err(Error::PreconditionViolated(
                "element lies outside the represented algebra".into(),
            ));
        }
        let mut out = ComplexMatrix::zeros(self.dim, self.dim);
        for (c, p) in coeff.iter().zip(&self.rep) {
            out = out.add(&p.scale(*c))?;
        }
        Ok(out)
    }

    /// `<rep(a) xi, xi>` — the state recovered from the representation.
    pub fn vector_state(&self, a: &ComplexMatrix) -> Result<Complex64> {
        let v = a.matvec(&self.cyclic_vector)?;
        Ok(v
            .iter()
            .zip(&self.cyclic_vector)
            .map(|(x, y)| y.conj() * x)
            .sum())
    }
}

/// GNS construction: quotient by the Gram kernel (eigen-truncation at
/// `rank_tol`), with representation matrices built from functional values
/// `f(x_a^* g x_b)` — no structure constants needed.
pub fn gns(f: &StateFunctional, tol: &ToleranceConfig) -> Result<GnsData> {
    let k = f.algebra.basis.len();
    let g = f.gram()?;
    let herm = g.hermitian_defect().max(1e-9) * 10.0;
    let (vals, vecs) = linalg::hermitian_eig(&g, herm)?;
    let lam_max = vals.last().copied().unwrap_or(0.0);
    if lam_max <= 0.0 {
        return Err(Error::NotPositive {
            min_eig: vals.first().copied().unwrap_or(0.0),
        });
    }
    let min_eig = vals.first().copied().unwrap_or(0.0);
    if min_eig < -tol.psd_tol * lam_max {
        return Err(Error::NotPositive { min_eig });
    }
    let keep: Vec<usize> = (0..k)
        .filter(|&i| vals[i] > tol.rank_tol * lam_max)
        .collect();
    let r = keep.len();
    if r == 0 {
        return Err(Error::NotPositive { min_eig });
    }
    // proj = Lambda^{-1/2} V_r^H  (r x k)
    let lam: Vec<f64> = keep.iter().map(|&i| vals[i]).collect();
    let proj = ComplexMatrix::from_fn(r, k, |i, j| {
        vecs[(j, keep[i])].conj() * Complex64::new(1.0 / vals[keep[i]].sqrt(), 0.0)
    });
    let projh = proj.adjoint();

    // representation matrices: P_g = proj . A_g . proj^H with
    // A_g[a][b] = f(x_a^* g x_b) = <x_a R, g x_b>_HS
    let left: Vec<ComplexMatrix> = f
        .algebra
        .basis
        .iter()
        .map(|b| b.mat.matmul(&f.riesz))
        .collect::<Result<_>>()?;
    let mut rep = Vec::with_capacity(k);
    for gop in &f.algebra.basis {
        let mut a = ComplexMatrix::zeros(k, k);
        for (bi, xb) in f.algebra.basis.iter().enumerate() {
            let gxb = gop.mat.matmul(&xb.mat)?;
            for (ai, ya) in left.iter().enumerate() {
                a[(ai, bi)] = ya.hs_inner(&gxb);
            }
        }
        rep.push(proj.matmul(&a)?.matmul(&projh)?);
    }

    // cyclic vector: class of the identity; q[a] = f(x_a^*) = conj f(x_a)
    let q1: Vec<Complex64> = f.values.iter().map(|v| v.conj()).collect();
    let cyclic_vector = proj.matvec(&q1)?;

    Ok(GnsData {
        dim: r,
        rep,
        cyclic_vector,
        grading_unitary: None,
        gram: g,
        proj,
        lam,
    })
}

/// The covariant grading unitary on the GNS space of an even functional:
/// `V rep(a) V = rep(theta(a))`, `V xi = xi`, `V = V^*`, `V^2 = I`.
pub fn covariant_grading_unitary(
    f: &StateFunctional,
    g: &GnsData,
    predicate_tol: f64,
) -> Result<ComplexMatrix> {
    let defect = evenness_defect(f);
    if defect > predicate_tol {
        return Err(Error::NotEven { defect });
    }
    let k = f.algebra.basis.len();
    // A_theta[a][b] = f(x_a^* theta(x_b)) = G[a][b] * sign(x_b)
    let mut a_theta = g.gram.clone();
    for (b, op) in f.algebra.basis.iter().enumerate() {
        let s = Complex64::new(op.grade.sign(), 0.0);
        for a in 0..k {
            a_theta[(a, b)] *= s;
        }
    }
    let v0 = g.proj.matmul(&a_theta)?.matmul(&g.proj.adjoint())?;
    // polish to an exactly self-adjoint involution: eigen-round to +-1
    let sym = v0.add(&v0.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let (vals, w) = linalg::hermitian_eig(&sym, 1e-6)?;
    let signs: Vec<f64> = vals.iter().map(|l| if *l >= 0.0 { 1.0 } else { -1.0 }).collect();
    let v = w
        .matmul(&ComplexMatrix::diag(&signs))?
        .matmul(&w.adjoint())?;
    // validate the covariance relations
    let mut worst: f64 = 0.0;
    for (op, p) in f.algebra.basis.iter().zip(&g.rep) {
        let s = Complex64::new(op.grade.sign(), 0.0);
        let lhs = v.matmul(p)?.matmul(&v)?;
        worst = worst.max(lhs.sub(&p.scale(s))?.max_abs());
    }
    let vxi = v.matvec(&g.cyclic_vector)?;
    let fix: f64 = vxi
        .iter()
        .zip(&g.cyclic_vector)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    worst = worst.max(fix);
    if worst > predicate_tol.max(1e-7) {
        return Err(Error::Numerical(format!(
            "covariant grading unitary fails its relations (defect {worst:.3e})"
        )));
    }
    Ok(v)
}

/// GNS of an even functional with the covariant grading unitary attached.
pub fn gns_with_grading(f: &StateFunctional, tol: &ToleranceConfig) -> Result<GnsData> {
    let mut g = gns(f, tol)?;
    let v = covariant_grading_unitary(f, &g, DEFAULT_PREDICATE_TOL)?;
    g.grading_unitary = Some(v);
    Ok(g)
}

/// The GNS image as a von Neumann algebra on the (trivially graded) GNS
/// space.
pub fn gns_image(g: &GnsData, tol: &ToleranceConfig) -> Result<ConcreteAlgebra> {
    let space = GradedSpace::trivial(g.dim);
    vonneumann::generate(&g.rep, &space, tol)
}

/// Searches for a self-adjoint unitary solution of the intertwiner
/// equation `X rep(a) = rep(theta(a)) X` on the GNS space of a PURE
/// functional, normalized so `<X xi, xi> >= 0`.
///
/// Returns [`Error::NotImplementable`] when only `X = 0` solves the
/// equation (the two representations are disjoint), [`Error::NotPure`]
/// when the GNS commutant is nontrivial.
pub fn find_grading_implementer(
    f: &StateFunctional,
    g: &GnsData,
    tol: &ToleranceConfig,
) -> Result<ComplexMatrix> {
    let image = gns_image(g, tol)?;
    let comm = vonneumann::commutant(&image, tol)?;
    if comm.span_dim() != 1 {
        return Err(Error::NotPure(format!(
            "GNS commutant has dimension {}",
            comm.span_dim()
        )));
    }
    let r = g.dim;
    let rr = r * r;
    let id = ComplexMatrix::identity(r);
    // stack rows of vec(X rep(a) - rep(theta a) X) over the basis
    let mut rows: Vec<Vec<Complex64>> = Vec::with_capacity(f.algebra.basis.len() * rr);
    let mut scale: f64 = 0.0;
    for (op, p) in f.algebra.basis.iter().zip(&g.rep) {
        scale = scale.max(p.fro_norm());
        let ptheta = p.scale(Complex64::new(op.grade.sign(), 0.0));
        let block = id.kron(&p.transpose()).sub(&ptheta.kron(&id))?;
        for i in 0..rr {
            rows.push((0..rr).map(|j| block[(i, j)]).collect());
        }
    }
    let l = ComplexMatrix::from_rows(rows)?;
    let kernel = linalg::nullspace_scaled(&l, tol.rank_tol, scale)?;
    if kernel.is_empty() {
        return Err(Error::NotImplementable(
            "the grading intertwiner equation has no nonzero solution".into(),
        ));
    }
    let x = ComplexMatrix::unflatten(&kernel[0], r, r)?;
    // For pure f, X^H X commutes with the image, hence is a scalar; the
    // unitary part is X / sqrt(lambda).
    let s = x.adjoint().matmul(&x)?;
    let lam = s.trace().re / r as f64;
    if lam <= 0.0 {
        return Err(Error::NotImplementable("intertwiner is singular".into()));
    }
    let xu = x.scale(Complex64::new(1.0 / lam.sqrt(), 0.0));
    let unit_defect = xu
        .adjoint()
        .matmul(&xu)?
        .sub(&id)?
        .max_abs();
    if unit_defect > 1e-6 {
        return Err(Error::NotImplementable(format!(
            "intertwiner has no unitary part (defect {unit_defect:.3e})"
        )));
    }
    // X^2 = c I; cancel the phase so the square is exactly I
    let c = xu.matmul(&xu)?.trace() / Complex64::new(r as f64, 0.0);
    let phase = Complex64::from_polar(1.0, -c.arg() / 2.0);
    let mut u = xu.scale(phase);
    // sign normalization: <U xi, xi> >= 0, with a deterministic fallback
    // when that overlap vanishes
    let overlap: Complex64 = u
        .matvec(&g.cyclic_vector)?
        .iter()
        .zip(&g.cyclic_vector)
        .map(|(a, b)| b.conj() * a)
        .sum();
    let flip = if overlap.re < -1e-12 {
        true
    } else if overlap.re > 1e-12 {
        false
    } else {
        let mut f = false;
        for e in &u.data {
            if e.re.abs() > 1e-9 {
                f = e.re < 0.0;
                break;
            }
        }
        f
    };
    if flip {
        u = u.scale(Complex64::new(-1.0, 0.0));
    }
    // validate
    let sq_defect = u.matmul(&u)?.sub(&id)?.max_abs();
    let sa_defect = u.hermitian_defect();
    if sq_defect > 1e-7 || sa_defect > 1e-7 {
        return Err(Error::Numerical(format!(
            "implementer fails involution/self-adjointness ({sq_defect:.3e}, {sa_defect:.3e})"
        )));
    }
    Ok(u)
}

/// Multiplicativity: `f(ab) = f(a) f(b)` over all basis pairs.
pub fn is_multiplicative(f: &StateFunctional, tol: f64) -> Result<bool> {
    let m = f.product_values()?;
    let k = f.algebra.basis.len();
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in 0..k {
            worst = worst.max((m[(a, b)] - f.values[a] * f.values[b]).norm());
        }
    }
    Ok(worst <= tol)
}

/// Trace property: `f(ab) = f(ba)` over all basis pairs.
pub fn is_trace(f: &StateFunctional, tol: f64) -> Result<bool> {
    let m = f.product_values()?;
    let k = f.algebra.basis.len();
    let mut worst: f64 = 0.0;
    for a in 0..k {
        for b in (a + 1)..k {
            worst = worst.max((m[(a, b)] - m[(b, a)]).norm());
        }
    }
    Ok(worst <= tol)
}

/// Purity: the GNS commutant is trivial.
pub fn is_pure(f: &StateFunctional, tol: &ToleranceConfig) -> Result<bool> {
    let g = gns(f, tol)?;
    let image = gns_image(&g, tol)?;
    Ok(vonneumann::commutant(&image, tol)?.span_dim() == 1)
}

/// Murray–von Neumann type of the infinite-product factor built from one
/// even factorial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TypeLabel {
    #[serde(rename = "I_1")]
    I1,
    #[serde(rename = "I_inf")]
    IInf,
    #[serde(rename = "II_1")]
    II1,
    #[serde(rename = "II_inf")]
    IIInf,
    #[serde(rename = "III")]
    III,
}

impl std::fmt::Display for TypeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TypeLabel::I1 => "I_1",
            TypeLabel::IInf => "I_inf",
            TypeLabel::II1 => "II_1",
            TypeLabel::IIInf => "II_inf",
            TypeLabel::III => "III",
        };
        write!(f, "{s}")
    }
}

/// Values of the classifier's predicates, reported alongside the label.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TypePredicates {
    pub multiplicative: bool,
    pub pure: bool,
    pub trace: bool,
    pub commutant_state_tracial: bool,
    pub gns_dim: usize,
    pub commutant_dim: usize,
}

/// Classify the factor type of the infinite product of one even state.
///
/// Applies the predicates in order: multiplicative -> I_1; pure and not
/// multiplicative -> I_inf; trace and not multiplicative -> II_1; the
/// vector state restricted to the GNS commutant tracial (and neither pure
/// nor trace) -> II_inf; otherwise -> III.
pub fn classify_product_type(
    f: &StateFunctional,
    tol: &ToleranceConfig,
    predicate_tol: f64,
) -> Result<(TypeLabel, TypePredicates)> {
    let defect = evenness_defect(f);
    if defect > predicate_tol {
        return Err(Error::NotEven { defect });
    }
    let g = gns(f, tol)?;
    let image = gns_image(&g, tol)?;
    let z = vonneumann::center(&image, tol)?;
    if z.span_dim() != 1 {
        return Err(Error::NotFactorial(format!(
            "GNS image has center of dimension {}",
            z.span_dim()
        )));
    }
    let comm = vonneumann::commutant(&image, tol)?;
    let multiplicative = is_multiplicative(f, predicate_tol)?;
    let pure = comm.span_dim() == 1;
    let trace = is_trace(f, predicate_tol)?;
    // vector state on the commutant, tested for the trace identity
    let cm = comm.matrices();
    let mut tracial = true;
    'outer: for a in &cm {
        for b in &cm {
            let ab = g.vector_state(&a.matmul(b)?)?;
            let ba = g.vector_state(&b.matmul(a)?)?;
            if (ab - ba).norm() > predicate_tol {
                tracial = false;
                break 'outer;
            }
        }
    }
    let preds = TypePredicates {
        multiplicative,
        pure,
        trace,
        commutant_state_tracial: tracial,
        gns_dim: g.dim,
        commutant_dim: comm.span_dim(),
    };
    let label = if multiplicative {
        TypeLabel::I1
    } else if pure {
        TypeLabel::IInf
    } else if trace {
        TypeLabel::II1
    } else if tracial {
        TypeLabel::IIInf
    } else {
        TypeLabel::III
    };
    Ok((label, preds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fermi::ProductSpace;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tol() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn pauli_x() -> ComplexMatrix {
        ComplexMatrix::from_rows(vec![
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(1.0, 0.0), c(0.0, 0.0)],
        ])
        .unwrap()
    }

    fn density_state(rho: ComplexMatrix) -> StateFunctional {
        let s = GradedSpace::qubit();
        StateFunctional::on_full(&s, "test", rho, &tol()).unwrap()
    }

    #[test]
    fn evenness_examples() {
        let diag = density_state(ComplexMatrix::diag(&[0.25, 0.75]));
        assert!(is_even_state(&diag, 1e-10));
        let mixed_rho = ComplexMatrix::identity(2)
            .add(&pauli_x())
            .unwrap()
            .scale(c(0.5, 0.0));
        let mixed = density_state(mixed_rho);
        assert!(!is_even_state(&mixed, 1e-10));
        // direct evaluation: f(A) = 1/2, f(theta(A)) = -1/2
        let a = crate::fermi::annihilator().mat;
        assert!((mixed.value_of(&a) - c(0.5, 0.0)).norm() < 1e-12);
        let s = GradedSpace::qubit();
        let ta = s.theta(&a).unwrap();
        assert!((mixed.value_of(&ta) - c(-0.5, 0.0)).norm() < 1e-12);
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        assert!(is_even_state(&tr, 1e-12));
    }

    #[test]
    fn riesz_evaluation_matches_density() {
        let rho = ComplexMatrix::from_rows(vec![
            vec![c(0.6, 0.0), c(0.1, 0.2)],
            vec![c(0.1, -0.2), c(0.4, 0.0)],
        ])
        .unwrap();
        let f = density_state(rho.clone());
        let m = ComplexMatrix::from_rows(vec![
            vec![c(1.0, 1.0), c(-2.0, 0.3)],
            vec![c(0.0, -1.0), c(0.5, 0.0)],
        ])
        .unwrap();
        let expected = rho.matmul(&m).unwrap().trace();
        assert!((f.value_of(&m) - expected).norm() < 1e-12);
        assert!((f.unit_value() - c(1.0, 0.0)).norm() < 1e-12);
        assert!(f.hermitian_defect().unwrap() < 1e-12);
    }

    #[test]
    fn product_of_traces_is_the_trace() {
        let s = GradedSpace::qubit();
        let space = ProductSpace::qubits(2).unwrap();
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        let prod = product_functional(&[tr.clone(), tr], &space, &tol()).unwrap();
        // brute force over all 16 basis products: value = tr(w)/4
        for (b, v) in prod.algebra.basis.iter().zip(&prod.values) {
            let expected = b.mat.trace() * c(0.25, 0.0);
            assert!((v - expected).norm() < 1e-12, "value {v}, trace {expected}");
        }
        // and as a functional on arbitrary elements
        let m = ComplexMatrix::from_fn(4, 4, |i, j| c((i * 4 + j) as f64, 1.0));
        assert!((prod.value_of(&m) - m.trace().scale(0.25)).norm() < 1e-10);
    }

    #[test]
    fn product_of_pure_diagonal_states_kills_odd_letters() {
        let s = GradedSpace::qubit();
        let rho = ComplexMatrix::diag(&[1.0, 0.0]);
        let f1 = StateFunctional::on_full(&s, "pure0", rho.clone(), &tol()).unwrap();
        let f2 = StateFunctional::on_full(&s, "pure0", rho, &tol()).unwrap();
        let space = ProductSpace::qubits(2).unwrap();
        let prod = product_functional(&[f1, f2], &space, &tol()).unwrap();
        let a1 = crate::fermi::embed_site(&crate::fermi::annihilator(), 1, &space).unwrap();
        assert!(prod.value_of(&a1).norm() < 1e-12);
        assert!(is_even_state(&prod, 1e-10));
    }

    #[test]
    fn positivity_of_products_needs_all_but_one_even() {
        let s = GradedSpace::qubit();
        let space = ProductSpace::qubits(2).unwrap();
        let even_rho = ComplexMatrix::diag(&[0.5, 0.5]);
        let skew_rho = ComplexMatrix::identity(2)
            .add(&pauli_x().scale(c(0.9, 0.0)))
            .unwrap()
            .scale(c(0.5, 0.0));
        let even = StateFunctional::on_full(&s, "even", even_rho, &tol()).unwrap();
        let skew = StateFunctional::on_full(&s, "skew", skew_rho, &tol()).unwrap();
        // both even
        let p = product_functional(&[even.clone(), even.clone()], &space, &tol()).unwrap();
        let (ok, min_eig) = positivity_check(&p, &tol()).unwrap();
        assert!(ok, "min eig {min_eig}");
        assert!(min_eig >= -1e-10);
        // one non-even, one even: still positive
        let p = product_functional(&[skew.clone(), even], &space, &tol()).unwrap();
        let (ok, min_eig) = positivity_check(&p, &tol()).unwrap();
        assert!(ok, "min eig {min_eig}");
        assert!(min_eig >= -1e-10);
        // both non-even: NOT positive. The Gram is genuinely non-hermitian
        // here (odd-odd words change sign under adjoints), and the minimal
        // eigenvalue of its hermitian part is frozen from an independent
        // implementation of the same 16x16 Gram.
        let p = product_functional(&[skew.clone(), skew], &space, &tol()).unwrap();
        let g = p.gram().unwrap();
        assert!((g.hermitian_defect() - 0.405).abs() < 1e-10);
        let (ok, min_eig) = positivity_check(&p, &tol()).unwrap();
        assert!(!ok);
        assert!(min_eig < -1e-3);
        assert!(
            (min_eig - (-0.068198051534)).abs() < 1e-9,
            "min eig {min_eig}"
        );
    }

    #[test]
    fn gns_of_a_character_is_one_dimensional() {
        let s = GradedSpace::qubit();
        let alg = vonneumann::generate(&[ComplexMatrix::diag(&[1.0, 2.0])], &s, &tol()).unwrap();
        let f = StateFunctional::from_density(
            alg,
            "char",
            ComplexMatrix::diag(&[1.0, 0.0]),
            1e-10,
        )
        .unwrap();
        let g = gns(&f, &tol()).unwrap();
        assert_eq!(g.dim, 1);
        assert!(is_multiplicative(&f, 1e-10).unwrap());
        // state recovery
        for (b, v) in f.algebra.basis.iter().zip(&f.values) {
            let p = g.represent(&f, &b.mat, 1e-8).unwrap();
            assert!((g.vector_state(&p).unwrap() - v).norm() < 1e-9);
        }
    }

    #[test]
    fn gns_of_pure_vector_state_is_irreducible() {
        let f = density_state(ComplexMatrix::diag(&[1.0, 0.0]));
        let g = gns(&f, &tol()).unwrap();
        assert_eq!(g.dim, 2);
        let image = gns_image(&g, &tol()).unwrap();
        let comm = vonneumann::commutant(&image, &tol()).unwrap();
        assert_eq!(comm.span_dim(), 1);
        assert!(is_pure(&f, &tol()).unwrap());
    }

    #[test]
    fn gns_of_the_trace_has_dimension_four() {
        let s = GradedSpace::qubit();
        let f = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        let g = gns(&f, &tol()).unwrap();
        assert_eq!(g.dim, 4);
        let image = gns_image(&g, &tol()).unwrap();
        let comm = vonneumann::commutant(&image, &tol()).unwrap();
        assert_eq!(comm.span_dim(), 4);
        assert!(is_trace(&f, 1e-10).unwrap());
        assert!(!is_multiplicative(&f, 1e-10).unwrap());
        // tr(E01 E10) = 1/2 != 0 = tr(E01) tr(E10)
        assert!(!is_pure(&f, &tol()).unwrap());
    }

    #[test]
    fn gns_representation_is_a_star_homomorphism() {
        // multiplicativity and adjoints of the represented basis, checked
        // by expanding products over the basis
        let s = GradedSpace::qubit();
        let rho = ComplexMatrix::diag(&[0.3, 0.7]);
        let f = StateFunctional::on_full(&s, "mix", rho, &tol()).unwrap();
        let g = gns(&f, &tol()).unwrap();
        assert_eq!(g.dim, 4);
        for (a, pa) in f.algebra.basis.iter().zip(&g.rep) {
            let star = g.represent(&f, &a.mat.adjoint(), 1e-8).unwrap();
            assert!(star.sub(&pa.adjoint()).unwrap().max_abs() < 1e-9);
            for (b, pb) in f.algebra.basis.iter().zip(&g.rep) {
                let prod = g.represent(&f, &a.mat.matmul(&b.mat).unwrap(), 1e-8).unwrap();
                assert!(prod.sub(&pa.matmul(pb).unwrap()).unwrap().max_abs() < 1e-9);
            }
        }
        // cyclic vector reproduces the state
        for (b, v) in f.algebra.basis.iter().zip(&f.values) {
            let p = g.represent(&f, &b.mat, 1e-8).unwrap();
            assert!((g.vector_state(&p).unwrap() - v).norm() < 1e-9);
        }
    }

    #[test]
    fn covariant_unitary_for_trivial_grading_is_identity() {
        let s = GradedSpace::trivial(2);
        let rho = ComplexMatrix::diag(&[0.3, 0.7]);
        let f = StateFunctional::on_full(&s, "triv", rho, &tol()).unwrap();
        let g = gns(&f, &tol()).unwrap();
        let v = covariant_grading_unitary(&f, &g, 1e-8).unwrap();
        assert!(v.approx_eq(&ComplexMatrix::identity(g.dim), 1e-9));
    }

    #[test]
    fn covariant_unitary_relations_for_trace_and_pure_state() {
        let s = GradedSpace::qubit();
        for rho in [
            ComplexMatrix::diag(&[0.5, 0.5]),
            ComplexMatrix::diag(&[1.0, 0.0]),
        ] {
            let f = StateFunctional::on_full(&s, "even", rho, &tol()).unwrap();
            let g = gns_with_grading(&f, &tol()).unwrap();
            let v = g.grading_unitary.clone().unwrap();
            // V^2 = I, V = V*
            assert!(v
                .matmul(&v)
                .unwrap()
                .approx_eq(&ComplexMatrix::identity(g.dim), 1e-9));
            assert!(v.hermitian_defect() < 1e-9);
            // V rep(a) V = rep(theta a) and V xi = xi were validated inside,
            // but check one relation explicitly
            for (op, p) in f.algebra.basis.iter().zip(&g.rep) {
                let lhs = v.matmul(p).unwrap().matmul(&v).unwrap();
                let rhs = p.scale(c(op.grade.sign(), 0.0));
                assert!(lhs.approx_eq(&rhs, 1e-9));
            }
        }
    }

    #[test]
    fn covariant_unitary_rejects_uneven_states() {
        let rho = ComplexMatrix::identity(2)
            .add(&pauli_x())
            .unwrap()
            .scale(c(0.5, 0.0));
        let f = density_state(rho);
        let g = gns(&f, &tol()).unwrap();
        assert!(matches!(
            covariant_grading_unitary(&f, &g, 1e-8),
            Err(Error::NotEven { .. })
        ));
    }

    #[test]
    fn implementer_for_even_pure_state_matches_covariant_unitary() {
        let f = density_state(ComplexMatrix::diag(&[1.0, 0.0]));
        let g = gns_with_grading(&f, &tol()).unwrap();
        let v = g.grading_unitary.clone().unwrap();
        let u = find_grading_implementer(&f, &g, &tol()).unwrap();
        assert!(u.approx_eq(&v, 1e-8));
    }

    #[test]
    fn implementer_does_not_exist_for_swapped_character() {
        // diagonal algebra with the grading that swaps the coordinates:
        // theta exchanges the two characters, whose GNS representations
        // are disjoint
        let u_swap = pauli_x();
        let s = GradedSpace::new(u_swap, 1e-10).unwrap();
        let alg = vonneumann::generate(&[ComplexMatrix::diag(&[1.0, 2.0])], &s, &tol()).unwrap();
        let f = StateFunctional::from_density(
            alg,
            "char",
            ComplexMatrix::diag(&[1.0, 0.0]),
            1e-10,
        )
        .unwrap();
        let g = gns(&f, &tol()).unwrap();
        assert_eq!(g.dim, 1);
        assert!(matches!(
            find_grading_implementer(&f, &g, &tol()),
            Err(Error::NotImplementable(_))
        ));
    }

    #[test]
    fn implementer_exists_for_pure_non_even_state() {
        // vector state along (1,1)/sqrt(2): pure, not even
        let psi = [c(1.0, 0.0), c(1.0, 0.0)];
        let rho = ComplexMatrix::from_fn(2, 2, |i, j| psi[i] * psi[j].conj() * 0.5);
        let f = density_state(rho);
        assert!(!is_even_state(&f, 1e-8));
        let g = gns(&f, &tol()).unwrap();
        let u = find_grading_implementer(&f, &g, &tol()).unwrap();
        // self-adjoint unitary intertwiner with the normalized overlap
        let overlap: Complex64 = u
            .matvec(&g.cyclic_vector)
            .unwrap()
            .iter()
            .zip(&g.cyclic_vector)
            .map(|(a, b)| b.conj() * a)
            .sum();
        assert!(overlap.re >= -1e-10);
        for (op, p) in f.algebra.basis.iter().zip(&g.rep) {
            let lhs = u.matmul(p).unwrap();
            let rhs = p.scale(c(op.grade.sign(), 0.0)).matmul(&u).unwrap();
            assert!(lhs.approx_eq(&rhs, 1e-8));
        }
    }

    #[test]
    fn purity_trace_multiplicativity_examples() {
        let s = GradedSpace::qubit();
        // character on the diagonal algebra: multiplicative
        let alg = vonneumann::generate(&[ComplexMatrix::diag(&[1.0, 2.0])], &s, &tol()).unwrap();
        let point = StateFunctional::from_density(
            alg,
            "char",
            ComplexMatrix::diag(&[1.0, 0.0]),
            1e-10,
        )
        .unwrap();
        assert!(is_multiplicative(&point, 1e-10).unwrap());
        // trace: tracial but not multiplicative
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        assert!(is_trace(&tr, 1e-10).unwrap());
        assert!(!is_multiplicative(&tr, 1e-10).unwrap());
        // pure vector state
        let pure = density_state(ComplexMatrix::diag(&[1.0, 0.0]));
        assert!(is_pure(&pure, &tol()).unwrap());
    }

    #[test]
    fn classify_the_four_finite_types() {
        let s = GradedSpace::qubit();
        // I_1: point evaluation on the diagonal algebra, trivial grading
        let striv = GradedSpace::trivial(2);
        let alg =
            vonneumann::generate(&[ComplexMatrix::diag(&[1.0, 2.0])], &striv, &tol()).unwrap();
        let point = StateFunctional::from_density(
            alg,
            "char",
            ComplexMatrix::diag(&[1.0, 0.0]),
            1e-10,
        )
        .unwrap();
        let (label, _) = classify_product_type(&point, &tol(), 1e-8).unwrap();
        assert_eq!(label, TypeLabel::I1);
        // I_inf: pure non-multiplicative
        let pure = density_state(ComplexMatrix::diag(&[1.0, 0.0]));
        let (label, preds) = classify_product_type(&pure, &tol(), 1e-8).unwrap();
        assert_eq!(label, TypeLabel::IInf);
        assert!(preds.pure && !preds.multiplicative);
        // II_1: the trace
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        let (label, preds) = classify_product_type(&tr, &tol(), 1e-8).unwrap();
        assert_eq!(label, TypeLabel::II1);
        assert!(preds.trace && !preds.multiplicative);
        // III: a non-tracial faithful even state
        let skew = density_state(ComplexMatrix::diag(&[0.3, 0.7]));
        let (label, preds) = classify_product_type(&skew, &tol(), 1e-8).unwrap();
        assert_eq!(label, TypeLabel::III);
        assert!(!preds.commutant_state_tracial);
    }

    #[test]
    fn classify_type_two_infinity() {
        // trace (x) pure-even on M2 (x) M2: neither pure nor tracial, but
        // the commutant-restricted vector state is tracial
        let space = ProductSpace::qubits(2).unwrap();
        let s = GradedSpace::qubit();
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        let pure = density_state(ComplexMatrix::diag(&[1.0, 0.0]));
        let prod = product_functional(&[tr, pure], &space, &tol()).unwrap();
        let (label, preds) = classify_product_type(&prod, &tol(), 1e-8).unwrap();
        assert_eq!(label, TypeLabel::IIInf, "predicates: {preds:?}");
        assert!(!preds.pure && !preds.trace && preds.commutant_state_tracial);
    }

    #[test]
    fn classification_is_invariant_under_grading_commuting_conjugation() {
        let rho = ComplexMatrix::diag(&[0.3, 0.7]);
        // W = diag(phase, phase') commutes with U = diag(1,-1)
        let w = ComplexMatrix::from_rows(vec![
            vec![Complex64::from_polar(1.0, 0.4), c(0.0, 0.0)],
            vec![c(0.0, 0.0), Complex64::from_polar(1.0, -1.1)],
        ])
        .unwrap();
        let rho2 = w.matmul(&rho).unwrap().matmul(&w.adjoint()).unwrap();
        let f1 = density_state(rho);
        let f2 = density_state(rho2);
        let (l1, _) = classify_product_type(&f1, &tol(), 1e-8).unwrap();
        let (l2, _) = classify_product_type(&f2, &tol(), 1e-8).unwrap();
        assert_eq!(l1, l2);
        assert_eq!(l1, TypeLabel::III);
    }

    #[test]
    fn faithful_even_products_have_full_rank_gram() {
        let s = GradedSpace::qubit();
        let space = ProductSpace::qubits(2).unwrap();
        let tr = StateFunctional::normalized_trace(&s, &tol()).unwrap();
        let prod = product_functional(&[tr.clone(), tr], &space, &tol()).unwrap();
        let g = gns(&prod, &tol()).unwrap();
        assert_eq!(g.dim, 16);
    }

    #[test]
    fn product_gns_is_the_graded_product_of_gns_data() {
        // matrix elements <pi(x) xi, pi(y) xi> of the product functional's
        // GNS agree with the Klein-form product of the factor GNS data,
        // using each factor's covariant grading unitary as its grading
        let s = GradedSpace::qubit();
        let rho1 = ComplexMatrix::diag(&[0.3, 0.7]);
        let rho2 = ComplexMatrix::diag(&[0.5, 0.5]);
        let f1 = StateFunctional::on_full(&s, "a", rho1, &tol()).unwrap();
        let f2 = StateFunctional::on_full(&s, "b", rho2, &tol()).unwrap();
        let space = ProductSpace::qubits(2).unwrap();
        let prod = product_functional(&[f1.clone(), f2.clone()], &space, &tol()).unwrap();
        let gp = gns(&prod, &tol()).unwrap();

        let g1 = gns_with_grading(&f1, &tol()).unwrap();
        let g2 = gns_with_grading(&f2, &tol()).unwrap();
        let gs1 = GradedSpace::new(g1.grading_unitary.clone().unwrap(), 1e-9).unwrap();
        let gs2 = GradedSpace::new(g2.grading_unitary.clone().unwrap(), 1e-9).unwrap();
        let pspace = crate::fermi::ProductSpace::new(vec![gs1.clone(), gs2]).unwrap();

        // iterate the same letter odometer as product_functional: the
        // product basis index is (i, j) with j fastest
        let units = s.homogeneous_unit_basis(1e-10).unwrap();
        let mut xi = Vec::new();
        for x in &g1.cyclic_vector {
            for y in &g2.cyclic_vector {
                xi.push(*x * *y);
            }
        }
        let k = units.len();
        for i1 in 0..k {
            for j1 in 0..k {
                let w1 = crate::fermi::embed_word(
                    &[
                        (1, &GradedOperator { mat: g1.rep[i1].clone(), grade: units[i1].grade }),
                        (2, &GradedOperator { mat: g2.rep[j1].clone(), grade: units[j1].grade }),
                    ],
                    &pspace,
                )
                .unwrap();
                for i2 in 0..k {
                    for j2 in 0..k {
                        let w2 = crate::fermi::embed_word(
                            &[
                                (1, &GradedOperator { mat: g1.rep[i2].clone(), grade: units[i2].grade }),
                                (2, &GradedOperator { mat: g2.rep[j2].clone(), grade: units[j2].grade }),
                            ],
                            &pspace,
                        )
                        .unwrap();
                        // product functional's GNS matrix element
                        let a = &gp.rep[i1 * k + j1];
                        let b = &gp.rep[i2 * k + j2];
                        let av = a.matvec(&gp.cyclic_vector).unwrap();
                        let bv = b.matvec(&gp.cyclic_vector).unwrap();
                        let lhs: Complex64 =
                            bv.iter().zip(&av).map(|(x, y)| x.conj() * y).sum();
                        // graded-product matrix element
                        let av2 = w1.mat.matvec(&xi).unwrap();
                        let bv2 = w2.mat.matvec(&xi).unwrap();
                        let rhs: Complex64 =
                            bv2.iter().zip(&av2).map(|(x, y)| x.conj() * y).sum();
                        assert!(
                            (lhs - rhs).norm() < 1e-9,
                            "mismatch at ({i1},{j1})x({i2},{j2}): {lhs} vs {rhs}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn wire_format_round_trip() {
        let f = density_state(ComplexMatrix::diag(&[0.3, 0.7]));
        let wire = f.to_wire();
        let json = serde_json::to_string(&wire).unwrap();
        assert!(json.contains("\"basis_ref\""));
        let back: StateWire = serde_json::from_str(&json).unwrap();
        let f2 = StateFunctional::from_wire(back, f.algebra.clone()).unwrap();
        for (a, b) in f.values.iter().zip(&f2.values) {
            assert!((a - b).norm() < 1e-14);
        }
    }
}
