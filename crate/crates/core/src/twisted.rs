//! The twist automorphism and twisted commutants, plus numerical checks of
//! the structural identities built on them: the two-factor and n-fold
//! graded commutation theorems, the union/intersection identities, the
//! cyclic-vector equivalence, the real-linear density criterion, and
//! purity/factoriality of graded products.
//!
//! The twisted commutant is always computed by BOTH of its defining
//! formulas — the twist of the commutant and the commutant of the twist —
//! and the two spans must agree; a disagreement surfaces as
//! [`Error::FormulaMismatch`] instead of silently trusting either route.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fermi::{self, ProductSpace};
use crate::graded::{homogenize_span, GradedOperator, GradedSpace};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};
use crate::states::{self, StateFunctional};
use crate::vonneumann::{self, ConcreteAlgebra};
use crate::{Error, Result};

/// Ambient data of the twist: the grading unitary `U` of `eta_U`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TwistContext {
    pub space: GradedSpace,
}

impl TwistContext {
    pub fn new(space: GradedSpace) -> Self {
        Self { space }
    }
}

/// The twist `eta_U(T) = T_even + i U T_odd`.
///
/// A linear *-automorphism of `B(H)`: multiplicative on homogeneous pairs
/// by the commutation rules of `U`, hence on everything by linearity.
pub fn twist(t: &ComplexMatrix, ctx: &TwistContext) -> Result<ComplexMatrix> {
    let (even, odd) = ctx.space.even_odd_split(t)?;
    let twisted_odd = ctx
        .space
        .u
        .matmul(&odd)?
        .scale(Complex64::new(0.0, 1.0));
    even.add(&twisted_odd)
}

/// The inverse twist: `T_even - i U T_odd` (on the split of the INPUT,
/// using that the twist maps odd to odd).
pub fn untwist(t: &ComplexMatrix, ctx: &TwistContext) -> Result<ComplexMatrix> {
    let (even, odd) = ctx.space.even_odd_split(t)?;
    let untwisted_odd = ctx
        .space
        .u
        .matmul(&odd)?
        .scale(Complex64::new(0.0, -1.0));
    even.add(&untwisted_odd)
}

/// Apply the twist to a whole algebra (basis and generating set). Grades,
/// Hilbert-Schmidt orthonormality, and *-closure are preserved.
pub fn twist_algebra(m: &ConcreteAlgebra) -> Result<ConcreteAlgebra> {
    let ctx = TwistContext::new(m.ambient.clone());
    let basis = m
        .basis
        .iter()
        .map(|b| {
            Ok(GradedOperator {
                mat: twist(&b.mat, &ctx)?,
                grade: b.grade,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gens = m
        .generators()
        .iter()
        .map(|g| twist(g, &ctx))
        .collect::<Result<Vec<_>>>()?;
    Ok(ConcreteAlgebra::from_parts(
        m.ambient.clone(),
        basis,
        m.unital,
        gens,
    ))
}

/// The twisted commutant: the twist of the commutant, cross-checked
/// against the commutant of the twist. The two spans must agree within
/// `tol.eq_tol`; the returned algebra is the twist applied to each basis
/// element of the plain commutant.
pub fn twisted_commutant(m: &ConcreteAlgebra, tol: &ToleranceConfig) -> Result<ConcreteAlgebra> {
    let route_a = twist_algebra(&vonneumann::commutant(m, tol)?)?;
    let route_b = vonneumann::commutant(&twist_algebra(m)?, tol)?;
    let cmp = route_a.equal_span(&route_b, tol)?;
    if !cmp.equal {
        return Err(Error::FormulaMismatch { gap: cmp.gap });
    }
    Ok(route_a)
}

/// Verdict and evidence for one subspace identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub verdict: bool,
    /// Operator-norm distance between the two span projectors.
    pub gap: f64,
    pub lhs_dim: usize,
    pub rhs_dim: usize,
}

impl IdentityReport {
    fn from_comparison(cmp: &linalg::SubspaceComparison) -> Self {
        Self {
            verdict: cmp.equal,
            gap: cmp.gap,
            lhs_dim: cmp.dim_left,
            rhs_dim: cmp.dim_right,
        }
    }
}

/// The graded product algebra of factors living on their own graded
/// spaces: basis = Klein-form tensor products of the factor bases on the
/// amalgamated product space, generators = site embeddings of the factor
/// generators.
pub fn graded_product_algebra(
    factors: &[&ConcreteAlgebra],
    tol: &ToleranceConfig,
) -> Result<(ProductSpace, ConcreteAlgebra)> {
    if factors.is_empty() {
        return Err(Error::InvalidSpec("no factors given".into()));
    }
    let spaces: Vec<GradedSpace> = factors.iter().map(|f| f.ambient.clone()).collect();
    let ps = ProductSpace::new(spaces)?;
    let count: usize = factors.iter().map(|f| f.basis.len()).product();
    if count > crate::fermi::MAX_LOCAL_BASIS {
        return Err(Error::SizeLimit(format!(
            "graded product basis would have {count} elements"
        )));
    }
    let mut span = Vec::with_capacity(count);
    let n = factors.len();
    let mut pick = vec![0usize; n];
    'outer: loop {
        let ops: Vec<GradedOperator> = (0..n)
            .map(|i| factors[i].basis[pick[i]].clone())
            .collect();
        span.push(fermi::graded_tensor_all(&ps.factors, &ops)?.mat);
        let mut pos = n;
        loop {
            if pos == 0 {
                break 'outer;
            }
            pos -= 1;
            pick[pos] += 1;
            if pick[pos] < factors[pos].basis.len() {
                break;
            }
            pick[pos] = 0;
        }
    }
    let basis = homogenize_span(&ps.total, &span, tol.rank_tol)?;
    let mut gens = Vec::new();
    for (i, f) in factors.iter().enumerate() {
        for g in f.generators() {
            gens.push(fermi::embed_element(g, i + 1, &ps)?);
        }
    }
    let algebra = ConcreteAlgebra::from_parts(ps.total.clone(), basis, true, gens);
    Ok((ps, algebra))
}

/// Common core of the graded commutation checks: compares the twisted
/// commutant of the product with the product of the twisted commutants.
fn truncation_identity(
    factors: &[&ConcreteAlgebra],
    tol: &ToleranceConfig,
) -> Result<IdentityReport> {
    let (_, product) = graded_product_algebra(factors, tol)?;
    let lhs = twisted_commutant(&product, tol)?;
    let twisted: Vec<ConcreteAlgebra> = factors
        .iter()
        .map(|f| twisted_commutant(f, tol))
        .collect::<Result<_>>()?;
    let refs: Vec<&ConcreteAlgebra> = twisted.iter().collect();
    let (_, rhs) = graded_product_algebra(&refs, tol)?;
    let cmp = lhs.equal_span(&rhs, tol)?;
    Ok(IdentityReport::from_comparison(&cmp))
}

/// Two-factor graded commutation theorem: the twisted commutant of a
/// graded product is the graded product of the twisted commutants.
pub fn vandaele_check(
    m: &ConcreteAlgebra,
    n: &ConcreteAlgebra,
    tol: &ToleranceConfig,
) -> Result<IdentityReport> {
    truncation_identity(&[m, n], tol)
}

/// The n-fold finite truncation of the infinite graded commutation
/// theorem, for 2 to 4 factors with product dimension at most 256.
pub fn infinite_truncation_check(
    factors: &[&ConcreteAlgebra],
    tol: &ToleranceConfig,
) -> Result<IdentityReport> {
    let n = factors.len();
    if !(2..=4).contains(&n) {
        return Err(Error::SizeLimit(format!(
            "truncation depth {n} outside 2..=4"
        )));
    }
    let dim: usize = factors.iter().map(|f| f.ambient.dim).product();
    if dim > 256 {
        return Err(Error::SizeLimit(format!("product dimension {dim} > 256")));
    }
    truncation_identity(factors, tol)
}

/// Report for the two union-lemma identities.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UnionLemmaReport {
    /// Twisted commutant of the intersection vs join of twisted commutants.
    pub intersection: IdentityReport,
    /// Twisted commutant of the join vs intersection of twisted commutants.
    pub join: IdentityReport,
    pub verdict: bool,
}

/// Both union-lemma identities on a common ambient space.
pub fn union_lemma_check(
    n1: &ConcreteAlgebra,
    n2: &ConcreteAlgebra,
    tol: &ToleranceConfig,
) -> Result<UnionLemmaReport> {
    let t1 = twisted_commutant(n1, tol)?;
    let t2 = twisted_commutant(n2, tol)?;

    let lhs_meet = twisted_commutant(&vonneumann::intersect(n1, n2, tol)?, tol)?;
    let rhs_meet = vonneumann::join(&t1, &t2, tol)?;
    let meet = IdentityReport::from_comparison(&lhs_meet.equal_span(&rhs_meet, tol)?);

    let lhs_join = twisted_commutant(&vonneumann::join(n1, n2, tol)?, tol)?;
    let rhs_join = vonneumann::intersect(&t1, &t2, tol)?;
    let join = IdentityReport::from_comparison(&lhs_join.equal_span(&rhs_join, tol)?);

    let verdict = meet.verdict && join.verdict;
    Ok(UnionLemmaReport {
        intersection: meet,
        join,
        verdict,
    })
}

/// Report for the cyclic-vector equivalence.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CyclicReport {
    pub dim_plain: usize,
    pub dim_twisted: usize,
    pub cyclic_plain: bool,
    pub cyclic_twisted: bool,
    /// True iff the vector is cyclic for the algebra exactly when it is
    /// cyclic for its twist.
    pub verdict: bool,
}

fn orbit_rank(
    mats: &[ComplexMatrix],
    xi: &[Complex64],
    rank_tol: f64,
) -> Result<usize> {
    let mut cols = Vec::with_capacity(mats.len());
    for m in mats {
        cols.push(m.matvec(xi)?);
    }
    Ok(linalg::orthonormal_columns(&cols, rank_tol).len())
}

fn check_even_vector(space: &GradedSpace, xi: &[Complex64], eq_tol: f64) -> Result<()> {
    let uxi = space.u.matvec(xi)?;
    let defect: f64 = uxi
        .iter()
        .zip(xi)
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = xi.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt().max(1e-12);
    if defect > eq_tol * scale {
        return Err(Error::VectorNotEven { defect });
    }
    Ok(())
}

/// Equal-cyclicity of a vector for an algebra and for its twist: the
/// orbit-span dimensions are compared directly.
pub fn cyclic_lemma_check(
    a: &ConcreteAlgebra,
    xi: &[Complex64],
    tol: &ToleranceConfig,
) -> Result<CyclicReport> {
    check_even_vector(&a.ambient, xi, tol.eq_tol.max(1e-9))?;
    let d = a.ambient.dim;
    let dim_plain = orbit_rank(&a.matrices(), xi, tol.rank_tol)?;
    let twisted = twist_algebra(a)?;
    let dim_twisted = orbit_rank(&twisted.matrices(), xi, tol.rank_tol)?;
    let cyclic_plain = dim_plain == d;
    let cyclic_twisted = dim_twisted == d;
    Ok(CyclicReport {
        dim_plain,
        dim_twisted,
        cyclic_plain,
        cyclic_twisted,
        verdict: cyclic_plain == cyclic_twisted,
    })
}

/// Report for the real-linear density criterion.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RieffelReport {
    /// Real dimension of `eta(A_s) xi + i B_s xi` inside `R^(2d)`.
    pub real_dim: usize,
    pub expected_real_dim: usize,
    /// The density condition: `real_dim == expected_real_dim`.
    pub dense: bool,
    /// Whether the twisted commutant of `A` equals the double twisted
    /// commutant of `B`.
    pub identity_verdict: bool,
    pub identity_gap: f64,
    /// The lemma's equivalence: density holds exactly when the commutant
    /// identity does.
    pub equivalence_holds: bool,
}

/// Self-adjoint real-linear spanning set of an algebra's span.
fn self_adjoint_spanners(m: &ConcreteAlgebra) -> Result<Vec<ComplexMatrix>> {
    let mut out = Vec::with_capacity(2 * m.basis.len());
    for b in &m.basis {
        let adj = b.mat.adjoint();
        out.push(b.mat.add(&adj)?.scale(Complex64::new(0.5, 0.0)));
        out.push(b.mat.sub(&adj)?.scale(Complex64::new(0.0, -0.5)));
    }
    Ok(out)
}

/// Real-linear density criterion: `eta(A_s) xi + i B_s xi` fills the
/// ambient space viewed as a real vector space, for an even vector `xi`
/// cyclic for `A` with `A` inside the twisted commutant of `B`. The
/// verdict is cross-checked against the equivalent commutant identity.
pub fn rieffel_density_check(
    a: &ConcreteAlgebra,
    b: &ConcreteAlgebra,
    xi: &[Complex64],
    tol: &ToleranceConfig,
) -> Result<RieffelReport> {
    check_even_vector(&a.ambient, xi, tol.eq_tol.max(1e-9))?;
    let btw = twisted_commutant(b, tol)?;
    for elem in &a.basis {
        if !btw.contains(&elem.mat, tol.rank_tol)? {
            return Err(Error::PreconditionViolated(
                "the first algebra does not lie inside the twisted commutant of the second"
                    .into(),
            ));
        }
    }
    let d = a.ambient.dim;
    if orbit_rank(&a.matrices(), xi, tol.rank_tol)? != d {
        return Err(Error::PreconditionViolated(
            "the vector is not cyclic for the first algebra".into(),
        ));
    }
    let ctx = TwistContext::new(a.ambient.clone());
    let mut real_cols: Vec<Vec<Complex64>> = Vec::new();
    let realify = |v: &[Complex64]| -> Vec<Complex64> {
        let mut out = Vec::with_capacity(2 * v.len());
        out.extend(v.iter().map(|x| Complex64::new(x.re, 0.0)));
        out.extend(v.iter().map(|x| Complex64::new(x.im, 0.0)));
        out
    };
    for h in self_adjoint_spanners(a)? {
        let v = twist(&h, &ctx)?.matvec(xi)?;
        real_cols.push(realify(&v));
    }
    for h in self_adjoint_spanners(b)? {
        let v: Vec<Complex64> = h
            .matvec(xi)?
            .iter()
            .map(|x| Complex64::new(0.0, 1.0) * x)
            .collect();
        real_cols.push(realify(&v));
    }
    let real_dim = linalg::orthonormal_columns(&real_cols, tol.rank_tol).len();
    let expected = 2 * d;
    let dense = real_dim == expected;

    let atw = twisted_commutant(a, tol)?;
    let btwtw = twisted_commutant(&btw, tol)?;
    let cmp = atw.equal_span(&btwtw, tol)?;
    Ok(RieffelReport {
        real_dim,
        expected_real_dim: expected,
        dense,
        identity_verdict: cmp.equal,
        identity_gap: cmp.gap,
        equivalence_holds: dense == cmp.equal,
    })
}

/// Report for purity of a graded product of states.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PurityReport {
    pub gns_dim: usize,
    pub commutant_dim: usize,
    /// True iff the product functional's GNS commutant is trivial.
    pub verdict: bool,
}

/// Purity of the graded product of even pure states: the product
/// functional's GNS representation must have trivial commutant.
pub fn product_purity_check(
    factor_states: &[StateFunctional],
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<PurityReport> {
    if space.dim() > 256 {
        return Err(Error::SizeLimit(format!(
            "product dimension {} > 256",
            space.dim()
        )));
    }
    for f in factor_states {
        let defect = states::evenness_defect(f);
        if defect > states::DEFAULT_PREDICATE_TOL {
            return Err(Error::NotEven { defect });
        }
        if !states::is_pure(f, tol)? {
            return Err(Error::NotPure("a factor state is not pure".into()));
        }
    }
    let prod = states::product_functional(factor_states, space, tol)?;
    let g = states::gns(&prod, tol)?;
    let image = states::gns_image(&g, tol)?;
    let commutant_dim = vonneumann::commutant(&image, tol)?.span_dim();
    Ok(PurityReport {
        gns_dim: g.dim,
        commutant_dim,
        verdict: commutant_dim == 1,
    })
}

/// Report for factoriality of a graded product of algebras.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorialityReport {
    pub center_dim: usize,
    pub product_is_factor: bool,
    pub component_is_factor: Vec<bool>,
    /// The product is a factor exactly when every component is.
    pub equivalence_holds: bool,
}

/// Factoriality of the graded product: trivial center exactly when every
/// component has trivial center (both directions of the equivalence are
/// reported).
pub fn product_factoriality_check(
    factors: &[&ConcreteAlgebra],
    tol: &ToleranceConfig,
) -> Result<FactorialityReport> {
    let dim: usize = factors.iter().map(|f| f.ambient.dim).product();
    if dim > 256 {
        return Err(Error::SizeLimit(format!("product dimension {dim} > 256")));
    }
    let (_, product) = graded_product_algebra(factors, tol)?;
    let center_dim = vonneumann::center(&product, tol)?.span_dim();
    let product_is_factor = center_dim == 1;
    let component_is_factor = factors
        .iter()
        .map(|f| vonneumann::is_factor(f, tol))
        .collect::<Result<Vec<_>>>()?;
    let all_components = component_is_factor.iter().all(|&b| b);
    Ok(FactorialityReport {
        center_dim,
        product_is_factor,
        component_is_factor,
        equivalence_holds: product_is_factor == all_components,
    })
}
