//! Finite-mixture realization of the de Finetti structure of symmetric
//! states.
//!
//! A symmetric even state of a finite site-product truncation is modeled as
//! a finite mixture of equal-factor product states. The mixture carries a
//! finite "tail": one scalar per component. The conditional expectation onto
//! the tail evaluates an observable in each component separately — the
//! finitely-supported direct integral — and the de Finetti properties
//! (conditional independence over the tail, identical distribution of the
//! sites, invariance under the permutation action) become exact per-component
//! identities. The [`decompose`] solver recovers a mixture model from the
//! basis values of a symmetric even state by alternating least squares.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{self, ProductSpace};
use crate::graded::{Grade, GradedOperator, GradedSpace};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};
use crate::states::{self, StateFunctional, StateWire};
use crate::symmetry::{self, Permutation};

/// Default cap on mixture components.
pub const DEFAULT_MAX_COMPONENTS: usize = 8;

/// A finitely supported mixing measure: weights on the simplex and even
/// single-site density states, mixed as equal-factor products over
/// `site_count` sites.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    pub weights: Vec<f64>,
    pub components: Vec<StateFunctional>,
    pub site_count: usize,
}

/// Wire format of a mixture model:
/// `{"weights": [...], "components": [<state>...], "sites": n, "residual": r}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureModelWire {
    pub weights: Vec<f64>,
    pub components: Vec<StateWire>,
    pub sites: usize,
    pub residual: f64,
}

impl MixtureModel {
    /// Validates the simplex constraint (then renormalizes exactly), the
    /// evenness of every component, and the shared factor dimension.
    pub fn new(
        weights: Vec<f64>,
        components: Vec<StateFunctional>,
        site_count: usize,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != components.len() {
            return Err(Error::InvalidSpec(format!(
                "{} weights for {} components",
                weights.len(),
                components.len()
            )));
        }
        if site_count == 0 {
            return Err(Error::InvalidSpec("mixture over zero sites".into()));
        }
        let sum: f64 = weights.iter().sum();
        if weights.iter().any(|&w| w < -1e-9) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "weights {weights:?} are not on the simplex"
            )));
        }
        let weights: Vec<f64> = weights.iter().map(|&w| w.max(0.0) / sum).collect();
        let dim = components[0].algebra.ambient.dim;
        for (k, c) in components.iter().enumerate() {
            if c.algebra.ambient.dim != dim {
                return Err(Error::DimensionMismatch(format!(
                    "component {k} lives on dimension {} instead of {dim}",
                    c.algebra.ambient.dim
                )));
            }
            if !states::is_even_state(c, 1e-8) {
                let defect = states::evenness_defect(c);
                return Err(Error::NotEven { defect });
            }
        }
        Ok(Self {
            weights,
            components,
            site_count,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    /// The shared single-site space of the components.
    pub fn factor(&self) -> &GradedSpace {
        &self.components[0].algebra.ambient
    }

    /// The site-product space the mixture lives on.
    pub fn space(&self) -> Result<ProductSpace> {
        ProductSpace::uniform(self.factor(), self.site_count)
    }

    /// The equal-factor product state of each component.
    pub fn component_products(&self, tol: &ToleranceConfig) -> Result<Vec<StateFunctional>> {
        let space = self.space()?;
        self.components
            .iter()
            .map(|c| {
                let copies = vec![c.clone(); self.site_count];
                states::product_functional(&copies, &space, tol)
            })
            .collect()
    }

    pub fn to_wire(&self, residual: f64) -> MixtureModelWire {
        MixtureModelWire {
            weights: self.weights.clone(),
            components: self.components.iter().map(|c| c.to_wire()).collect(),
            sites: self.site_count,
            residual,
        }
    }

    /// Rebuild from the wire format; the single-site grading is supplied by
    /// the caller (the wire carries only densities).
    pub fn from_wire(
        wire: MixtureModelWire,
        factor: &GradedSpace,
        tol: &ToleranceConfig,
    ) -> Result<(Self, f64)> {
        let mut components = Vec::with_capacity(wire.components.len());
        for sw in wire.components {
            let rho = sw.density.ok_or_else(|| {
                Error::InvalidSpec("wire component carries no density".into())
            })?;
            components.push(StateFunctional::on_full(factor, sw.basis_ref, rho, tol)?);
        }
        let model = Self::new(wire.weights, components, wire.sites)?;
        Ok((model, wire.residual))
    }
}

/// An element of the finite tail: one scalar per mixture component (a
/// diagonal element of the component algebra).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailElement {
    pub values: Vec<Complex64>,
}

/// Solver parameters for [`decompose`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Largest mixture size tried (the K sweep stops early on success).
    pub max_components: usize,
    /// Iteration cap per restart.
    pub max_iterations: usize,
    /// Target for the full-basis l2 residual.
    pub residual_target: f64,
    /// Base seed; restarts derive their streams deterministically from it.
    pub seed: u64,
    /// Random restarts per mixture size.
    pub restarts: usize,
    /// Initial projected-gradient step for the component updates.
    pub step_size: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_components: 4,
            max_iterations: 400,
            residual_target: 1e-9,
            seed: 0,
            restarts: 8,
            step_size: 0.5,
        }
    }
}

// ---------------------------------------------------------------------------
// mixtures and tails
// ---------------------------------------------------------------------------

/// The mixed state `omega = sum_k lambda_k x^n(rho_k)`, expressed on the
/// ordered word basis. Symmetric and even by construction.
pub fn mixture_state(model: &MixtureModel, tol: &ToleranceConfig) -> Result<StateFunctional> {
    let products = model.component_products(tol)?;
    let len = products[0].values.len();
    let mut values = vec![Complex64::new(0.0, 0.0); len];
    for (w, p) in model.weights.iter().zip(&products) {
        for (acc, v) in values.iter_mut().zip(&p.values) {
            *acc += Complex64::new(*w, 0.0) * v;
        }
    }
    StateFunctional::from_values(
        products[0].algebra.clone(),
        format!("mixture:{}", model.n_components()),
        values,
    )
}

/// The tail conditional expectation of an observable: component `k` holds
/// `(x^n rho_k)(X)` — the finitely supported form of the direct-integral
/// evaluation over the mixing measure.
pub fn tail_expectation(
    model: &MixtureModel,
    x: &ComplexMatrix,
    tol: &ToleranceConfig,
) -> Result<TailElement> {
    let products = model.component_products(tol)?;
    Ok(TailElement {
        values: products.iter().map(|p| p.value_of(x)).collect(),
    })
}

/// Tail expectation against prebuilt component products (loop-friendly).
fn tail_of(products: &[StateFunctional], x: &ComplexMatrix) -> TailElement {
    TailElement {
        values: products.iter().map(|p| p.value_of(x)).collect(),
    }
}

/// Conditional independence over the tail: for sampled `X` supported in the
/// first site set and `Y` in the second, reports the largest componentwise
/// `|E[XY] - E[X] E[Y]|`. Zero for mixtures of products — independence holds
/// relative to the tail even when the mixed state itself does not factorize.
pub fn conditional_independence_check(
    model: &MixtureModel,
    sites_i: &[usize],
    sites_j: &[usize],
    samples: usize,
    seed: u64,
    tol: &ToleranceConfig,
) -> Result<f64> {
    for s in sites_i {
        if sites_j.contains(s) {
            return Err(Error::OverlappingSupports(format!(
                "site {s} appears in both supports"
            )));
        }
    }
    let space = model.space()?;
    let la = fermi::local_algebra(sites_i, &space, tol.eq_tol)?;
    let lb = fermi::local_algebra(sites_j, &space, tol.eq_tol)?;
    let products = model.component_products(tol)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defect: f64 = 0.0;
    let dim = space.dim();
    for _ in 0..samples.max(1) {
        let sample = |basis: &[GradedOperator], rng: &mut ChaCha8Rng| -> Result<ComplexMatrix> {
            let mut out = ComplexMatrix::zeros(dim, dim);
            for b in basis {
                let c = Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                out = out.add(&b.mat.scale(c))?;
            }
            Ok(out)
        };
        let x = sample(&la.basis, &mut rng)?;
        let y = sample(&lb.basis, &mut rng)?;
        let xy = x.matmul(&y)?;
        let ex = tail_of(&products, &x);
        let ey = tail_of(&products, &y);
        let exy = tail_of(&products, &xy);
        for k in 0..model.n_components() {
            defect = defect.max((exy.values[k] - ex.values[k] * ey.values[k]).norm());
        }
    }
    Ok(defect)
}

/// Identical distribution of the sites over the tail: the embeddings of a
/// single-site element at two sites have equal tail expectations, checked
/// both directly and through the permutation action (the transposition
/// moving one embedding onto the other).
pub fn identical_distribution_check(
    model: &MixtureModel,
    a: &ComplexMatrix,
    site_j: usize,
    site_k: usize,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let space = model.space()?;
    space.check_site(site_j)?;
    space.check_site(site_k)?;
    let factor = model.factor().clone();
    let embed = |site: usize| -> Result<ComplexMatrix> {
        // split into homogeneous parts so non-homogeneous elements embed too
        let (even, odd) = factor.even_odd_split(a)?;
        let mut out = ComplexMatrix::zeros(space.dim(), space.dim());
        for (mat, grade) in [(even, Grade::Even), (odd, Grade::Odd)] {
            if mat.max_abs() > 0.0 {
                let op = GradedOperator { mat, grade };
                out = out.add(&fermi::embed_site(&op, site, &space)?)?;
            }
        }
        Ok(out)
    };
    let xj = embed(site_j)?;
    let xk = embed(site_k)?;
    let products = model.component_products(tol)?;
    let tj = tail_of(&products, &xj);
    let tk = tail_of(&products, &xk);
    let mut defect: f64 = 0.0;
    for (vj, vk) in tj.values.iter().zip(&tk.values) {
        defect = defect.max((vj - vk).norm());
    }
    if site_j != site_k {
        // the same identity through the implemented action
        let sigma = Permutation::transposition(space.n_sites(), site_j, site_k)?;
        let moved = symmetry::permute_element(&sigma, &xj, &space, tol)?;
        let tm = tail_of(&products, &moved);
        for (vm, vk) in tm.values.iter().zip(&tk.values) {
            defect = defect.max((vm - vk).norm());
        }
    }
    Ok(defect)
}

/// l2 distance between the basis values of a state and of the mixture it is
/// supposed to equal.
pub fn residual(
    f: &StateFunctional,
    model: &MixtureModel,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let mix = mixture_state(model, tol)?;
    if f.algebra.span_dim() != mix.algebra.span_dim() {
        return Err(Error::DimensionMismatch(format!(
            "state spans {} dimensions, mixture {}",
            f.algebra.span_dim(),
            mix.algebra.span_dim()
        )));
    }
    let mut sum = 0.0;
    for (b, mv) in mix.algebra.basis.iter().zip(&mix.values) {
        sum += (f.value_of(&b.mat) - mv).norm_sqr();
    }
    Ok(sum.sqrt())
}

/// Trace distance `|rho - sigma|_1 / 2` of two density matrices.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let diff = a.sub(b)?;
    let (vals, _) = linalg::hermitian_eig(&diff, 1e-7)?;
    Ok(vals.iter().map(|v| v.abs()).sum::<f64>() / 2.0)
}

/// Single-site marginal density of a state on a site-product space:
/// `tr(rho a) = f(embed_site(a))` for every single-site `a`.
pub fn marginal_density(
    f: &StateFunctional,
    space: &ProductSpace,
    site: usize,
    tol: &ToleranceConfig,
) -> Result<ComplexMatrix> {
    space.check_site(site)?;
    let factor = &space.factors[site - 1];
    let units = factor.homogeneous_unit_basis(tol.eq_tol)?;
    let d = factor.dim;
    let mut rho = ComplexMatrix::zeros(d, d);
    for (idx, unit) in units.iter().enumerate() {
        // diagonal-U unit order: unit idx = E(a,b) with b fastest
        let (a, b) = (idx / d, idx % d);
        let embedded = fermi::embed_site(unit, site, space)?;
        rho[(b, a)] = f.value_of(&embedded);
    }
    // clean up numerical skew: the marginal of a state is hermitian
    Ok(rho.add(&rho.adjoint())?.scale(Complex64::new(0.5, 0.0)))
}

// ---------------------------------------------------------------------------
// the decomposition solver
// ---------------------------------------------------------------------------

/// Euclidean projection onto the probability simplex, deterministic
/// tie-breaking by index.
fn project_simplex(u: &[f64]) -> Vec<f64> {
    let k = u.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| u[b].partial_cmp(&u[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut cum = 0.0;
    let mut theta = 0.0;
    let mut support = 0;
    for (j, &i) in idx.iter().enumerate() {
        cum += u[i];
        let t = (cum - 1.0) / (j + 1) as f64;
        if u[i] - t > 0.0 {
            theta = t;
            support = j + 1;
        }
    }
    if support == 0 {
        // all mass collapses onto the largest coordinate
        let mut out = vec![0.0; k];
        out[idx[0]] = 1.0;
        return out;
    }
    u.iter().map(|&x| (x - theta).max(0.0)).collect()
}

/// Projection onto the even densities: Hermitize, grading-average,
/// eigenvalue-clip, renormalize the trace (order fixed for determinism).
fn project_even_density(rho: &ComplexMatrix, factor: &GradedSpace) -> Result<ComplexMatrix> {
    let herm = rho.add(&rho.adjoint())?.scale(Complex64::new(0.5, 0.0));
    let symmetrized = herm
        .add(&factor.u.matmul(&herm)?.matmul(&factor.u)?)?
        .scale(Complex64::new(0.5, 0.0));
    let (vals, vecs) = linalg::hermitian_eig(&symmetrized, 1e-9)?;
    let d = factor.dim;
    let clipped: Vec<f64> = vals.iter().map(|&v| v.max(0.0)).collect();
    let tr: f64 = clipped.iter().sum();
    if tr <= 1e-12 {
        // degenerate input: fall back to the maximally mixed state
        return Ok(ComplexMatrix::identity(d).scale(Complex64::new(1.0 / d as f64, 0.0)));
    }
    let mut out = ComplexMatrix::zeros(d, d);
    for (i, &lam) in clipped.iter().enumerate() {
        if lam == 0.0 {
            continue;
        }
        let s = Complex64::new(lam / tr, 0.0);
        for a in 0..d {
            for b in 0..d {
                out[(a, b)] += s * vecs[(a, i)] * vecs[(b, i)].conj();
            }
        }
    }
    Ok(out)
}

/// Solve the small real SPD system `A x = b` by Gaussian elimination with
/// partial pivoting and a ridge for rank safety.
fn solve_real(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let k = b.len();
    let mut m: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let mut row = a[i].clone();
            row[i] += 1e-12;
            row.push(b[i]);
            row
        })
        .collect();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| {
                m[x][col]
                    .abs()
                    .partial_cmp(&m[y][col].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for row in 0..k {
            if row == col {
                continue;
            }
            let factor = m[row][col] / p;
            for c in col..=k {
                m[row][c] -= factor * m[col][c];
            }
        }
    }
    (0..k)
        .map(|i| {
            if m[i][i].abs() < 1e-300 {
                0.0
            } else {
                m[i][k] / m[i][i]
            }
        })
        .collect()
}

/// The words whose letters are all even, as per-site letter matrices. Only
/// these carry nonzero values for products of even states, so the solver
/// iterates over this subset and leaves the (identically zero) rest to the
/// final full-basis residual.
struct EvenWords {
    /// Per-site even letters (unit matrices).
    letters: Vec<ComplexMatrix>,
    /// Letter indices per word, `n` per entry.
    words: Vec<Vec<usize>>,
}

fn even_words(factor: &GradedSpace, n: usize, eq_tol: f64) -> Result<EvenWords> {
    let units = factor.homogeneous_unit_basis(eq_tol)?;
    let letters: Vec<ComplexMatrix> = units
        .iter()
        .filter(|u| !u.grade.is_odd())
        .map(|u| u.mat.clone())
        .collect();
    let e = letters.len();
    let count = e.pow(n as u32);
    let mut words = Vec::with_capacity(count);
    for mut idx in 0..count {
        let mut w = vec![0usize; n];
        for j in (0..n).rev() {
            w[j] = idx % e;
            idx /= e;
        }
        words.push(w);
    }
    Ok(EvenWords { letters, words })
}

/// Values of the product state of `rho` on the even-word subset:
/// `p[w] = prod_j tr(rho letter_(w_j))` (no Klein dressing arises — every
/// letter is even).
fn even_word_values(rho: &ComplexMatrix, ew: &EvenWords) -> Vec<Complex64> {
    let traces: Vec<Complex64> = ew
        .letters
        .iter()
        .map(|l| {
            // tr(rho l)
            let mut t = Complex64::new(0.0, 0.0);
            for i in 0..rho.rows {
                for j in 0..rho.cols {
                    t += rho[(i, j)] * l[(j, i)];
                }
            }
            t
        })
        .collect();
    ew.words
        .iter()
        .map(|w| w.iter().map(|&l| traces[l]).product())
        .collect()
}

/// One alternating-solver run from a fixed initialization. Returns the
/// even-subset residual and the component densities/weights.
#[allow(clippy::too_many_arguments)]
fn solve_once(
    target: &[Complex64],
    ew: &EvenWords,
    factor: &GradedSpace,
    k: usize,
    init: Vec<ComplexMatrix>,
    config: &SolverConfig,
) -> Result<(f64, Vec<f64>, Vec<ComplexMatrix>)> {
    let n = ew.words[0].len();
    let mut comps = init;
    let mut weights = vec![1.0 / k as f64; k];
    let mut step = config.step_size;
    let resid_of = |weights: &[f64], values: &[Vec<Complex64>]| -> f64 {
        let mut sum = 0.0;
        for (w, &t) in target.iter().enumerate() {
            let mut v = Complex64::new(0.0, 0.0);
            for (lam, pv) in weights.iter().zip(values) {
                v += Complex64::new(*lam, 0.0) * pv[w];
            }
            sum += (v - t).norm_sqr();
        }
        sum.sqrt()
    };
    let mut values: Vec<Vec<Complex64>> = comps.iter().map(|c| even_word_values(c, ew)).collect();
    let mut best = resid_of(&weights, &values);
    for _ in 0..config.max_iterations {
        // (a) weights: least squares over the simplex given the components
        let mut gram = vec![vec![0.0f64; k]; k];
        let mut rhs = vec![0.0f64; k];
        for a in 0..k {
            for b in 0..k {
                gram[a][b] = values[a]
                    .iter()
                    .zip(&values[b])
                    .map(|(x, y)| (x.conj() * y).re)
                    .sum();
            }
            rhs[a] = values[a]
                .iter()
                .zip(target)
                .map(|(x, t)| (x.conj() * t).re)
                .sum();
        }
        weights = project_simplex(&solve_real(&gram, &rhs));
        let mut current = resid_of(&weights, &values);

        // (b) components: one projected-gradient step each, backtracking on
        // the shared step size so the residual never increases
        let mut residuals: Vec<Complex64> = (0..target.len())
            .map(|w| {
                let mut v = Complex64::new(0.0, 0.0);
                for (lam, pv) in weights.iter().zip(&values) {
                    v += Complex64::new(*lam, 0.0) * pv[w];
                }
                v - target[w]
            })
            .collect();
        for c in 0..k {
            if weights[c] <= 1e-12 {
                continue;
            }
            // gradient of sum |e_w|^2 in the component density (Wirtinger):
            // 2 sum_w e_w lam sum_j (prod_{l != j} conj tr(rho b_l)) b_j^H
            let traces: Vec<Complex64> = ew
                .letters
                .iter()
                .map(|l| {
                    let mut t = Complex64::new(0.0, 0.0);
                    for i in 0..comps[c].rows {
                        for j in 0..comps[c].cols {
                            t += comps[c][(i, j)] * l[(j, i)];
                        }
                    }
                    t
                })
                .collect();
            let d = factor.dim;
            let mut grad = ComplexMatrix::zeros(d, d);
            for (w, word) in ew.words.iter().enumerate() {
                let e_w = residuals[w];
                if e_w.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    let mut partial = Complex64::new(2.0 * weights[c], 0.0) * e_w;
                    for (l, &letter) in word.iter().enumerate() {
                        if l != j {
                            partial *= traces[letter].conj();
                        }
                    }
                    grad = grad.add(&ew.letters[word[j]].adjoint().scale(partial))?;
                }
            }
            // backtrack until the move improves the residual
            let mut local = step;
            loop {
                let candidate = project_even_density(
                    &comps[c].sub(&grad.scale(Complex64::new(local, 0.0)))?,
                    factor,
                )?;
                let cand_values = even_word_values(&candidate, ew);
                let mut trial_values = values.clone();
                trial_values[c] = cand_values;
                let trial = resid_of(&weights, &trial_values);
                if trial <= current {
                    comps[c] = candidate;
                    values = trial_values;
                    current = trial;
                    break;
                }
                local /= 2.0;
                if local < 1e-13 {
                    break;
                }
            }
            // refresh residuals for the next component
            for (w, slot) in residuals.iter_mut().enumerate() {
                let mut v = Complex64::new(0.0, 0.0);
                for (lam, pv) in weights.iter().zip(&values) {
                    v += Complex64::new(*lam, 0.0) * pv[w];
                }
                *slot = v - target[w];
            }
        }
        if current < best - 1e-15 {
            step = (step * 1.5).min(4.0);
        } else {
            step = (step / 2.0).max(1e-10);
        }
        let stalled = best - current <= 1e-15;
        best = best.min(current);
        if best <= config.residual_target * 0.1 || (stalled && step <= 1e-9) {
            break;
        }
    }
    Ok((best, weights, comps))
}

/// Recover a finite mixture of equal-factor product states from a symmetric
/// even state: sweep the component count upward, run seeded multistarts of
/// the alternating solver for each count, and return the first model whose
/// full-basis residual meets the target (otherwise the best found).
pub fn decompose(
    f: &StateFunctional,
    space: &ProductSpace,
    config: &SolverConfig,
    tol: &ToleranceConfig,
) -> Result<(MixtureModel, f64)> {
    if config.max_components == 0 {
        return Err(Error::InvalidSpec("max_components must be >= 1".into()));
    }
    if space.n_sites() < 2 {
        return Err(Error::InvalidSpec(
            "decomposition needs at least two sites".into(),
        ));
    }
    let sym_defect = symmetry::symmetry_defect(f, space, tol)?;
    if sym_defect > tol.eq_tol.max(1e-12) * 100.0 {
        return Err(Error::NotSymmetric { defect: sym_defect });
    }
    let odd_max = symmetry::check_even_vanishing(f, space, tol)?;
    if odd_max > tol.eq_tol.max(1e-12) * 100.0 {
        return Err(Error::NotEven { defect: odd_max });
    }
    let factor = &space.factors[0];
    let n = space.n_sites();
    let ew = even_words(factor, n, tol.eq_tol)?;
    // target values on the even-word subset
    let indexer = symmetry::WordIndexer::new(space, tol.eq_tol)?;
    let full_letters = factor.homogeneous_unit_basis(tol.eq_tol)?;
    let even_letter_ids: Vec<usize> = (0..full_letters.len())
        .filter(|&i| !full_letters[i].grade.is_odd())
        .collect();
    let wb = symmetry::WordBasis::new(space, tol.eq_tol)?;
    if f.algebra.span_dim() != wb.len() {
        return Err(Error::InvalidSpec(format!(
            "state spans {} of {} word-basis dimensions",
            f.algebra.span_dim(),
            wb.len()
        )));
    }
    let target: Vec<Complex64> = ew
        .words
        .iter()
        .map(|w| {
            let full: Vec<usize> = w.iter().map(|&l| even_letter_ids[l]).collect();
            f.value_of(&wb.basis[indexer.index_of(&full)].mat)
        })
        .collect();
    let marginal = project_even_density(&marginal_density(f, space, 1, tol)?, factor)?;

    let mut overall: Option<(f64, Vec<f64>, Vec<ComplexMatrix>)> = None;
    'sweep: for k in 1..=config.max_components {
        for restart in 0..config.restarts.max(1) {
            let mut rng =
                ChaCha8Rng::seed_from_u64(config.seed ^ (k as u64) << 32 ^ restart as u64);
            let d = factor.dim;
            let init: Vec<ComplexMatrix> = (0..k)
                .map(|_| {
                    // marginal plus a seeded even hermitian perturbation
                    let eps = if restart == 0 { 0.2 } else { 0.45 };
                    let noise = ComplexMatrix::from_fn(d, d, |_, _| {
                        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                    });
                    let perturbed = marginal.add(&noise.scale(Complex64::new(eps, 0.0)))?;
                    project_even_density(&perturbed, factor)
                })
                .collect::<Result<_>>()?;
            let (resid, weights, comps) =
                solve_once(&target, &ew, factor, k, init, config)?;
            let better = overall.as_ref().map_or(true, |(b, _, _)| resid < *b);
            if better {
                overall = Some((resid, weights, comps));
            }
            if resid <= config.residual_target * 0.1 {
                break 'sweep;
            }
        }
        if let Some((r, _, _)) = &overall {
            if *r <= config.residual_target {
                break 'sweep;
            }
        }
    }
    let (_, weights, comps) = overall.ok_or_else(|| Error::Numerical("no solver run".into()))?;
    // prune negligible components, renormalize, and package
    let kept: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 1e-6).collect();
    let mut w: Vec<f64> = kept.iter().map(|&i| weights[i]).collect();
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    let components: Vec<StateFunctional> = kept
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            StateFunctional::on_full(factor, format!("component:{pos}"), comps[i].clone(), tol)
        })
        .collect::<Result<_>>()?;
    let model = MixtureModel::new(w, components, n)?;
    let full_residual = residual(f, &model, tol)?;
    Ok((model, full_residual))
}
