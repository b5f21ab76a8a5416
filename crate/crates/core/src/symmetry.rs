//! Finite permutation symmetry of site-product algebras.
//!
//! The finite permutation group acts on a site-product algebra by permuting
//! sites with Koszul signs: a product of homogeneous single-site letters maps
//! to the reordered product, picking up `-1` for every inverted pair of odd
//! letters. This module implements that action on elements and on states,
//! the unitaries implementing it on GNS spaces, group (Cesàro) averages,
//! the block-shift permutations, symmetric-state predicates, the decay of
//! odd operators under compression by the invariant projector, clustering
//! and factorization tests, and the fixed-point scan across levels.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fermi::{self, ProductSpace};
use crate::graded::{Grade, GradedOperator, GradedSpace};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};
use crate::states::{self, GnsData, StateFunctional};

/// Largest level for exact enumeration of the permutation group (`8! = 40320`).
pub const MAX_EXACT_LEVEL: usize = 8;

/// Cap on word-basis sizes handled by the index machinery.
const MAX_WORD_COUNT: usize = 1 << 20;

/// Hard cap on power-iteration sweeps when estimating compressed norms.
const MAX_POWER_ITERS: usize = 600;

// ---------------------------------------------------------------------------
// permutations
// ---------------------------------------------------------------------------

/// A permutation of `{1..m}` in one-line form: `images[k-1]` is the image of
/// `k`. Sites beyond `m` are fixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Permutation {
    images: Vec<usize>,
}

impl Permutation {
    /// Validates bijectivity of the one-line form.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let m = images.len();
        let mut seen = vec![false; m];
        for &v in &images {
            if v == 0 || v > m || seen[v - 1] {
                return Err(Error::InvalidSpec(format!(
                    "image list {images:?} is not a permutation of 1..={m}"
                )));
            }
            seen[v - 1] = true;
        }
        Ok(Self { images })
    }

    pub fn identity(m: usize) -> Self {
        Self {
            images: (1..=m).collect(),
        }
    }

    /// The transposition `(i j)` on `{1..m}`.
    pub fn transposition(m: usize, i: usize, j: usize) -> Result<Self> {
        if i == 0 || j == 0 || i > m || j > m {
            return Err(Error::InvalidSpec(format!(
                "transposition ({i} {j}) does not fit in 1..={m}"
            )));
        }
        let mut images: Vec<usize> = (1..=m).collect();
        images.swap(i - 1, j - 1);
        Ok(Self { images })
    }

    /// Length of the one-line form.
    pub fn degree(&self) -> usize {
        self.images.len()
    }

    /// Image of a site; sites beyond the degree are fixed.
    pub fn apply(&self, k: usize) -> usize {
        if k >= 1 && k <= self.images.len() {
            self.images[k - 1]
        } else {
            k
        }
    }

    /// Composition `self . other` (apply `other` first).
    pub fn compose(&self, other: &Self) -> Self {
        let m = self.degree().max(other.degree());
        Self {
            images: (1..=m).map(|k| self.apply(other.apply(k))).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        let mut images = vec![0usize; self.degree()];
        for (k, &v) in self.images.iter().enumerate() {
            images[v - 1] = k + 1;
        }
        Self { images }
    }

    /// `+1` for even permutations, `-1` for odd ones.
    pub fn sign(&self) -> f64 {
        let mut inversions = 0usize;
        for i in 0..self.images.len() {
            for j in i + 1..self.images.len() {
                if self.images[i] > self.images[j] {
                    inversions += 1;
                }
            }
        }
        if inversions % 2 == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// True when every site in `range+1..` is fixed.
    pub fn fixes_beyond(&self, range: usize) -> bool {
        (range + 1..=self.degree()).all(|k| self.apply(k) == k)
    }

    /// All `m!` permutations of `{1..m}` (Heap's algorithm).
    pub fn all(m: usize) -> Result<Vec<Self>> {
        if m > MAX_EXACT_LEVEL {
            return Err(Error::SizeLimit(format!(
                "exact enumeration of {m}! permutations exceeds the cap {MAX_EXACT_LEVEL}!"
            )));
        }
        let mut items: Vec<usize> = (1..=m).collect();
        let mut out = vec![Self {
            images: items.clone(),
        }];
        let mut c = vec![0usize; m];
        let mut i = 0;
        while i < m {
            if c[i] < i {
                if i % 2 == 0 {
                    items.swap(0, i);
                } else {
                    items.swap(c[i], i);
                }
                out.push(Self {
                    images: items.clone(),
                });
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        Ok(out)
    }

    /// A uniformly random permutation of `{1..m}` (Fisher-Yates).
    pub fn random(m: usize, rng: &mut impl Rng) -> Self {
        let mut images: Vec<usize> = (1..=m).collect();
        for i in (1..m).rev() {
            let j = rng.gen_range(0..=i);
            images.swap(i, j);
        }
        Self { images }
    }
}

impl std::fmt::Display for Permutation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, v) in self.images.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

/// Block-shift permutation on `{1..2^n}`: the first `2^(n-1)` sites swap with
/// the next `2^(n-1)`, everything beyond is fixed.
pub fn sigma_shift(n: usize) -> Result<Permutation> {
    if n == 0 {
        return Err(Error::InvalidSpec("block shift needs level n >= 1".into()));
    }
    if n > 20 {
        return Err(Error::SizeLimit(format!(
            "block shift at level {n} would span 2^{n} sites"
        )));
    }
    let half = 1usize << (n - 1);
    let images = (1..=2 * half)
        .map(|k| if k <= half { k + half } else { k - half })
        .collect();
    Ok(Permutation { images })
}

// ---------------------------------------------------------------------------
// the signed action on word bases
// ---------------------------------------------------------------------------

/// Index arithmetic for the ordered word basis of a site-product algebra:
/// one homogeneous unit letter per site, enumerated with the last site
/// fastest. Holds letter counts and grades only — no matrices — so it stays
/// cheap even when the word count is large.
#[derive(Debug, Clone)]
pub struct WordIndexer {
    letters_per_site: Vec<usize>,
    letter_grades: Vec<Vec<Grade>>,
    len: usize,
}

impl WordIndexer {
    pub fn new(space: &ProductSpace, eq_tol: f64) -> Result<Self> {
        let mut letters_per_site = Vec::with_capacity(space.n_sites());
        let mut letter_grades = Vec::with_capacity(space.n_sites());
        let mut len = 1usize;
        for f in &space.factors {
            let units = f.homogeneous_unit_basis(eq_tol)?;
            letters_per_site.push(units.len());
            letter_grades.push(units.iter().map(|u| u.grade).collect());
            len = len.saturating_mul(units.len());
        }
        if len > MAX_WORD_COUNT {
            return Err(Error::SizeLimit(format!(
                "word basis of {len} elements exceeds the cap {MAX_WORD_COUNT}"
            )));
        }
        Ok(Self {
            letters_per_site,
            letter_grades,
            len,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_sites(&self) -> usize {
        self.letters_per_site.len()
    }

    /// Per-site letter choices of a word index (last site fastest).
    pub fn letters_of(&self, mut idx: usize) -> Vec<usize> {
        let n = self.n_sites();
        let mut letters = vec![0usize; n];
        for j in (0..n).rev() {
            letters[j] = idx % self.letters_per_site[j];
            idx /= self.letters_per_site[j];
        }
        letters
    }

    pub fn index_of(&self, letters: &[usize]) -> usize {
        let mut idx = 0usize;
        for (j, &l) in letters.iter().enumerate() {
            idx = idx * self.letters_per_site[j] + l;
        }
        idx
    }

    /// Total grade of a word.
    pub fn word_grade(&self, idx: usize) -> Grade {
        let letters = self.letters_of(idx);
        let mut g = Grade::Even;
        for (j, &l) in letters.iter().enumerate() {
            g = g.product(self.letter_grades[j][l]);
        }
        g
    }

    /// Image of a basis word under the signed permutation action: the letter
    /// at site `j` moves to site `sigma(j)` and the reordered word picks up
    /// `-1` for every inverted pair of odd letters. Only meaningful when all
    /// factors share one letter alphabet or `sigma` respects the site dims;
    /// mixed dims are rejected.
    pub fn permuted_index(&self, idx: usize, sigma: &Permutation) -> Result<(usize, f64)> {
        let n = self.n_sites();
        if !sigma.fixes_beyond(n) {
            return Err(Error::SiteOutOfRange {
                site: (n + 1..=sigma.degree())
                    .find(|&k| sigma.apply(k) != k)
                    .unwrap_or(n + 1),
                sites: n,
            });
        }
        let letters = self.letters_of(idx);
        let mut new_letters = vec![0usize; n];
        for (j, &l) in letters.iter().enumerate() {
            let target = sigma.apply(j + 1);
            if self.letters_per_site[target - 1] != self.letters_per_site[j] {
                return Err(Error::DimensionMismatch(format!(
                    "site {} and its image {} have different letter counts",
                    j + 1,
                    target
                )));
            }
            new_letters[target - 1] = l;
        }
        let mut inversions = 0usize;
        for i in 0..n {
            if !self.letter_grades[i][letters[i]].is_odd() {
                continue;
            }
            for j in i + 1..n {
                if self.letter_grades[j][letters[j]].is_odd()
                    && sigma.apply(i + 1) > sigma.apply(j + 1)
                {
                    inversions += 1;
                }
            }
        }
        let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
        Ok((self.index_of(&new_letters), sign))
    }
}

/// The ordered word basis of the full site-product algebra, with matrices.
#[derive(Debug, Clone)]
pub struct WordBasis {
    pub space: ProductSpace,
    pub basis: Vec<GradedOperator>,
    indexer: WordIndexer,
}

impl WordBasis {
    pub fn new(space: &ProductSpace, eq_tol: f64) -> Result<Self> {
        let sites: Vec<usize> = (1..=space.n_sites()).collect();
        let la = fermi::local_algebra(&sites, space, eq_tol)?;
        let indexer = WordIndexer::new(space, eq_tol)?;
        debug_assert_eq!(la.basis.len(), indexer.len());
        Ok(Self {
            space: space.clone(),
            basis: la.basis,
            indexer,
        })
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn indexer(&self) -> &WordIndexer {
        &self.indexer
    }

    /// Coefficients of `x` over the word basis (it spans the full matrix
    /// algebra, so every operator of the right size expands).
    pub fn expand(&self, x: &ComplexMatrix, rank_tol: f64) -> Result<Vec<Complex64>> {
        let flats: Vec<Vec<Complex64>> = self.basis.iter().map(|b| b.mat.flatten()).collect();
        let (coeff, residual) = linalg::lstsq(&flats, &x.flatten(), rank_tol)?;
        let scale = x.fro_norm().max(1.0);
        if residual > 1e-8 * scale {
            return Err(Error::NotHomogeneous(format!(
                "element does not expand over the homogeneous site-product basis \
                 (residual {residual:.3e})"
            )));
        }
        Ok(coeff)
    }

    pub fn assemble(&self, coeff: &[Complex64]) -> Result<ComplexMatrix> {
        if coeff.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for {} basis words",
                coeff.len(),
                self.len()
            )));
        }
        let dim = self.space.dim();
        let mut out = ComplexMatrix::zeros(dim, dim);
        for (c, b) in coeff.iter().zip(&self.basis) {
            if c.norm_sqr() != 0.0 {
                out = out.add(&b.mat.scale(*c))?;
            }
        }
        Ok(out)
    }
}

/// Apply the signed permutation automorphism to an element of the full
/// site-product algebra: expand over the ordered word basis, move each word,
/// and reassemble.
pub fn permute_element(
    sigma: &Permutation,
    x: &ComplexMatrix,
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<ComplexMatrix> {
    let wb = WordBasis::new(space, tol.eq_tol)?;
    let coeff = wb.expand(x, tol.rank_tol)?;
    let mut out = vec![Complex64::new(0.0, 0.0); wb.len()];
    for (idx, c) in coeff.iter().enumerate() {
        if c.norm_sqr() == 0.0 {
            continue;
        }
        let (p, s) = wb.indexer().permuted_index(idx, sigma)?;
        out[p] += Complex64::new(s, 0.0) * c;
    }
    wb.assemble(&out)
}

/// Move a localized word (letters at explicit sites) to its image sites,
/// returning the ascending-sorted word and the Koszul sign of the reorder.
pub fn permute_word(
    word: &[(usize, GradedOperator)],
    sigma: &Permutation,
    space: &ProductSpace,
) -> Result<(Vec<(usize, GradedOperator)>, f64)> {
    let mut seen = vec![false; space.n_sites()];
    for (site, _) in word {
        space.check_site(*site)?;
        if seen[*site - 1] {
            return Err(Error::OverlappingSupports(format!(
                "word has two letters at site {site}"
            )));
        }
        seen[*site - 1] = true;
    }
    let mut imaged: Vec<(usize, GradedOperator)> = Vec::with_capacity(word.len());
    for (site, letter) in word {
        let target = sigma.apply(*site);
        if target > space.n_sites() {
            return Err(Error::SiteOutOfRange {
                site: target,
                sites: space.n_sites(),
            });
        }
        imaged.push((target, letter.clone()));
    }
    // Koszul sign: inversions of the image-site sequence among odd letters.
    let mut inversions = 0usize;
    for i in 0..imaged.len() {
        if !imaged[i].1.grade.is_odd() {
            continue;
        }
        for j in i + 1..imaged.len() {
            if imaged[j].1.grade.is_odd() && imaged[i].0 > imaged[j].0 {
                inversions += 1;
            }
        }
    }
    imaged.sort_by_key(|(s, _)| *s);
    let sign = if inversions % 2 == 0 { 1.0 } else { -1.0 };
    Ok((imaged, sign))
}

// ---------------------------------------------------------------------------
// states under the action
// ---------------------------------------------------------------------------

/// Values of a functional on the ordered word basis. The functional must be
/// defined on the full site-product algebra.
fn word_values(f: &StateFunctional, wb: &WordBasis) -> Result<Vec<Complex64>> {
    if f.algebra.span_dim() != wb.len() {
        return Err(Error::InvalidSpec(format!(
            "state spans {} of {} word-basis dimensions; it must be defined on \
             the full site-product algebra",
            f.algebra.span_dim(),
            wb.len()
        )));
    }
    Ok(wb.basis.iter().map(|b| f.value_of(&b.mat)).collect())
}

/// Values of `omega . alpha_sigma` given the values of `omega` on the word
/// basis: `(omega . alpha_sigma)(w) = sign(w, sigma) * omega(image of w)`.
fn composed_values(
    values: &[Complex64],
    indexer: &WordIndexer,
    sigma: &Permutation,
) -> Result<Vec<Complex64>> {
    let mut out = vec![Complex64::new(0.0, 0.0); values.len()];
    for (idx, slot) in out.iter_mut().enumerate() {
        let (p, s) = indexer.permuted_index(idx, sigma)?;
        *slot = Complex64::new(s, 0.0) * values[p];
    }
    Ok(out)
}

/// Largest deviation of `omega` from invariance under the transpositions
/// generating the permutation group of the sites.
pub fn symmetry_defect(
    f: &StateFunctional,
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let wb = WordBasis::new(space, tol.eq_tol)?;
    let values = word_values(f, &wb)?;
    let n = space.n_sites();
    let mut defect: f64 = 0.0;
    for j in 1..n {
        let tau = Permutation::transposition(n, j, j + 1)?;
        let moved = composed_values(&values, wb.indexer(), &tau)?;
        for (a, b) in moved.iter().zip(&values) {
            defect = defect.max((a - b).norm());
        }
    }
    Ok(defect)
}

/// Whether `omega` is invariant under every site permutation, checked on the
/// generating transpositions.
pub fn is_symmetric(f: &StateFunctional, space: &ProductSpace, tol: f64) -> Result<bool> {
    let cfg = ToleranceConfig::default();
    Ok(symmetry_defect(f, space, &cfg)? <= tol)
}

/// Largest modulus of `omega` on odd homogeneous basis words.
///
/// Vanishes exactly for even states (each odd word contains an odd letter).
/// For a merely symmetric state at a finite truncation this need NOT vanish:
/// the vanishing of symmetric states on odd elements is an infinite-volume
/// statement, and the surviving value at level `n` is only bounded by the
/// decaying norm of the averaged odd element (see [`odd_compression_decay`]).
pub fn check_even_vanishing(
    f: &StateFunctional,
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<f64> {
    let wb = WordBasis::new(space, tol.eq_tol)?;
    let values = word_values(f, &wb)?;
    let mut max_odd: f64 = 0.0;
    for (idx, v) in values.iter().enumerate() {
        if wb.indexer().word_grade(idx).is_odd() {
            max_odd = max_odd.max(v.norm());
        }
    }
    Ok(max_odd)
}

/// Group average `(1/n!) sum_sigma omega . alpha_sigma` over all site
/// permutations. The output is expressed on the ordered word basis and is
/// invariant under every `alpha_sigma` by construction.
pub fn symmetrize_state(
    f: &StateFunctional,
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<StateFunctional> {
    let n = space.n_sites();
    if n > MAX_EXACT_LEVEL {
        return Err(Error::SizeLimit(format!(
            "exact symmetrization over {n}! permutations exceeds the cap \
             {MAX_EXACT_LEVEL}!"
        )));
    }
    let wb = WordBasis::new(space, tol.eq_tol)?;
    let values = word_values(f, &wb)?;
    let perms = Permutation::all(n)?;
    let mut acc = vec![Complex64::new(0.0, 0.0); values.len()];
    for sigma in &perms {
        let moved = composed_values(&values, wb.indexer(), sigma)?;
        for (a, m) in acc.iter_mut().zip(&moved) {
            *a += m;
        }
    }
    let scale = Complex64::new(1.0 / perms.len() as f64, 0.0);
    let averaged: Vec<Complex64> = acc.into_iter().map(|v| v * scale).collect();
    let algebra = crate::vonneumann::ConcreteAlgebra::from_local_algebra(
        &fermi::local_algebra(&(1..=n).collect::<Vec<_>>(), space, tol.eq_tol)?,
        space,
        tol.eq_tol,
    )?;
    StateFunctional::from_values(algebra, format!("sym({})", f.basis_ref), averaged)
}

// ---------------------------------------------------------------------------
// implementing unitaries and group averages
// ---------------------------------------------------------------------------

/// The unitary on the GNS space of a symmetric state that implements a site
/// permutation: `U pi(x) xi = pi(alpha_sigma(x)) xi`, `U xi = xi`.
///
/// The state must be expressed on the ordered word basis (the output of
/// [`states::product_functional`] or [`symmetrize_state`]), since the action
/// permutes that basis with signs; and it must be invariant under the
/// permutation, or the formula does not define an isometry.
pub fn implementing_unitary(
    sigma: &Permutation,
    f: &StateFunctional,
    g: &GnsData,
    space: &ProductSpace,
    tol: &ToleranceConfig,
) -> Result<ComplexMatrix> {
    let indexer = WordIndexer::new(space, tol.eq_tol)?;
    let k = indexer.len();
    if f.algebra.span_dim() != k || f.values.len() != k {
        return Err(Error::InvalidSpec(format!(
            "state spans {} of {} word-basis dimensions; express it on the \
             ordered word basis first",
            f.algebra.span_dim(),
            k
        )));
    }
    // invariance of the state under this permutation
    let moved = composed_values(&f.values, &indexer, sigma)?;
    let defect = moved
        .iter()
        .zip(&f.values)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0f64, f64::max);
    let scale = f.values.iter().map(|v| v.norm()).fold(1.0f64, f64::max);
    if defect > tol.eq_tol.max(1e-12) * scale * 100.0 {
        return Err(Error::NotInvariant { defect });
    }
    // Columns of T = Lambda^{1/2} V_r^H are the GNS coordinates of the basis
    // classes; the action sends class beta to sign * class p(beta), so
    // U T = T D_sigma and U = T D_sigma proj^H (proj^H is T's right inverse).
    let r = g.dim;
    let mut td = ComplexMatrix::zeros(r, k);
    for beta in 0..k {
        let (p, s) = indexer.permuted_index(beta, sigma)?;
        for i in 0..r {
            td[(i, beta)] = Complex64::new(s * g.lam[i], 0.0) * g.proj[(i, p)];
        }
    }
    let u = td.matmul(&g.proj.adjoint())?;
    let unit_defect = u
        .adjoint()
        .matmul(&u)?
        .sub(&ComplexMatrix::identity(r))?
        .max_abs();
    if unit_defect > 1e-7 {
        return Err(Error::NotInvariant {
            defect: unit_defect,
        });
    }
    Ok(u)
}

/// Averaging mode for [`cesaro_average`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum CesaroMode {
    /// Mean over all `n!` permutations.
    Exact,
    /// Mean over `samples` uniform permutations drawn from the given seed.
    Sampled { samples: usize, seed: u64 },
}

/// Uniform average of a matrix-valued function over the permutations of
/// `{1..n}` — the finite-level stand-in for the invariant mean.
pub fn cesaro_average<F>(mut f: F, n: usize, mode: CesaroMode) -> Result<ComplexMatrix>
where
    F: FnMut(&Permutation) -> Result<ComplexMatrix>,
{
    let mut acc: Option<ComplexMatrix> = None;
    let mut count = 0usize;
    let feed = |m: ComplexMatrix, acc: &mut Option<ComplexMatrix>| -> Result<()> {
        *acc = Some(match acc.take() {
            Some(a) => a.add(&m)?,
            None => m,
        });
        Ok(())
    };
    match mode {
        CesaroMode::Exact => {
            for sigma in Permutation::all(n)? {
                feed(f(&sigma)?, &mut acc)?;
                count += 1;
            }
        }
        CesaroMode::Sampled { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidSpec("sampled average needs samples >= 1".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..samples {
                let sigma = Permutation::random(n, &mut rng);
                feed(f(&sigma)?, &mut acc)?;
                count += 1;
            }
        }
    }
    let total = acc.ok_or_else(|| Error::Numerical("empty group average".into()))?;
    Ok(total.scale(Complex64::new(1.0 / count as f64, 0.0)))
}

// ---------------------------------------------------------------------------
// odd-compression decay
// ---------------------------------------------------------------------------

/// Decay table for a localized operator compressed by the invariant
/// projector `E` at increasing levels: `norms[i] = |E pi(a) E|` at level
/// `n_values[i]`, together with the anticommutator series
/// `|{E pi(a) E, (E pi(a) E)*}|` that carries the counting mechanism
/// (averaging an odd localized element leaves only the vanishing fraction of
/// permutations that keep its support in place).
///
/// For a single odd letter the norm series decays like `n^(-1/2)` and the
/// anticommutator series like `n^(-1)`; products of several distinct odd
/// letters average to zero outright (`all_zero`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CesaroReport {
    /// Levels, ascending.
    pub n_values: Vec<usize>,
    /// `|E pi(a) E|` per level.
    pub norms: Vec<f64>,
    /// `|{E pi(a) E, (E pi(a) E)*}|` per level.
    pub anticommutator_norms: Vec<f64>,
    /// Log-log slope of the norm series, when a fit is possible.
    pub slope: Option<f64>,
    /// Log-log slope of the anticommutator series.
    pub anticommutator_slope: Option<f64>,
    /// Last computed norm — the finite-level proxy for the limit.
    pub limit_estimate: f64,
    /// Every norm vanished to machine precision.
    pub all_zero: bool,
    /// False when the operator is even, in which case no decay is forced.
    pub applicable: bool,
}

fn loglog_slope(ns: &[usize], vals: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = ns
        .iter()
        .zip(vals)
        .filter(|(_, &v)| v > 1e-12)
        .map(|(&n, &v)| ((n as f64).ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// Dense-free action on `(C^r)^(x n)` with graded coordinates: single-axis
/// operators, signed axis transpositions, and the invariant-projector
/// (symmetrizer) recursion.
struct TensorAction {
    r: usize,
    n: usize,
    odd: Vec<bool>,
}

impl TensorAction {
    fn dim(&self) -> usize {
        self.r.pow(self.n as u32)
    }

    fn stride(&self, axis: usize) -> usize {
        self.r.pow((self.n - 1 - axis) as u32)
    }

    /// Apply a matrix on one tensor axis (0-based; axis 0 most significant).
    fn apply_axis(&self, m: &ComplexMatrix, axis: usize, v: &[Complex64]) -> Vec<Complex64> {
        let r = self.r;
        let stride = self.stride(axis);
        let block = stride * r;
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        let mut base_block = 0usize;
        while base_block < v.len() {
            for off in 0..stride {
                let base = base_block + off;
                for i in 0..r {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for j in 0..r {
                        let mij = m[(i, j)];
                        if mij.norm_sqr() != 0.0 {
                            acc += mij * v[base + j * stride];
                        }
                    }
                    out[base + i * stride] = acc;
                }
            }
            base_block += block;
        }
        out
    }

    /// Signed swap of two tensor axes `k < l`: contents trade places and the
    /// result picks up the graded transposition sign
    /// `(-1)^(p_k p_l + (p_k + p_l) * sum of parities strictly between)`.
    fn transpose_axes(&self, k: usize, l: usize, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert!(k < l && l < self.n);
        let r = self.r;
        let sk = self.stride(k);
        let sl = self.stride(l);
        let mid_count = l - k - 1;
        let mid_radix = r.pow(mid_count as u32);
        // parity of the odd-coordinate count of the digits strictly between
        let mut mid_parity = vec![false; mid_radix];
        for (t, slot) in mid_parity.iter_mut().enumerate() {
            let mut x = t;
            let mut p = false;
            for _ in 0..mid_count {
                if self.odd[x % r] {
                    p = !p;
                }
                x /= r;
            }
            *slot = p;
        }
        let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
        for (idx, val) in v.iter().enumerate() {
            let dk = (idx / sk) % r;
            let dl = (idx / sl) % r;
            let target = idx + dl * sk + dk * sl - dk * sk - dl * sl;
            let pk = self.odd[dk];
            let pl = self.odd[dl];
            let mid = mid_parity[(idx / (sl * r)) % mid_radix];
            let flip = (pk && pl) ^ ((pk ^ pl) && mid);
            out[target] = if flip { -*val } else { *val };
        }
        out
    }

    /// Apply the invariant projector `E_n = (1/n!) sum U_sigma` through the
    /// coset recursion `E_m = (1/m) sum_k U_(k m) E_(m-1)`.
    fn symmetrize(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut w = v.to_vec();
        for level in 2..=self.n {
            let mut acc = w.clone(); // the k = level term is the identity
            for k in 1..level {
                let t = self.transpose_axes(k - 1, level - 1, &w);
                for (a, b) in acc.iter_mut().zip(&t) {
                    *a += b;
                }
            }
            let s = Complex64::new(1.0 / level as f64, 0.0);
            for a in acc.iter_mut() {
                *a *= s;
            }
            w = acc;
        }
        w
    }

    fn apply_factors(&self, factors: &[(usize, ComplexMatrix)], v: &[Complex64]) -> Vec<Complex64> {
        let mut w = v.to_vec();
        for (axis, m) in factors {
            w = self.apply_axis(m, *axis, &w);
        }
        w
    }
}

fn vec_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest eigenvalue of a positive semidefinite operator given as a closure,
/// by seeded power iteration with a Rayleigh-quotient stopping rule.
fn top_eigenvalue_psd(
    mut apply: impl FnMut(&[Complex64]) -> Vec<Complex64>,
    dim: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v: Vec<Complex64> = (0..dim)
        .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
        .collect();
    let nv = vec_norm(&v);
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut lam_prev = f64::INFINITY;
    for it in 0..MAX_POWER_ITERS {
        let w = apply(&v);
        let lam: f64 = v.iter().zip(&w).map(|(a, b)| (a.conj() * b).re).sum();
        let nw = vec_norm(&w);
        if nw < 1e-14 {
            return 0.0;
        }
        for (slot, x) in v.iter_mut().zip(&w) {
            *slot = x / nw;
        }
        if it > 4 && (lam - lam_prev).abs() <= 1e-12 + 1e-9 * lam.abs() {
            return lam.max(0.0);
        }
        lam_prev = lam;
    }
    lam_prev.max(0.0)
}

/// Norm decay of a localized word under compression by the invariant
/// projector, across levels `n_min..=n_max` of the product state
/// `x^n(factor_state)`.
///
/// The word is given as homogeneous letters at explicit sites of the factor
/// space. The level-`n` GNS space of the product state is assembled as the
/// graded tensor power of the factor's GNS space, the projector is applied
/// through the coset recursion, and norms come from seeded power iteration —
/// nothing of size `(dim GNS)^2` is ever materialized.
pub fn odd_compression_decay(
    word: &[(usize, GradedOperator)],
    factor_state: &StateFunctional,
    n_min: usize,
    n_max: usize,
    tol: &ToleranceConfig,
) -> Result<CesaroReport> {
    if word.is_empty() {
        return Err(Error::InvalidSpec("empty word".into()));
    }
    let max_site = word.iter().map(|(s, _)| *s).max().unwrap_or(1);
    if n_min < max_site || n_min == 0 || n_max < n_min {
        return Err(Error::InvalidSpec(format!(
            "level range {n_min}..={n_max} does not contain the word support \
             (max site {max_site})"
        )));
    }
    if n_max > MAX_EXACT_LEVEL {
        return Err(Error::SizeLimit(format!(
            "exact invariant projector beyond level {MAX_EXACT_LEVEL} \
             (requested {n_max})"
        )));
    }
    for pair in word.windows(2) {
        if pair[0].0 >= pair[1].0 {
            return Err(Error::InvalidSpec(
                "word letters must be at strictly ascending sites".into(),
            ));
        }
    }
    // GNS of the factor state, rotated to an eigenbasis of its grading
    // unitary so that coordinates carry definite parity.
    let g = states::gns_with_grading(factor_state, tol)?;
    let v_grading = g
        .grading_unitary
        .clone()
        .ok_or_else(|| Error::Numerical("missing grading unitary".into()))?;
    let (vals, w) = linalg::hermitian_eig(&v_grading, 1e-7)?;
    let mut odd = Vec::with_capacity(vals.len());
    for &x in &vals {
        if (x.abs() - 1.0).abs() > 1e-6 {
            return Err(Error::Numerical(format!(
                "grading unitary eigenvalue {x:.6} is not a sign"
            )));
        }
        odd.push(x < 0.0);
    }
    let r = g.dim;
    let wh = w.adjoint();
    // letters represented on the rotated factor GNS space
    let mut letter_reps: Vec<(usize, ComplexMatrix, bool)> = Vec::with_capacity(word.len());
    let mut total_grade = Grade::Even;
    for (site, letter) in word {
        let rep = g.represent(factor_state, &letter.mat, tol.rank_tol)?;
        let rot = wh.matmul(&rep)?.matmul(&w)?;
        letter_reps.push((*site, rot, letter.grade.is_odd()));
        total_grade = total_grade.product(letter.grade);
    }
    let applicable = total_grade.is_odd();
    let theta = ComplexMatrix::from_fn(r, r, |i, j| {
        if i == j {
            Complex64::new(if odd[i] { -1.0 } else { 1.0 }, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    });

    let mut n_values = Vec::new();
    let mut norms = Vec::new();
    let mut anti_norms = Vec::new();
    for n in n_min..=n_max {
        let act = TensorAction {
            r,
            n,
            odd: odd.clone(),
        };
        if act.dim() > MAX_WORD_COUNT {
            return Err(Error::SizeLimit(format!(
                "GNS tensor power of dimension {} exceeds the cap {MAX_WORD_COUNT}",
                act.dim()
            )));
        }
        // Per-axis factors of the embedded word: at site k the factor is
        // (letter or I) . Theta^(odd letters above k); identity factors are
        // skipped.
        let mut factors: Vec<(usize, ComplexMatrix)> = Vec::new();
        for site in 1..=n {
            let dressing = letter_reps
                .iter()
                .filter(|(s, _, is_odd)| *s > site && *is_odd)
                .count();
            let letter = letter_reps.iter().find(|(s, _, _)| *s == site);
            let mat = match (letter, dressing % 2 == 1) {
                (Some((_, m, _)), true) => Some(m.matmul(&theta)?),
                (Some((_, m, _)), false) => Some(m.clone()),
                (None, true) => Some(theta.clone()),
                (None, false) => None,
            };
            if let Some(m) = mat {
                factors.push((site - 1, m));
            }
        }
        let adj_factors: Vec<(usize, ComplexMatrix)> = factors
            .iter()
            .map(|(a, m)| (*a, m.adjoint()))
            .collect();
        let dim = act.dim();
        // |B| with B = E pi(a) E, via the top eigenvalue of B^H B; E^2 = E
        // collapses the middle pair.
        let lam = top_eigenvalue_psd(
            |v| {
                let t = act.symmetrize(v);
                let t = act.apply_factors(&factors, &t);
                let t = act.symmetrize(&t);
                let t = act.apply_factors(&adj_factors, &t);
                act.symmetrize(&t)
            },
            dim,
            0xC0FFEE + n as u64,
        );
        let norm = lam.max(0.0).sqrt();
        // |{B, B^H}| = |B B^H + B^H B|, positive semidefinite.
        let lam_anti = top_eigenvalue_psd(
            |v| {
                let u = act.symmetrize(v);
                let a = {
                    let t = act.apply_factors(&adj_factors, &u);
                    let t = act.symmetrize(&t);
                    let t = act.apply_factors(&factors, &t);
                    act.symmetrize(&t)
                };
                let b = {
                    let t = act.apply_factors(&factors, &u);
                    let t = act.symmetrize(&t);
                    let t = act.apply_factors(&adj_factors, &t);
                    act.symmetrize(&t)
                };
                a.iter().zip(&b).map(|(x, y)| x + y).collect()
            },
            dim,
            0xFEED + n as u64,
        );
        n_values.push(n);
        norms.push(norm);
        anti_norms.push(lam_anti.max(0.0));
    }
    let all_zero = norms.iter().all(|&v| v <= 1e-10);
    let slope = loglog_slope(&n_values, &norms);
    let anticommutator_slope = loglog_slope(&n_values, &anti_norms);
    let limit_estimate = norms.last().copied().unwrap_or(0.0);
    Ok(CesaroReport {
        n_values,
        norms,
        anticommutator_norms: anti_norms,
        slope,
        anticommutator_slope,
        limit_estimate,
        all_zero,
        applicable,
    })
}

// ---------------------------------------------------------------------------
// clustering and factorization
// ---------------------------------------------------------------------------

/// Per-shift clustering table: `defects[i] = |omega(alpha_(shift m)(a) b) -
/// omega(a) omega(b)|` for each feasible block-shift level `m`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClusteringReport {
    pub m_values: Vec<usize>,
    pub defects: Vec<f64>,
    /// All tabulated defects within tolerance.
    pub verdict: bool,
}

/// Tabulate the clustering defect of two localized words under the
/// block-shift permutations, for every shift level whose image still fits
/// inside the truncation.
pub fn clustering_check(
    f: &StateFunctional,
    space: &ProductSpace,
    a_word: &[(usize, GradedOperator)],
    b_word: &[(usize, GradedOperator)],
    tol: &ToleranceConfig,
) -> Result<ClusteringReport> {
    let n = space.n_sites();
    let embed = |word: &[(usize, GradedOperator)]| -> Result<ComplexMatrix> {
        if word.is_empty() {
            return Ok(ComplexMatrix::identity(space.dim()));
        }
        let refs: Vec<(usize, &GradedOperator)> = word.iter().map(|(s, b)| (*s, b)).collect();
        Ok(fermi::embed_word(&refs, space)?.mat)
    };
    let mat_a = embed(a_word)?;
    let mat_b = embed(b_word)?;
    let va = f.value_of(&mat_a);
    let vb = f.value_of(&mat_b);
    let max_a_site = a_word.iter().map(|(s, _)| *s).max().unwrap_or(1);
    let mut m_values = Vec::new();
    let mut defects = Vec::new();
    for m in 1..=20usize {
        let shift = sigma_shift(m)?;
        let max_image = a_word
            .iter()
            .map(|(s, _)| shift.apply(*s))
            .max()
            .unwrap_or(shift.apply(1));
        if max_image > n {
            break;
        }
        let (moved, sign) = permute_word(a_word, &shift, space)?;
        let mat_moved = embed(&moved)?.scale(Complex64::new(sign, 0.0));
        let val = f.value_of(&mat_moved.matmul(&mat_b)?);
        m_values.push(m);
        defects.push((val - va * vb).norm());
    }
    if m_values.is_empty() {
        return Err(Error::SiteOutOfRange {
            site: sigma_shift(1)?.apply(max_a_site),
            sites: n,
        });
    }
    let threshold = tol.eq_tol.max(1e-12) * 100.0;
    let verdict = defects.iter().all(|&d| d <= threshold);
    Ok(ClusteringReport {
        m_values,
        defects,
        verdict,
    })
}

/// Factorization test across two disjoint site sets.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductTestReport {
    /// `max |omega(ab) - omega(a) omega(b)|` over homogeneous basis words
    /// `a` supported in the first set and `b` in the second.
    pub defect: f64,
    /// Number of word pairs inspected.
    pub pairs: usize,
    pub verdict: bool,
}

/// Maximal factorization defect of a state across two disjoint site sets —
/// the finite-level extremality probe: product states factorize exactly,
/// proper mixtures leave a gap.
pub fn product_test(
    f: &StateFunctional,
    space: &ProductSpace,
    sites_a: &[usize],
    sites_b: &[usize],
    tol: &ToleranceConfig,
) -> Result<ProductTestReport> {
    for s in sites_a {
        if sites_b.contains(s) {
            return Err(Error::OverlappingSupports(format!(
                "site {s} appears in both supports"
            )));
        }
    }
    let la = fermi::local_algebra(sites_a, space, tol.eq_tol)?;
    let lb = fermi::local_algebra(sites_b, space, tol.eq_tol)?;
    let mut defect: f64 = 0.0;
    let mut pairs = 0usize;
    for a in &la.basis {
        let va = f.value_of(&a.mat);
        for b in &lb.basis {
            let vb = f.value_of(&b.mat);
            let vab = f.value_of(&a.mat.matmul(&b.mat)?);
            defect = defect.max((vab - va * vb).norm());
            pairs += 1;
        }
    }
    let threshold = tol.eq_tol.max(1e-12) * 100.0;
    Ok(ProductTestReport {
        defect,
        pairs,
        verdict: defect <= threshold,
    })
}

// ---------------------------------------------------------------------------
// fixed points across levels
// ---------------------------------------------------------------------------

/// Result of [`fixed_point_scan`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub inner_level: usize,
    pub outer_level: usize,
    /// Dimension of `{x in A^(n), viewed inside A^(m) : alpha_sigma(x) = x
    /// for all sigma in P_m}`.
    pub dimension: usize,
}

/// Dimension of the level-`n` elements fixed by every permutation of the
/// larger level `m`. With headroom (`m > n`) only scalars survive; without
/// headroom the symmetric words do too.
pub fn fixed_point_scan(
    n: usize,
    m: usize,
    factor: &GradedSpace,
    tol: &ToleranceConfig,
) -> Result<FixedPointReport> {
    if n == 0 || n > m {
        return Err(Error::InvalidSpec(format!(
            "levels must satisfy 1 <= n <= m (got n={n}, m={m})"
        )));
    }
    if m > 7 {
        return Err(Error::SizeLimit(format!(
            "outer level {m} beyond the scan cap 7"
        )));
    }
    let space_m = ProductSpace::uniform(factor, m)?;
    let indexer = WordIndexer::new(&space_m, tol.eq_tol)?;
    let radix = factor.dim * factor.dim;
    let k_n = radix.pow(n as u32);
    let k_m = indexer.len();
    if m > 1 && (m - 1).saturating_mul(k_m).saturating_mul(k_n) > 8_000_000 {
        return Err(Error::SizeLimit(format!(
            "constraint matrix {} x {} is beyond the scan budget",
            (m - 1) * k_m,
            k_n
        )));
    }
    if m == 1 {
        // the trivial group fixes everything
        return Ok(FixedPointReport {
            inner_level: n,
            outer_level: m,
            dimension: k_n,
        });
    }
    // A level-n word embeds into level m as the sum over all diagonal-letter
    // completions at the extra sites (the diagonal letters sum to the
    // identity). Stack (P_tau - I) . embed over the adjacent transpositions.
    let diag_letters: Vec<usize> = (0..factor.dim).map(|a| a * factor.dim + a).collect();
    let completions = factor.dim.pow((m - n) as u32);
    let mut l = ComplexMatrix::zeros((m - 1) * k_m, k_n);
    let one = Complex64::new(1.0, 0.0);
    for col in 0..k_n {
        // decode the level-n word (last site fastest)
        let mut letters = vec![0usize; m];
        let mut rem = col;
        for j in (0..n).rev() {
            letters[j] = rem % radix;
            rem /= radix;
        }
        for comp in 0..completions {
            let mut c = comp;
            for j in (n..m).rev() {
                letters[j] = diag_letters[c % factor.dim];
                c /= factor.dim;
            }
            let widx = indexer.index_of(&letters);
            for t in 1..m {
                let tau = Permutation::transposition(m, t, t + 1)?;
                let (p, s) = indexer.permuted_index(widx, &tau)?;
                let row0 = (t - 1) * k_m;
                l[(row0 + p, col)] += Complex64::new(s, 0.0);
                l[(row0 + widx, col)] -= one;
            }
        }
    }
    let null = linalg::nullspace(&l, tol.rank_tol)?;
    Ok(FixedPointReport {
        inner_level: n,
        outer_level: m,
        dimension: null.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn unit(a: usize, b: usize) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| {
            if (i, j) == (a, b) {
                c(1.0, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    fn annihilator() -> GradedOperator {
        GradedOperator {
            mat: unit(0, 1),
            grade: Grade::Odd,
        }
    }

    fn even_letter(a: usize) -> GradedOperator {
        GradedOperator {
            mat: unit(a, a),
            grade: Grade::Even,
        }
    }

    fn tolcfg() -> ToleranceConfig {
        ToleranceConfig::default()
    }

    fn even_density(p: f64) -> ComplexMatrix {
        ComplexMatrix::from_fn(2, 2, |i, j| {
            if i == j {
                c(if i == 0 { p } else { 1.0 - p }, 0.0)
            } else {
                c(0.0, 0.0)
            }
        })
    }

    fn factor_state(p: f64) -> StateFunctional {
        StateFunctional::on_full(
            &GradedSpace::qubit(),
            format!("diag:{p}"),
            even_density(p),
            &tolcfg(),
        )
        .unwrap()
    }

    fn trace_state() -> StateFunctional {
        StateFunctional::normalized_trace(&GradedSpace::qubit(), &tolcfg()).unwrap()
    }

    fn product_state(ps: &[f64], space: &ProductSpace) -> StateFunctional {
        let states: Vec<StateFunctional> = ps.iter().map(|&p| factor_state(p)).collect();
        states::product_functional(&states, space, &tolcfg()).unwrap()
    }

    #[test]
    fn one_line_forms_are_validated() {
        assert!(Permutation::new(vec![2, 3, 1]).is_ok());
        assert!(Permutation::new(vec![1, 1, 3]).is_err());
        assert!(Permutation::new(vec![0, 2]).is_err());
        assert_eq!(Permutation::all(3).unwrap().len(), 6);
        let sigma = Permutation::new(vec![2, 3, 1]).unwrap();
        let tau = Permutation::transposition(3, 1, 2).unwrap();
        let st = sigma.compose(&tau);
        // (sigma . tau)(1) = sigma(2) = 3
        assert_eq!(st.apply(1), 3);
        assert_eq!(sigma.compose(&sigma.inverse()).images, vec![1, 2, 3]);
        assert_eq!(sigma.apply(7), 7, "sites beyond the degree are fixed");
        assert_abs_diff_eq!(tau.sign(), -1.0);
        assert_abs_diff_eq!(sigma.sign(), 1.0);
    }

    #[test]
    fn block_shift_swaps_the_leading_blocks() {
        let s1 = sigma_shift(1).unwrap();
        assert_eq!(s1.apply(1), 2);
        assert_eq!(s1.apply(2), 1);
        let s2 = sigma_shift(2).unwrap();
        assert_eq!(
            (1..=4).map(|k| s2.apply(k)).collect::<Vec<_>>(),
            vec![3, 4, 1, 2]
        );
        assert_eq!(s2.apply(5), 5);
    }

    #[test]
    fn identity_permutation_fixes_elements() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let word = [(1usize, annihilator()), (3usize, annihilator())];
        let refs: Vec<(usize, &GradedOperator)> = word.iter().map(|(s, b)| (*s, b)).collect();
        let x = fermi::embed_word(&refs, &space).unwrap().mat;
        let y = permute_element(&Permutation::identity(3), &x, &space, &tol).unwrap();
        assert!(x.approx_eq(&y, 1e-12));
    }

    #[test]
    fn transposing_two_odd_letters_flips_the_sign() {
        // alpha_(1 2)(a_1 a_2) = a_2 a_1 = -a_1 a_2: one odd inversion.
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let word = [(1usize, annihilator()), (2usize, annihilator())];
        let refs: Vec<(usize, &GradedOperator)> = word.iter().map(|(s, b)| (*s, b)).collect();
        let a12 = fermi::embed_word(&refs, &space).unwrap().mat;
        let swapped = permute_element(
            &Permutation::transposition(2, 1, 2).unwrap(),
            &a12,
            &space,
            &tol,
        )
        .unwrap();
        assert!(swapped.approx_eq(&a12.scale(c(-1.0, 0.0)), 1e-12));
    }

    #[test]
    fn even_letters_swap_without_a_sign() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let word = [(1usize, even_letter(0)), (2usize, even_letter(1))];
        let refs: Vec<(usize, &GradedOperator)> = word.iter().map(|(s, b)| (*s, b)).collect();
        let x = fermi::embed_word(&refs, &space).unwrap().mat;
        let swapped_word = [(1usize, even_letter(1)), (2usize, even_letter(0))];
        let refs2: Vec<(usize, &GradedOperator)> =
            swapped_word.iter().map(|(s, b)| (*s, b)).collect();
        let expect = fermi::embed_word(&refs2, &space).unwrap().mat;
        let got = permute_element(
            &Permutation::transposition(2, 1, 2).unwrap(),
            &x,
            &space,
            &tol,
        )
        .unwrap();
        assert!(got.approx_eq(&expect, 1e-12));
    }

    #[test]
    fn the_action_is_a_group_law_on_basis_words() {
        let space = ProductSpace::qubits(3).unwrap();
        let indexer = WordIndexer::new(&space, 1e-10).unwrap();
        let perms = Permutation::all(3).unwrap();
        for sigma in &perms {
            for tau in &perms {
                let st = sigma.compose(tau);
                for idx in 0..indexer.len() {
                    let (p1, s1) = indexer.permuted_index(idx, tau).unwrap();
                    let (p2, s2) = indexer.permuted_index(p1, sigma).unwrap();
                    let (p, s) = indexer.permuted_index(idx, &st).unwrap();
                    assert_eq!(p, p2);
                    assert_abs_diff_eq!(s, s1 * s2);
                }
            }
        }
    }

    #[test]
    fn the_action_is_a_star_automorphism() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let sigma = Permutation::new(vec![2, 3, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..4 {
            let dim = space.dim();
            let rand_mat = |rng: &mut ChaCha8Rng| {
                ComplexMatrix::from_fn(dim, dim, |_, _| {
                    c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
                })
            };
            let x = rand_mat(&mut rng);
            let y = rand_mat(&mut rng);
            let ax = permute_element(&sigma, &x, &space, &tol).unwrap();
            let ay = permute_element(&sigma, &y, &space, &tol).unwrap();
            let axy = permute_element(&sigma, &x.matmul(&y).unwrap(), &space, &tol).unwrap();
            assert!(
                axy.approx_eq(&ax.matmul(&ay).unwrap(), 1e-9),
                "multiplicativity"
            );
            let astar = permute_element(&sigma, &x.adjoint(), &space, &tol).unwrap();
            assert!(astar.approx_eq(&ax.adjoint(), 1e-9), "star-preservation");
        }
    }

    #[test]
    fn dropping_the_sign_breaks_multiplicativity() {
        // The unsigned site swap sends the word a_1 a_2 to itself (same letter
        // at both sites), but multiplicativity would demand
        // alpha(a_1) alpha(a_2) = a_2 a_1 = -a_1 a_2: off by a factor of -1.
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let wb = WordBasis::new(&space, tol.eq_tol).unwrap();
        let tau = Permutation::transposition(2, 1, 2).unwrap();
        let a1 = fermi::embed_site(&annihilator(), 1, &space).unwrap();
        let a2 = fermi::embed_site(&annihilator(), 2, &space).unwrap();
        let a12 = a1.matmul(&a2).unwrap();
        // unsigned action: move words, drop the Koszul sign
        let unsigned = |x: &ComplexMatrix| -> ComplexMatrix {
            let coeff = wb.expand(x, tol.rank_tol).unwrap();
            let mut out = vec![c(0.0, 0.0); wb.len()];
            for (idx, cf) in coeff.iter().enumerate() {
                let (p, _) = wb.indexer().permuted_index(idx, &tau).unwrap();
                out[p] += cf;
            }
            wb.assemble(&out).unwrap()
        };
        let lhs = unsigned(&a12);
        let rhs = unsigned(&a1).matmul(&unsigned(&a2)).unwrap();
        let gap = lhs.sub(&rhs).unwrap().max_abs();
        assert!(
            gap > 1.9,
            "unsigned swap must fail multiplicativity, gap {gap}"
        );
        // the signed action passes on the same element
        let signed = permute_element(&tau, &a12, &space, &tol).unwrap();
        let signed_rhs = permute_element(&tau, &a1, &space, &tol)
            .unwrap()
            .matmul(&permute_element(&tau, &a2, &space, &tol).unwrap())
            .unwrap();
        assert!(signed.approx_eq(&signed_rhs, 1e-10));
    }

    #[test]
    fn the_action_commutes_with_the_grading() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let sigma = Permutation::new(vec![3, 1, 2]).unwrap();
        let u_tot = &space.total.u;
        let wb = WordBasis::new(&space, tol.eq_tol).unwrap();
        for b in wb.basis.iter().step_by(5) {
            let lhs = permute_element(
                &sigma,
                &u_tot.matmul(&b.mat).unwrap().matmul(u_tot).unwrap(),
                &space,
                &tol,
            )
            .unwrap();
            let am = permute_element(&sigma, &b.mat, &space, &tol).unwrap();
            let rhs = u_tot.matmul(&am).unwrap().matmul(u_tot).unwrap();
            assert!(lhs.approx_eq(&rhs, 1e-12));
        }
    }

    #[test]
    fn the_action_maps_local_algebras_onto_their_image() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let sigma = Permutation::new(vec![2, 3, 1]).unwrap();
        let la = fermi::local_algebra(&[1, 2], &space, tol.eq_tol).unwrap();
        let moved: Vec<ComplexMatrix> = la
            .basis
            .iter()
            .map(|b| permute_element(&sigma, &b.mat, &space, &tol).unwrap())
            .collect();
        let target = fermi::local_algebra(&[2, 3], &space, tol.eq_tol).unwrap();
        let cmp =
            linalg::subspace_equal(&moved, &target.matrices(), tol.rank_tol, tol.eq_tol).unwrap();
        assert!(cmp.equal, "alpha_sigma(A({{1,2}})) = A({{2,3}}), gap {}", cmp.gap);
    }

    #[test]
    fn implementing_the_identity_gives_the_identity() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3], &space);
        let g = states::gns(&f, &tol).unwrap();
        let u = implementing_unitary(&Permutation::identity(2), &f, &g, &space, &tol).unwrap();
        assert!(u.approx_eq(&ComplexMatrix::identity(g.dim), 1e-10));
    }

    #[test]
    fn implementing_unitary_satisfies_the_defining_relation() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3], &space);
        let g = states::gns(&f, &tol).unwrap();
        let sigma = Permutation::transposition(2, 1, 2).unwrap();
        let u = implementing_unitary(&sigma, &f, &g, &space, &tol).unwrap();
        // U fixes the cyclic vector
        let uxi = u.matvec(&g.cyclic_vector).unwrap();
        let fix: f64 = uxi
            .iter()
            .zip(&g.cyclic_vector)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(fix <= 1e-10, "U xi = xi, defect {fix}");
        // U pi(x_beta) xi = sign * pi(x_p(beta)) xi on every basis class
        let indexer = WordIndexer::new(&space, tol.eq_tol).unwrap();
        for beta in 0..indexer.len() {
            let (p, s) = indexer.permuted_index(beta, &sigma).unwrap();
            let lhs = u
                .matmul(&g.rep[beta])
                .unwrap()
                .matvec(&g.cyclic_vector)
                .unwrap();
            let rhs = g.rep[p]
                .scale(c(s, 0.0))
                .matvec(&g.cyclic_vector)
                .unwrap();
            let gap: f64 = lhs
                .iter()
                .zip(&rhs)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(gap <= 1e-10, "relation defect {gap} at word {beta}");
        }
    }

    #[test]
    fn implementing_unitaries_compose() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        // symmetrized state of a generic even density: symmetric but not a
        // product, so the implementers are nontrivial
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dim = space.dim();
        let a = ComplexMatrix::from_fn(dim, dim, |_, _| {
            c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
        });
        let mut rho = a.matmul(&a.adjoint()).unwrap();
        let u_tot = &space.total.u;
        rho = rho
            .add(&u_tot.matmul(&rho).unwrap().matmul(u_tot).unwrap())
            .unwrap()
            .scale(c(0.5, 0.0));
        let tr = rho.trace().re;
        rho = rho.scale(c(1.0 / tr, 0.0));
        let raw = StateFunctional::on_full(&space.total, "rho:3", rho, &tol).unwrap();
        let f = symmetrize_state(&raw, &space, &tol).unwrap();
        let g = states::gns(&f, &tol).unwrap();
        let sigma = Permutation::new(vec![2, 3, 1]).unwrap();
        let tau = Permutation::transposition(3, 2, 3).unwrap();
        let us = implementing_unitary(&sigma, &f, &g, &space, &tol).unwrap();
        let ut = implementing_unitary(&tau, &f, &g, &space, &tol).unwrap();
        let ust = implementing_unitary(&sigma.compose(&tau), &f, &g, &space, &tol).unwrap();
        assert!(us.matmul(&ut).unwrap().approx_eq(&ust, 1e-10));
    }

    #[test]
    fn non_symmetric_states_have_no_implementer() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.9, 0.2], &space);
        let g = states::gns(&f, &tol).unwrap();
        let sigma = Permutation::transposition(2, 1, 2).unwrap();
        match implementing_unitary(&sigma, &f, &g, &space, &tol) {
            Err(Error::NotInvariant { .. }) => {}
            other => panic!("expected NotInvariant, got {other:?}"),
        }
    }

    #[test]
    fn averaging_a_constant_returns_it() {
        let t = ComplexMatrix::from_fn(2, 2, |i, j| c((i + 2 * j) as f64, 1.0));
        let avg = cesaro_average(|_| Ok(t.clone()), 4, CesaroMode::Exact).unwrap();
        assert!(avg.approx_eq(&t, 1e-14));
        let sampled = cesaro_average(
            |_| Ok(t.clone()),
            4,
            CesaroMode::Sampled {
                samples: 17,
                seed: 3,
            },
        )
        .unwrap();
        assert!(sampled.approx_eq(&t, 1e-14));
    }

    #[test]
    fn averaging_the_sign_character_vanishes() {
        let sign_rep = |sigma: &Permutation| {
            Ok(ComplexMatrix::from_fn(1, 1, |_, _| c(sigma.sign(), 0.0)))
        };
        for n in 2..=4 {
            let avg = cesaro_average(sign_rep, n, CesaroMode::Exact).unwrap();
            assert!(avg.max_abs() <= 1e-14, "n = {n}");
        }
        let at_one = cesaro_average(sign_rep, 1, CesaroMode::Exact).unwrap();
        assert_abs_diff_eq!(at_one[(0, 0)].re, 1.0);
    }

    #[test]
    fn averaged_implementers_form_the_invariant_projector() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3], &space);
        let g = states::gns(&f, &tol).unwrap();
        let avg = cesaro_average(
            |sigma| implementing_unitary(sigma, &f, &g, &space, &tol),
            2,
            CesaroMode::Exact,
        )
        .unwrap();
        // exact group average of a unitary representation is the projector
        // onto the invariant vectors
        let idem = avg.matmul(&avg).unwrap().sub(&avg).unwrap().max_abs();
        let herm = avg.hermitian_defect();
        assert!(idem <= 1e-10, "idempotency defect {idem}");
        assert!(herm <= 1e-10, "self-adjointness defect {herm}");
        let exi = avg.matvec(&g.cyclic_vector).unwrap();
        let fix: f64 = exi
            .iter()
            .zip(&g.cyclic_vector)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(fix <= 1e-10, "E fixes the cyclic vector, defect {fix}");
    }

    #[test]
    fn symmetrizing_an_equal_product_changes_nothing() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3, 0.3], &space);
        let sym = symmetrize_state(&f, &space, &tol).unwrap();
        let wb = WordBasis::new(&space, tol.eq_tol).unwrap();
        let before = word_values(&f, &wb).unwrap();
        for (a, b) in sym.values.iter().zip(&before) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn symmetrization_is_symmetric_and_preserves_evenness() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        // a non-symmetric but even state
        let f = product_state(&[0.9, 0.2], &space);
        assert!(!is_symmetric(&f, &space, 1e-9).unwrap());
        assert!(symmetry_defect(&f, &space, &tol).unwrap() > 0.01);
        let sym = symmetrize_state(&f, &space, &tol).unwrap();
        assert!(is_symmetric(&sym, &space, 1e-12).unwrap());
        assert!(check_even_vanishing(&sym, &space, &tol).unwrap() <= 1e-14);
        assert!(states::is_even_state(&sym, 1e-12));
    }

    #[test]
    fn even_product_states_are_symmetric_with_vanishing_odd_values() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3, 0.3], &space);
        assert!(is_symmetric(&f, &space, 1e-12).unwrap());
        assert_abs_diff_eq!(check_even_vanishing(&f, &space, &tol).unwrap(), 0.0);
    }

    #[test]
    fn finite_level_symmetrization_keeps_odd_values() {
        // Vanishing on odd elements is an infinite-volume property of
        // symmetric states. At a finite truncation the group average of a
        // positive non-even state stays symmetric yet keeps odd values:
        // for the vector state of (|00> + |10>)/sqrt(2) the surviving odd
        // value is exactly 1/4.
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let mut psi = vec![c(0.0, 0.0); 4];
        psi[0] = c(1.0 / 2f64.sqrt(), 0.0);
        psi[2] = c(1.0 / 2f64.sqrt(), 0.0);
        let rho = ComplexMatrix::from_fn(4, 4, |i, j| psi[i] * psi[j].conj());
        let f = StateFunctional::on_full(&space.total, "skew-vector", rho, &tol).unwrap();
        let sym = symmetrize_state(&f, &space, &tol).unwrap();
        assert!(is_symmetric(&sym, &space, 1e-12).unwrap());
        let odd_max = check_even_vanishing(&sym, &space, &tol).unwrap();
        assert_abs_diff_eq!(odd_max, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn single_letter_compression_decays_like_the_projector_oracle() {
        let tol = tolcfg();
        let word = [(1usize, annihilator())];
        let report = odd_compression_decay(&word, &trace_state(), 2, 4, &tol).unwrap();
        assert!(report.applicable);
        assert!(!report.all_zero);
        assert_eq!(report.n_values, vec![2, 3, 4]);
        for (i, &n) in report.n_values.iter().enumerate() {
            assert_abs_diff_eq!(report.norms[i], 1.0 / (n as f64).sqrt(), epsilon = 1e-6);
            assert_abs_diff_eq!(
                report.anticommutator_norms[i],
                1.0 / n as f64,
                epsilon = 1e-6
            );
        }
        let slope = report.slope.unwrap();
        let anti_slope = report.anticommutator_slope.unwrap();
        assert_abs_diff_eq!(slope, -0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(anti_slope, -1.0, epsilon = 1e-3);
    }

    #[test]
    fn even_words_are_flagged_inapplicable() {
        let tol = tolcfg();
        let word = [(1usize, even_letter(1))];
        let report = odd_compression_decay(&word, &trace_state(), 2, 3, &tol).unwrap();
        assert!(!report.applicable);
        // nothing forces decay: the projection of an even single letter
        // survives averaging
        assert!(report.norms.iter().all(|&v| v > 0.1));
    }

    #[test]
    fn distinct_odd_letters_average_to_zero() {
        // a_1 a_2 a_3 transforms in the sign representation, so the group
        // average — and hence the compression — vanishes outright.
        let tol = tolcfg();
        let word = [
            (1usize, annihilator()),
            (2usize, annihilator()),
            (3usize, annihilator()),
        ];
        let report = odd_compression_decay(&word, &trace_state(), 4, 5, &tol).unwrap();
        assert!(report.applicable);
        assert!(report.all_zero, "norms {:?}", report.norms);
        assert!(report.norms.iter().all(|&v| v <= 1e-10));
    }

    #[test]
    fn product_states_cluster_under_block_shifts() {
        let space = ProductSpace::qubits(4).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3, 0.3, 0.3], &space);
        let a = [(1usize, even_letter(1))];
        let b = [(1usize, even_letter(0))];
        let report = clustering_check(&f, &space, &a, &b, &tol).unwrap();
        assert_eq!(report.m_values, vec![1, 2]);
        assert!(report.verdict, "defects {:?}", report.defects);
        assert!(report.defects.iter().all(|&d| d <= 1e-12));
    }

    #[test]
    fn clustering_needs_room_for_the_shift() {
        let space = ProductSpace::qubits(1).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3], &space);
        let a = [(1usize, even_letter(1))];
        match clustering_check(&f, &space, &a, &a, &tol) {
            Err(Error::SiteOutOfRange { .. }) => {}
            other => panic!("expected SiteOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn product_test_passes_products_and_flags_mixtures() {
        let space = ProductSpace::qubits(3).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3, 0.3], &space);
        let report = product_test(&f, &space, &[1], &[2, 3], &tol).unwrap();
        assert!(report.verdict, "defect {}", report.defect);
        assert!(report.defect <= 1e-10);

        // half-half mixture of two separated products leaves a gap
        let f1 = product_state(&[0.9, 0.9, 0.9], &space);
        let f2 = product_state(&[0.2, 0.2, 0.2], &space);
        let mixed: Vec<Complex64> = f1
            .values
            .iter()
            .zip(&f2.values)
            .map(|(a, b)| (a + b) * c(0.5, 0.0))
            .collect();
        let fm =
            StateFunctional::from_values(f1.algebra.clone(), "mixture", mixed).unwrap();
        let report = product_test(&fm, &space, &[1], &[2], &tol).unwrap();
        assert!(!report.verdict);
        assert!(report.defect >= 0.01, "defect {}", report.defect);

        // the identity factorizes trivially against anything
        let id = ComplexMatrix::identity(space.dim());
        let a = fermi::embed_site(&even_letter(1), 1, &space).unwrap();
        let gap = (f.value_of(&a.matmul(&id).unwrap()) - f.value_of(&a) * f.value_of(&id)).norm();
        assert!(gap <= 1e-12);
    }

    #[test]
    fn overlapping_supports_are_rejected() {
        let space = ProductSpace::qubits(2).unwrap();
        let tol = tolcfg();
        let f = product_state(&[0.3, 0.3], &space);
        match product_test(&f, &space, &[1, 2], &[2], &tol) {
            Err(Error::OverlappingSupports(_)) => {}
            other => panic!("expected OverlappingSupports, got {other:?}"),
        }
    }

    #[test]
    fn fixed_points_collapse_to_scalars_with_headroom() {
        let tol = tolcfg();
        let qubit = GradedSpace::qubit();
        let scan = |n, m| fixed_point_scan(n, m, &qubit, &tol).unwrap().dimension;
        assert_eq!(scan(1, 2), 1);
        assert_eq!(scan(1, 3), 1);
        assert_eq!(scan(2, 3), 1);
        // no headroom: the symmetric words survive (P_1 is trivial at n=1)
        assert_eq!(scan(1, 1), 4);
        assert_eq!(scan(2, 2), 8);
    }
}
