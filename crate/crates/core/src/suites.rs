//! Named verification suites behind the `grald` binary.
//!
//! Each suite binds a group of module-level checks into one reproducible run:
//! every randomized check derives from the run's seed, the report embeds the
//! tolerance configuration it was decided with, and rerunning the same
//! `RunSpec` reproduces the same verdicts and defects byte for byte (runtime
//! fields aside). Independent trials within a suite run concurrently; report
//! assembly is ordered.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::definetti::{self, MixtureModel, MixtureModelWire, SolverConfig};
use crate::error::{Error, Result};
use crate::fermi::{self, ProductSpace};
use crate::graded::{Grade, GradedOperator, GradedSpace};
use crate::linalg::{self, ComplexMatrix, ToleranceConfig};
use crate::states::{self, StateFunctional, StateWire, TypeLabel};
use crate::symmetry::{self, Permutation};
use crate::twisted;
use crate::vonneumann::{self, ConcreteAlgebra};

/// The named suites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuiteKind {
    Car,
    Twist,
    Commutant,
    Symmetry,
    Definetti,
    Classify,
    All,
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SuiteKind::Car => "car",
            SuiteKind::Twist => "twist",
            SuiteKind::Commutant => "commutant",
            SuiteKind::Symmetry => "symmetry",
            SuiteKind::Definetti => "definetti",
            SuiteKind::Classify => "classify",
            SuiteKind::All => "all",
        };
        f.write_str(s)
    }
}

impl FromStr for SuiteKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "car" => Ok(Self::Car),
            "twist" => Ok(Self::Twist),
            "commutant" => Ok(Self::Commutant),
            "symmetry" => Ok(Self::Symmetry),
            "definetti" => Ok(Self::Definetti),
            "classify" => Ok(Self::Classify),
            "all" => Ok(Self::All),
            other => Err(Error::InvalidSpec(format!("unknown suite '{other}'"))),
        }
    }
}

/// Input echo of a run: sizes, trial counts, and the mandatory seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunParams {
    pub sites: usize,
    pub dims: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for RunParams {
    fn default() -> Self {
        Self {
            sites: 8,
            dims: vec![2, 4],
            trials: 100,
            seed: 0,
        }
    }
}

/// A full run request.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub suite: SuiteKind,
    pub params: RunParams,
    pub tolerances: ToleranceConfig,
    /// Input state for `definetti` (decomposition target) or `classify`.
    pub state: Option<StateWire>,
    /// Component cap for the decomposition solver.
    pub max_components: usize,
}

impl RunSpec {
    pub fn new(suite: SuiteKind) -> Self {
        Self {
            suite,
            params: RunParams::default(),
            tolerances: ToleranceConfig::default(),
            state: None,
            max_components: 4,
        }
    }
}

/// One named check: the observed quantity, the bound it was held to, and the
/// direction of the comparison (`<=` for defects, `>=` for separations).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub threshold: f64,
    pub comparison: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub runtime_ms: f64,
    pub detail: String,
}

fn check_le(
    name: &str,
    observed: f64,
    threshold: f64,
    seed: Option<u64>,
    detail: impl Into<String>,
    start: Instant,
) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: observed <= threshold,
        observed,
        threshold,
        comparison: "<=".to_string(),
        seed,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        detail: detail.into(),
    }
}

fn check_ge(
    name: &str,
    observed: f64,
    threshold: f64,
    seed: Option<u64>,
    detail: impl Into<String>,
    start: Instant,
) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        passed: observed >= threshold,
        observed,
        threshold,
        comparison: ">=".to_string(),
        seed,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        detail: detail.into(),
    }
}

/// Machine-readable run report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    /// Artifact version (the crate version).
    pub version: String,
    pub suite: String,
    pub params: RunParams,
    /// The tolerance configuration every verdict was decided with.
    pub tolerances: ToleranceConfig,
    pub checks: Vec<CheckResult>,
    pub all_passed: bool,
    pub runtime_ms: f64,
    /// Recovered mixture model, for `definetti` runs on an input state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<MixtureModelWire>,
    /// Factor-type label, for `classify` runs on an input state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<TypeLabel>,
}

impl Report {
    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let verdict = if self.all_passed { "all passed" } else { "FAILURES" };
        out.push_str(&format!(
            "suite {} — {} checks, {} ({:.1} ms, v{})\n",
            self.suite,
            self.checks.len(),
            verdict,
            self.runtime_ms,
            self.version
        ));
        for c in &self.checks {
            let mark = if c.passed { "PASS" } else { "FAIL" };
            let seed = c.seed.map_or(String::new(), |s| format!(" seed={s}"));
            out.push_str(&format!(
                "{mark}  {:<38} {:>12.3e} {} {:<9.1e}{} ({:.1} ms)  {}\n",
                c.name, c.observed, c.comparison, c.threshold, seed, c.runtime_ms, c.detail
            ));
        }
        if let Some(label) = &self.classification {
            out.push_str(&format!("classification: {label:?}\n"));
        }
        if let Some(model) = &self.model {
            out.push_str(&format!(
                "model: {} components, weights {:?}, residual {:.3e}\n",
                model.weights.len(),
                model.weights,
                model.residual
            ));
        }
        out
    }
}

/// Execute a run spec: dispatch to the named suite(s) and assemble the
/// report.
pub fn run(spec: &RunSpec) -> Result<Report> {
    let start = Instant::now();
    let tol = &spec.tolerances;
    let mut checks = Vec::new();
    let mut model = None;
    let mut classification = None;
    let kinds: Vec<SuiteKind> = match spec.suite {
        SuiteKind::All => vec![
            SuiteKind::Car,
            SuiteKind::Twist,
            SuiteKind::Commutant,
            SuiteKind::Symmetry,
            SuiteKind::Definetti,
            SuiteKind::Classify,
        ],
        k => vec![k],
    };
    for kind in kinds {
        match kind {
            SuiteKind::Car => checks.extend(car_suite(&spec.params, tol)?),
            SuiteKind::Twist => checks.extend(twist_suite(&spec.params, tol)?),
            SuiteKind::Commutant => checks.extend(commutant_suite(&spec.params, tol)?),
            SuiteKind::Symmetry => checks.extend(symmetry_suite(&spec.params, tol)?),
            SuiteKind::Definetti => {
                if let Some(wire) = &spec.state {
                    let (cs, m) =
                        decompose_input_state(wire.clone(), spec, tol)?;
                    checks.extend(cs);
                    model = Some(m);
                } else {
                    checks.extend(definetti_suite(&spec.params, tol)?);
                }
            }
            SuiteKind::Classify => {
                if let Some(wire) = &spec.state {
                    let (cs, label) = classify_input_state(wire.clone(), tol)?;
                    checks.extend(cs);
                    classification = Some(label);
                } else {
                    checks.extend(classify_suite(&spec.params, tol)?);
                }
            }
            SuiteKind::All => unreachable!(),
        }
    }
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(Report {
        version: env!("CARGO_PKG_VERSION").to_string(),
        suite: spec.suite.to_string(),
        params: spec.params.clone(),
        tolerances: tol.clone(),
        checks,
        all_passed,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        model,
        classification,
    })
}

// ---------------------------------------------------------------------------
// shared generators
// ---------------------------------------------------------------------------

fn unit2(a: usize, b: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(2, 2, |i, j| {
        if (i, j) == (a, b) {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

fn annihilator() -> GradedOperator {
    GradedOperator {
        mat: unit2(0, 1),
        grade: Grade::Odd,
    }
}

fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |_, _| {
        Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)
    })
}

/// A graded space with random diagonal signs (at least one of each when the
/// dimension allows, so both parities are populated).
fn random_signs_space(d: usize, rng: &mut ChaCha8Rng) -> GradedSpace {
    let mut signs: Vec<f64> = (0..d)
        .map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 })
        .collect();
    if d >= 2 {
        signs[0] = 1.0;
        signs[1] = -1.0;
    }
    GradedSpace::from_signs(&signs)
}

/// A random homogeneous operator of the requested grade.
fn random_homogeneous(space: &GradedSpace, grade: Grade, rng: &mut ChaCha8Rng) -> GradedOperator {
    let raw = random_matrix(space.dim, rng);
    let (even, odd) = space.even_odd_split(&raw).expect("split");
    let mat = match grade {
        Grade::Even => even,
        Grade::Odd => odd,
    };
    GradedOperator { mat, grade }
}

/// Independent per-basis-vector construction of the graded tensor of two
/// homogeneous operators: entry `[(i,a),(j,b)] = T1[i,j] T2[a,b] * sign`,
/// where the sign is `-1` exactly when `T2` is odd and the first-slot basis
/// vector `e_j` is odd (the odd operator crawls past it).
fn sign_rule_tensor(
    t1: &GradedOperator,
    space1: &GradedSpace,
    t2: &GradedOperator,
    d2: usize,
) -> ComplexMatrix {
    let d1 = space1.dim;
    ComplexMatrix::from_fn(d1 * d2, d1 * d2, |row, col| {
        let (i, a) = (row / d2, row % d2);
        let (j, b) = (col / d2, col % d2);
        let v = t1.mat[(i, j)] * t2.mat[(a, b)];
        if t2.grade.is_odd() && space1.u[(j, j)].re < 0.0 {
            -v
        } else {
            v
        }
    })
}

// ---------------------------------------------------------------------------
// car
// ---------------------------------------------------------------------------

/// Anticommutation relations of the site generators and the tensor-form
/// oracle agreement.
fn car_suite(params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let n = params.sites.max(2);
    let space = ProductSpace::qubits(n)?;
    let ann = annihilator();
    let gens: Vec<ComplexMatrix> = (1..=n)
        .map(|j| fermi::embed_site(&ann, j, &space))
        .collect::<Result<_>>()?;
    let adjoints: Vec<ComplexMatrix> = gens.iter().map(|a| a.adjoint()).collect();
    let id = ComplexMatrix::identity(space.dim());

    let start = Instant::now();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (j..n).map(move |k| (j, k)))
        .collect();
    let defects: Vec<(f64, f64)> = pairs
        .par_iter()
        .map(|&(j, k)| -> Result<(f64, f64)> {
            let anti = gens[j].matmul(&gens[k])?.add(&gens[k].matmul(&gens[j])?)?;
            let mut cross = gens[j]
                .matmul(&adjoints[k])?
                .add(&adjoints[k].matmul(&gens[j])?)?;
            if j == k {
                cross = cross.sub(&id)?;
            }
            Ok((anti.fro_norm(), cross.fro_norm()))
        })
        .collect::<Result<_>>()?;
    let max_anti = defects.iter().map(|d| d.0).fold(0.0f64, f64::max);
    let max_cross = defects.iter().map(|d| d.1).fold(0.0f64, f64::max);
    checks.push(check_le(
        "car-anticommutator",
        max_anti,
        1e-10,
        None,
        format!("max |a_j a_k + a_k a_j| over {n} sites (dim {})", space.dim()),
        start,
    ));
    checks.push(check_le(
        "car-cross-relation",
        max_cross,
        1e-10,
        None,
        format!("max |a_j a_k* + a_k* a_j - d_jk 1| over {n} sites"),
        start,
    ));

    // Klein form against the per-basis-vector sign rule, at site dims 2 and 4
    let start = Instant::now();
    let trials = params.trials.max(4);
    let dims: Vec<usize> = params
        .dims
        .iter()
        .copied()
        .filter(|&d| d >= 2)
        .collect::<Vec<_>>();
    let dims = if dims.is_empty() { vec![2, 4] } else { dims };
    let defect = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xCA2 ^ (t as u64) << 8);
            let d1 = dims[t % dims.len()];
            let d2 = dims[(t / dims.len()) % dims.len()];
            let s1 = random_signs_space(d1, &mut rng);
            let s2 = random_signs_space(d2, &mut rng);
            let g1 = if rng.gen::<bool>() { Grade::Even } else { Grade::Odd };
            let g2 = if rng.gen::<bool>() { Grade::Even } else { Grade::Odd };
            let t1 = random_homogeneous(&s1, g1, &mut rng);
            let t2 = random_homogeneous(&s2, g2, &mut rng);
            let klein = fermi::op_graded_tensor(&t1, &s1, &t2)?;
            let oracle = sign_rule_tensor(&t1, &s1, &t2, d2);
            Ok(klein.sub(&oracle)?.fro_norm())
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "klein-form-vs-sign-rule",
        defect,
        1e-12,
        Some(params.seed),
        format!("{trials} random homogeneous pairs at site dims {dims:?}"),
        start,
    ));
    let _ = tol;
    Ok(checks)
}

// ---------------------------------------------------------------------------
// twist
// ---------------------------------------------------------------------------

/// The twist automorphism identities and the dual-route twisted commutant.
fn twist_suite(params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();

    // eta_U^2 = ad_U on random matrices at random dims up to 16
    let start = Instant::now();
    let trials = params.trials.max(4);
    let defect = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x714157 ^ (t as u64) << 8);
            let d = 2 + (rng.gen::<usize>() % 15).min(14);
            let space = random_signs_space(d, &mut rng);
            let x = random_matrix(d, &mut rng);
            let ctx = twisted::TwistContext::new(space.clone());
            let twice = twisted::twist(&twisted::twist(&x, &ctx)?, &ctx)?;
            let conj = space.u.matmul(&x)?.matmul(&space.u)?;
            Ok(twice.sub(&conj)?.fro_norm() / x.fro_norm().max(1.0))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "twist-squares-to-grading",
        defect,
        1e-12,
        Some(params.seed),
        format!("{trials} random operators at dims 2..=16"),
        start,
    ));

    // both twisted-commutant formulas agree on random grading-invariant algebras
    let start = Instant::now();
    let pairs = (params.trials / 2).max(2);
    let gap = (0..pairs)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x7C0 ^ (t as u64) << 8);
            let d = if rng.gen::<bool>() { 4 } else { 8 };
            let space = random_signs_space(d, &mut rng);
            let m = vonneumann::random_graded_subalgebra(
                &space,
                1 + t % 2,
                params.seed ^ 0xA16 ^ (t as u64),
                tol,
            )?;
            let route_a = twisted::twist_algebra(&vonneumann::commutant(&m, tol)?)?;
            let route_b = vonneumann::commutant(&twisted::twist_algebra(&m)?, tol)?;
            let cmp = route_a.equal_span(&route_b, tol)?;
            if !cmp.equal {
                return Err(Error::FormulaMismatch { gap: cmp.gap });
            }
            Ok(cmp.gap)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "twisted-commutant-routes",
        gap,
        1e-8,
        Some(params.seed),
        format!("{pairs} random grading-invariant algebras at dims 4 and 8"),
        start,
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// commutant
// ---------------------------------------------------------------------------

/// The graded commutation theorem at finite truncations plus the
/// union/intersection identities.
fn commutant_suite(params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let dim_pairs = [(2usize, 2usize), (2, 4), (4, 2), (4, 4)];

    // two-factor commutation theorem on random graded subalgebra pairs
    let start = Instant::now();
    let pairs = (params.trials / 2).max(2);
    let gap = (0..pairs)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xC0117 ^ (t as u64) << 8);
            let (d1, d2) = dim_pairs[t % dim_pairs.len()];
            let s1 = random_signs_space(d1, &mut rng);
            let s2 = random_signs_space(d2, &mut rng);
            let m = vonneumann::random_graded_subalgebra(
                &s1,
                1 + t % 2,
                params.seed ^ 0x111 ^ (t as u64),
                tol,
            )?;
            let n = vonneumann::random_graded_subalgebra(
                &s2,
                1 + (t / 2) % 2,
                params.seed ^ 0x222 ^ (t as u64),
                tol,
            )?;
            let report = twisted::vandaele_check(&m, &n, tol)?;
            if !report.verdict {
                return Err(Error::FormulaMismatch { gap: report.gap });
            }
            Ok(report.gap)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "two-factor-commutation",
        gap,
        1e-8,
        Some(params.seed),
        format!("{pairs} random graded pairs, product dims <= 16"),
        start,
    ));

    // one three-factor truncation
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x3FAC);
    let spaces = [
        random_signs_space(2, &mut rng),
        random_signs_space(2, &mut rng),
        random_signs_space(4, &mut rng),
    ];
    let algs: Vec<ConcreteAlgebra> = spaces
        .iter()
        .enumerate()
        .map(|(i, s)| {
            vonneumann::random_graded_subalgebra(s, 1, params.seed ^ 0x333 ^ i as u64, tol)
        })
        .collect::<Result<_>>()?;
    let refs: Vec<&ConcreteAlgebra> = algs.iter().collect();
    let report = twisted::infinite_truncation_check(&refs, tol)?;
    checks.push(check_le(
        "three-factor-truncation",
        report.gap,
        1e-8,
        Some(params.seed),
        format!(
            "three factors (dims 2,2,4), spans {} vs {}",
            report.lhs_dim, report.rhs_dim
        ),
        start,
    ));

    // union lemma (twisted) + order reversal (untwisted): four identities
    let start = Instant::now();
    let gap = (0..pairs)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x4A11 ^ (t as u64) << 8);
            let space = random_signs_space(4, &mut rng);
            let n1 = vonneumann::random_graded_subalgebra(
                &space,
                1,
                params.seed ^ 0x444 ^ (t as u64),
                tol,
            )?;
            let n2 = vonneumann::random_graded_subalgebra(
                &space,
                1 + t % 2,
                params.seed ^ 0x555 ^ (t as u64),
                tol,
            )?;
            let twisted_report = twisted::union_lemma_check(&n1, &n2, tol)?;
            let mut worst = twisted_report.intersection.gap.max(twisted_report.join.gap);
            if !twisted_report.verdict {
                return Err(Error::FormulaMismatch { gap: worst });
            }
            // untwisted order reversal on the same pair
            let c1 = vonneumann::commutant(&n1, tol)?;
            let c2 = vonneumann::commutant(&n2, tol)?;
            let meet = vonneumann::commutant(&vonneumann::intersect(&n1, &n2, tol)?, tol)?;
            let cmp1 = meet.equal_span(&vonneumann::join(&c1, &c2, tol)?, tol)?;
            let joined = vonneumann::commutant(&vonneumann::join(&n1, &n2, tol)?, tol)?;
            let cmp2 = joined.equal_span(&vonneumann::intersect(&c1, &c2, tol)?, tol)?;
            if !cmp1.equal || !cmp2.equal {
                return Err(Error::FormulaMismatch {
                    gap: cmp1.gap.max(cmp2.gap),
                });
            }
            worst = worst.max(cmp1.gap).max(cmp2.gap);
            Ok(worst)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "union-lemma-identities",
        gap,
        1e-8,
        Some(params.seed),
        format!("{pairs} pairs, four identities each (twisted and plain)"),
        start,
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// symmetry
// ---------------------------------------------------------------------------

/// A random even density on a graded space, seeded: random PSD matrix,
/// grading-averaged and trace-normalized.
fn random_even_density(space: &GradedSpace, rng: &mut ChaCha8Rng) -> Result<ComplexMatrix> {
    let a = random_matrix(space.dim, rng);
    let mut rho = a.matmul(&a.adjoint())?;
    rho = rho
        .add(&space.u.matmul(&rho)?.matmul(&space.u)?)?
        .scale(Complex64::new(0.5, 0.0));
    let tr = rho.trace().re;
    Ok(rho.scale(Complex64::new(1.0 / tr, 0.0)))
}

/// Group action laws, symmetrization, odd-compression decay, and the
/// fixed-point scan.
fn symmetry_suite(params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();

    // group law of the signed action, exact on the level-4 word basis
    let start = Instant::now();
    let space4 = ProductSpace::qubits(4)?;
    let indexer = symmetry::WordIndexer::new(&space4, tol.eq_tol)?;
    let perms = Permutation::all(4)?;
    let mut law_defect = 0.0f64;
    for sigma in &perms {
        for tau in &perms {
            let st = sigma.compose(tau);
            for idx in 0..indexer.len() {
                let (p1, s1) = indexer.permuted_index(idx, tau)?;
                let (p2, s2) = indexer.permuted_index(p1, sigma)?;
                let (p, s) = indexer.permuted_index(idx, &st)?;
                if p != p2 {
                    law_defect = law_defect.max(1.0);
                }
                law_defect = law_defect.max((s - s1 * s2).abs());
            }
        }
    }
    checks.push(check_le(
        "action-group-law",
        law_defect,
        0.0,
        None,
        "all pairs in P_4 on the 256-word basis, exact",
        start,
    ));

    // grading equivariance and locality of the action
    let start = Instant::now();
    let space3 = ProductSpace::qubits(3)?;
    let sigma = Permutation::new(vec![2, 3, 1])?;
    let wb = symmetry::WordBasis::new(&space3, tol.eq_tol)?;
    let u_tot = &space3.total.u;
    let mut equiv = 0.0f64;
    for b in wb.basis.iter().step_by(3) {
        let lhs = symmetry::permute_element(
            &sigma,
            &u_tot.matmul(&b.mat)?.matmul(u_tot)?,
            &space3,
            tol,
        )?;
        let am = symmetry::permute_element(&sigma, &b.mat, &space3, tol)?;
        let rhs = u_tot.matmul(&am)?.matmul(u_tot)?;
        equiv = equiv.max(lhs.sub(&rhs)?.max_abs());
    }
    checks.push(check_le(
        "action-grading-equivariance",
        equiv,
        1e-12,
        None,
        "theta . alpha_sigma = alpha_sigma . theta on level-3 words",
        start,
    ));
    let start = Instant::now();
    let la = fermi::local_algebra(&[1, 2], &space3, tol.eq_tol)?;
    let moved: Vec<ComplexMatrix> = la
        .basis
        .iter()
        .map(|b| symmetry::permute_element(&sigma, &b.mat, &space3, tol))
        .collect::<Result<_>>()?;
    let target = fermi::local_algebra(&[2, 3], &space3, tol.eq_tol)?;
    let cmp = linalg::subspace_equal(&moved, &target.matrices(), tol.rank_tol, tol.eq_tol)?;
    checks.push(check_le(
        "action-locality",
        cmp.gap,
        1e-12,
        None,
        "alpha_sigma(A({1,2})) = A({2,3})",
        start,
    ));

    // symmetrized random even states vanish on odd words
    let start = Instant::now();
    let even_trials = params.trials.clamp(4, 20);
    let odd_max = (0..even_trials)
        .into_par_iter()
        .map(|t| -> Result<f64> {
            let n = 2 + t % 4; // levels 2..=5
            let space = ProductSpace::qubits(n)?;
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0x5E1F ^ (t as u64) << 8);
            let rho = random_even_density(&space.total, &mut rng)?;
            let f = StateFunctional::on_full(&space.total, format!("rand:{t}"), rho, tol)?;
            let sym = symmetry::symmetrize_state(&f, &space, tol)?;
            symmetry::check_even_vanishing(&sym, &space, tol)
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "symmetrized-even-states-vanish-on-odd",
        odd_max,
        1e-10,
        Some(params.seed),
        format!("{even_trials} seeded random even states at levels 2..=5"),
        start,
    ));

    // positivity of product functionals (even, one non-even, two non-even)
    let start = Instant::now();
    let qubit = GradedSpace::qubit();
    let even_state = StateFunctional::on_full(
        &qubit,
        "even:0.3",
        ComplexMatrix::diag(&[0.3, 0.7]),
        tol,
    )?;
    let mut skew = ComplexMatrix::identity(2).scale(Complex64::new(0.5, 0.0));
    skew[(0, 1)] = Complex64::new(0.45, 0.0);
    skew[(1, 0)] = Complex64::new(0.45, 0.0);
    let skew_state = StateFunctional::on_full(&qubit, "skew:0.9", skew, tol)?;
    let mut psd_floor = 0.0f64;
    for states_vec in [
        vec![even_state.clone(), even_state.clone()],
        vec![even_state.clone(), even_state.clone(), even_state.clone()],
        vec![skew_state.clone(), even_state.clone()],
        vec![even_state.clone(), skew_state.clone(), even_state.clone()],
    ] {
        let space = ProductSpace::uniform(&qubit, states_vec.len())?;
        let prod = states::product_functional(&states_vec, &space, tol)?;
        let (_, min_eig) = states::positivity_check(&prod, tol)?;
        psd_floor = psd_floor.min(min_eig);
    }
    checks.push(check_ge(
        "product-positivity-even-sector",
        psd_floor,
        -1e-10,
        None,
        "Gram floor of even and singly-non-even products at levels 2,3",
        start,
    ));
    let start = Instant::now();
    let space2 = ProductSpace::qubits(2)?;
    let double = states::product_functional(&[skew_state.clone(), skew_state], &space2, tol)?;
    let (_, min_eig) = states::positivity_check(&double, tol)?;
    checks.push(check_le(
        "product-positivity-doubly-non-even",
        min_eig,
        -1e-3,
        None,
        "doubly-non-even product must be visibly indefinite",
        start,
    ));

    // odd-compression decay of a single generator
    let start = Instant::now();
    let n_max = params.sites.clamp(4, 6);
    let trace = StateFunctional::normalized_trace(&qubit, tol)?;
    let word = [(1usize, annihilator())];
    let report = symmetry::odd_compression_decay(&word, &trace, 3, n_max, tol)?;
    let norm_defect = report
        .n_values
        .iter()
        .zip(&report.norms)
        .map(|(&n, &v)| (v - 1.0 / (n as f64).sqrt()).abs())
        .fold(0.0f64, f64::max);
    checks.push(check_le(
        "odd-compression-norms",
        norm_defect,
        1e-6,
        None,
        format!("|E pi(a) E| vs n^(-1/2) over levels 3..={n_max}"),
        start,
    ));
    let anti_slope = report.anticommutator_slope.unwrap_or(0.0);
    checks.push(check_le(
        "odd-compression-mechanism-slope",
        anti_slope,
        -0.9,
        None,
        format!(
            "log-log slope of |{{B,B*}}| (counting mechanism), norms {:?}",
            report.anticommutator_norms
        ),
        start,
    ));

    // fixed points collapse to scalars when there is headroom
    let start = Instant::now();
    let mut worst_dim = 0usize;
    for (n, m) in [(1usize, 2usize), (1, 3), (2, 3)] {
        let scan = symmetry::fixed_point_scan(n, m, &qubit, tol)?;
        worst_dim = worst_dim.max(scan.dimension);
    }
    checks.push(check_le(
        "fixed-point-headroom",
        worst_dim as f64,
        1.0,
        None,
        "levels (1,2), (1,3), (2,3): invariant dimension must be 1",
        start,
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// definetti
// ---------------------------------------------------------------------------

fn diag_density(p: f64) -> ComplexMatrix {
    ComplexMatrix::diag(&[p, 1.0 - p])
}

fn qubit_component(p: f64, tol: &ToleranceConfig) -> Result<StateFunctional> {
    StateFunctional::on_full(&GradedSpace::qubit(), format!("diag:{p}"), diag_density(p), tol)
}

/// Planted-model recovery, the extremality probe, and the tail expectation
/// identities.
fn definetti_suite(params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();

    // planted two-point mixture on three sites
    let start = Instant::now();
    let model = MixtureModel::new(
        vec![0.5, 0.5],
        vec![qubit_component(0.9, tol)?, qubit_component(0.2, tol)?],
        3,
    )?;
    let mix = definetti::mixture_state(&model, tol)?;
    let space = model.space()?;
    let config = SolverConfig {
        max_components: 2,
        restarts: 8,
        seed: params.seed.wrapping_add(1),
        ..SolverConfig::default()
    };
    let (found, resid) = definetti::decompose(&mix, &space, &config, tol)?;
    checks.push(check_le(
        "planted-recovery-residual",
        resid,
        1e-6,
        Some(config.seed),
        format!("{} components recovered", found.n_components()),
        start,
    ));
    let start = Instant::now();
    let (weight_err, comp_err) = if found.n_components() == 2 {
        let r0 = found.components[0].density.clone().unwrap();
        let r1 = found.components[1].density.clone().unwrap();
        let direct = definetti::trace_distance(&r0, &diag_density(0.9))?
            .max(definetti::trace_distance(&r1, &diag_density(0.2))?);
        let swapped = definetti::trace_distance(&r0, &diag_density(0.2))?
            .max(definetti::trace_distance(&r1, &diag_density(0.9))?);
        let dist = direct.min(swapped);
        let werr = found
            .weights
            .iter()
            .map(|w| (w - 0.5).abs())
            .fold(0.0f64, f64::max);
        (werr, dist)
    } else {
        (1.0, 1.0)
    };
    checks.push(check_le(
        "planted-recovery-weights",
        weight_err,
        1e-3,
        Some(config.seed),
        "recovered weights vs 1/2",
        start,
    ));
    checks.push(check_le(
        "planted-recovery-components",
        comp_err,
        1e-3,
        Some(config.seed),
        "trace distance to the planted densities, up to relabeling",
        start,
    ));

    // extremality probe: products factorize, separated mixtures do not
    let start = Instant::now();
    let prod = &model.component_products(tol)?[0];
    let p_report = symmetry::product_test(prod, &space, &[1], &[2, 3], tol)?;
    checks.push(check_le(
        "extremality-product-defect",
        p_report.defect,
        1e-10,
        None,
        "equal-factor product state across {1} | {2,3}",
        start,
    ));
    let start = Instant::now();
    let m_report = symmetry::product_test(&mix, &space, &[1], &[2, 3], tol)?;
    checks.push(check_ge(
        "extremality-mixture-separation",
        m_report.defect,
        1e-2,
        None,
        "planted mixture (trace-distance separation 0.7) must not factorize",
        start,
    ));

    // tail expectation identities on a two-site planted model
    let start = Instant::now();
    let model2 = MixtureModel::new(
        vec![0.5, 0.5],
        vec![qubit_component(0.9, tol)?, qubit_component(0.2, tol)?],
        2,
    )?;
    let mix2 = definetti::mixture_state(&model2, tol)?;
    let space2 = model2.space()?;
    let dim2 = space2.dim();
    let trials = params.trials.max(10);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ 0xDEF1);
    let mut preserve = 0.0f64;
    let mut invariance = 0.0f64;
    let swap = Permutation::transposition(2, 1, 2)?;
    for _ in 0..trials {
        let x = random_matrix(dim2, &mut rng);
        let t = definetti::tail_expectation(&model2, &x, tol)?;
        let recombined: Complex64 = model2
            .weights
            .iter()
            .zip(&t.values)
            .map(|(w, v)| Complex64::new(*w, 0.0) * v)
            .sum();
        preserve = preserve.max((recombined - mix2.value_of(&x)).norm());
        let moved = symmetry::permute_element(&swap, &x, &space2, tol)?;
        let tm = definetti::tail_expectation(&model2, &moved, tol)?;
        for (a, b) in t.values.iter().zip(&tm.values) {
            invariance = invariance.max((a - b).norm());
        }
    }
    checks.push(check_le(
        "tail-preserves-state",
        preserve,
        1e-10,
        Some(params.seed),
        format!("sum_k w_k E_k(X) = omega(X) on {trials} random X"),
        start,
    ));
    checks.push(check_le(
        "tail-permutation-invariance",
        invariance,
        1e-10,
        Some(params.seed),
        "E . alpha_sigma = E componentwise",
        start,
    ));
    let start = Instant::now();
    let ci = definetti::conditional_independence_check(
        &model,
        &[1],
        &[2, 3],
        trials.min(20),
        params.seed ^ 0xC1,
        tol,
    )?;
    checks.push(check_le(
        "tail-conditional-independence",
        ci,
        1e-10,
        Some(params.seed ^ 0xC1),
        "E[XY] = E[X]E[Y] componentwise across {1} | {2,3}",
        start,
    ));
    let start = Instant::now();
    let a = ComplexMatrix::from_fn(2, 2, |i, j| {
        Complex64::new(0.3 + i as f64, j as f64 - 0.7)
    });
    let idc = definetti::identical_distribution_check(&model, &a, 1, 3, tol)?;
    checks.push(check_le(
        "tail-identical-distribution",
        idc,
        1e-12,
        None,
        "site embeddings agree componentwise, directly and via the action",
        start,
    ));
    Ok(checks)
}

/// Decompose an input state supplied on the wire (the `--state` path of the
/// `definetti` suite). Qubit factors only.
fn decompose_input_state(
    wire: StateWire,
    spec: &RunSpec,
    tol: &ToleranceConfig,
) -> Result<(Vec<CheckResult>, MixtureModelWire)> {
    let start = Instant::now();
    let n = spec.params.sites;
    let d = spec.params.dims.first().copied().unwrap_or(2);
    if d != 2 {
        return Err(Error::InvalidSpec(
            "state decomposition is wired for qubit factors (--dims 2)".into(),
        ));
    }
    let space = ProductSpace::qubits(n)?;
    let sites: Vec<usize> = (1..=n).collect();
    let algebra = ConcreteAlgebra::from_local_algebra(
        &fermi::local_algebra(&sites, &space, tol.eq_tol)?,
        &space,
        tol.eq_tol,
    )?;
    if wire.values.len() != algebra.basis.len() {
        return Err(Error::InvalidSpec(format!(
            "state carries {} values, the level-{n} word basis has {}",
            wire.values.len(),
            algebra.basis.len()
        )));
    }
    let f = StateFunctional::from_wire(wire, algebra)?;
    let config = SolverConfig {
        max_components: spec.max_components.max(1),
        seed: spec.params.seed,
        ..SolverConfig::default()
    };
    let (model, resid) = definetti::decompose(&f, &space, &config, tol)?;
    let check = check_le(
        "decompose-residual",
        resid,
        1e-6,
        Some(config.seed),
        format!("{} components for the input state", model.n_components()),
        start,
    );
    Ok((vec![check], model.to_wire(resid)))
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

/// The four fixed classifier cases.
fn classify_suite(_params: &RunParams, tol: &ToleranceConfig) -> Result<Vec<CheckResult>> {
    let mut checks = Vec::new();
    let qubit = GradedSpace::qubit();
    let cases: Vec<(&str, StateFunctional, TypeLabel)> = vec![
        (
            "classify-trace",
            StateFunctional::normalized_trace(&qubit, tol)?,
            TypeLabel::II1,
        ),
        (
            "classify-pure-even",
            StateFunctional::on_full(&qubit, "pure", ComplexMatrix::diag(&[1.0, 0.0]), tol)?,
            TypeLabel::IInf,
        ),
        (
            "classify-diagonal-character",
            {
                let striv = GradedSpace::trivial(2);
                let alg =
                    vonneumann::generate(&[ComplexMatrix::diag(&[1.0, 2.0])], &striv, tol)?;
                StateFunctional::from_density(
                    alg,
                    "char",
                    ComplexMatrix::diag(&[1.0, 0.0]),
                    tol.eq_tol,
                )?
            },
            TypeLabel::I1,
        ),
        (
            "classify-skew-faithful",
            StateFunctional::on_full(&qubit, "skew", ComplexMatrix::diag(&[0.3, 0.7]), tol)?,
            TypeLabel::III,
        ),
    ];
    for (name, state, expected) in cases {
        let start = Instant::now();
        let (label, preds) = states::classify_product_type(&state, tol, 1e-8)?;
        let matched = if label == expected { 0.0 } else { 1.0 };
        checks.push(check_le(
            name,
            matched,
            0.0,
            None,
            format!(
                "expected {expected:?}, got {label:?} (gns dim {}, commutant dim {})",
                preds.gns_dim, preds.commutant_dim
            ),
            start,
        ));
    }
    Ok(checks)
}

/// Classify an input single-site state supplied on the wire.
fn classify_input_state(
    wire: StateWire,
    tol: &ToleranceConfig,
) -> Result<(Vec<CheckResult>, TypeLabel)> {
    let start = Instant::now();
    let qubit = GradedSpace::qubit();
    let algebra = vonneumann::ConcreteAlgebra::full(&qubit, tol.eq_tol)?;
    if wire.values.len() != algebra.basis.len() {
        return Err(Error::InvalidSpec(format!(
            "state carries {} values, the single-site basis has {}",
            wire.values.len(),
            algebra.basis.len()
        )));
    }
    let f = StateFunctional::from_wire(wire, algebra)?;
    let (label, preds) = states::classify_product_type(&f, tol, 1e-8)?;
    let check = CheckResult {
        name: "classify-input".to_string(),
        passed: true,
        observed: 0.0,
        threshold: 0.0,
        comparison: "<=".to_string(),
        seed: None,
        runtime_ms: start.elapsed().as_secs_f64() * 1e3,
        detail: format!(
            "label {label:?} (multiplicative={}, pure={}, trace={})",
            preds.multiplicative, preds.pure, preds.trace
        ),
    };
    Ok((vec![check], label))
}
