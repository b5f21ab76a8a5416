//! `grald` — run the verification suites from the command line.
//!
//! Exit status: 0 when every check passed, 1 when any verdict failed or a
//! computation error was raised, 2 on usage errors (bad flags, unreadable
//! or malformed input files).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use grald::suites::{self, RunParams, RunSpec, SuiteKind};
use grald::{Error, ToleranceConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SuiteArg {
    Car,
    Twist,
    Commutant,
    Symmetry,
    Definetti,
    Classify,
    All,
}

impl From<SuiteArg> for SuiteKind {
    fn from(s: SuiteArg) -> Self {
        match s {
            SuiteArg::Car => SuiteKind::Car,
            SuiteArg::Twist => SuiteKind::Twist,
            SuiteArg::Commutant => SuiteKind::Commutant,
            SuiteArg::Symmetry => SuiteKind::Symmetry,
            SuiteArg::Definetti => SuiteKind::Definetti,
            SuiteArg::Classify => SuiteKind::Classify,
            SuiteArg::All => SuiteKind::All,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Table,
}

/// Workbench for Z2-graded operator algebras: anticommutation relations,
/// twisted commutants, permutation symmetry, and mixture decompositions.
#[derive(Parser, Debug)]
#[command(name = "grald", version, about)]
struct Cli {
    /// Suite to run.
    #[arg(value_enum)]
    suite: SuiteArg,

    /// Number of sites for site-indexed checks.
    #[arg(long, default_value_t = 8)]
    sites: usize,

    /// Factor dimensions cycled through by randomized checks.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4])]
    dims: Vec<usize>,

    /// Randomized trials per check.
    #[arg(long, default_value_t = 100)]
    trials: usize,

    /// Base seed; every random draw in a run derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Residuals at or below this count as equal.
    #[arg(long = "tol-eq", default_value_t = 1e-10)]
    tol_eq: f64,

    /// Relative singular-value cutoff for rank decisions.
    #[arg(long = "tol-rank", default_value_t = 1e-8)]
    tol_rank: f64,

    /// Write the JSON report here (in addition to stdout output).
    #[arg(long)]
    report: Option<PathBuf>,

    /// Stdout format.
    #[arg(long, value_enum, default_value_t = FormatArg::Table)]
    format: FormatArg,

    /// JSON state file: decomposition target (definetti) or classification
    /// input (classify).
    #[arg(long)]
    state: Option<PathBuf>,

    /// Component cap for the decomposition solver.
    #[arg(long = "max-components", default_value_t = 4)]
    max_components: usize,

    /// Write the recovered mixture model here (definetti with --state).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn execute(cli: Cli) -> Result<bool, (u8, String)> {
    let usage = |msg: String| (2u8, msg);
    let state = match &cli.state {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| usage(format!("malformed state in {}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    if cli.dims.is_empty() || cli.dims.iter().any(|&d| d == 0) {
        return Err(usage("--dims needs at least one nonzero dimension".into()));
    }
    if !(cli.tol_eq > 0.0) || !(cli.tol_rank > 0.0) {
        return Err(usage("tolerances must be positive".into()));
    }
    let spec = RunSpec {
        suite: cli.suite.into(),
        params: RunParams {
            sites: cli.sites,
            dims: cli.dims.clone(),
            trials: cli.trials,
            seed: cli.seed,
        },
        tolerances: ToleranceConfig {
            eq_tol: cli.tol_eq,
            rank_tol: cli.tol_rank,
            ..ToleranceConfig::default()
        },
        state,
        max_components: cli.max_components,
    };
    let report = suites::run(&spec).map_err(|e| match e {
        Error::InvalidSpec(msg) => (2u8, format!("invalid request: {msg}")),
        other => (1u8, format!("check raised: {other}")),
    })?;

    match cli.format {
        FormatArg::Table => print!("{}", report.to_table()),
        FormatArg::Json => println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("report serializes")
        ),
    }
    if let Some(path) = &cli.report {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        std::fs::write(path, json)
            .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
    }
    if let Some(path) = &cli.out {
        match &report.model {
            Some(model) => {
                let json = serde_json::to_string_pretty(model).expect("model serializes");
                std::fs::write(path, json)
                    .map_err(|e| usage(format!("cannot write {}: {e}", path.display())))?;
            }
            None => {
                return Err(usage(
                    "--out needs a recovered model; run `definetti` with --state".into(),
                ))
            }
        }
    }
    Ok(report.all_passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err((code, msg)) => {
            eprintln!("grald: {msg}");
            ExitCode::from(code)
        }
    }
}
