//! `sotif`: validate documents, compose triggering conditions, generate and
//! run test matrices, classify conditions and search thresholds.
//!
//! Exit codes: 0 success, 1 validation errors, 2 usage error, 3 infeasible
//! constraints, 4 I/O or corruption.

mod commands;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sotif_core::catalog::Kind;

#[derive(Debug, Parser)]
#[command(name = "sotif", version, about = "Triggering-condition validation pipeline")]
pub struct Cli {
    /// Catalog root directory.
    #[arg(long, global = true, env = "SOTIF_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Seed for pairwise generation.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Simulation worker threads [default: available parallelism].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Machine-readable JSON on stdout; diagnostics go to stderr.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DocKind {
    Ontology,
    Scenario,
    Tc,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a document and print its validation report.
    Validate {
        kind: DocKind,
        file: PathBuf,
        /// Ontology to check scenarios and conditions against [default: the
        /// catalog's, else the bundled one].
        #[arg(long)]
        ontology: Option<PathBuf>,
    },
    /// Merge triggering conditions into one effective constraint set.
    Compose {
        #[arg(long = "tc", required = true, num_args = 1..)]
        tcs: Vec<String>,
    },
    /// Generate a test matrix for a scenario.
    Gen(GenArgs),
    /// Simulate every case of a matrix.
    Run {
        #[arg(long)]
        matrix: PathBuf,
        /// Write one CSV trace per case here.
        #[arg(long)]
        traces: Option<PathBuf>,
        /// Results file [default: stdout].
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Compare condition runs against nominal runs.
    Classify {
        #[arg(long)]
        nominal: PathBuf,
        #[arg(long = "tc-results")]
        tc_results: PathBuf,
        /// Tolerable window JSON [default: min_ttc 1.5 s, no MSDV].
        #[arg(long)]
        windows: Option<PathBuf>,
    },
    /// Bisect one parameter for the verdict boundary.
    Threshold(ThresholdArgs),
    /// Manage the catalog.
    #[command(subcommand)]
    Catalog(CatalogCommand),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long = "tc", num_args = 1..)]
    pub tcs: Vec<String>,
    /// Levels per free parameter.
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Per-parameter override, `path=k`.
    #[arg(long = "level", value_parser = parse_level)]
    pub level: Vec<(String, usize)>,
    /// Pairwise reduction instead of the full grid.
    #[arg(long)]
    pub pairwise: bool,
    /// Matrix file [default: stdout].
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ThresholdArgs {
    #[arg(long)]
    pub scenario: String,
    #[arg(long)]
    pub param: String,
    #[arg(long, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long)]
    pub tol: f64,
    /// Conditions applied before the other parameters are fixed.
    #[arg(long = "tc", num_args = 1..)]
    pub tcs: Vec<String>,
    /// Pin another parameter, `path=value`; the rest sit at their midpoints.
    #[arg(long = "fix", value_parser = parse_fix)]
    pub fix: Vec<(String, f64)>,
    #[arg(long)]
    pub windows: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CatalogCommand {
    /// Create an empty catalog.
    Init,
    /// Validate a document and add it.
    Add {
        kind: Kind,
        file: PathBuf,
        /// Id for ontologies, which carry none of their own.
        #[arg(long)]
        id: Option<String>,
    },
    /// List entries, sorted by kind then id.
    List {
        #[arg(long)]
        kind: Option<Kind>,
        #[arg(long = "odd-tag")]
        odd_tag: Option<String>,
        #[arg(long = "element-kind")]
        element_kind: Option<String>,
    },
    /// Print a stored document.
    Get { kind: Kind, id: String },
    /// Rescan the catalog directories and rewrite the index.
    Rebuild,
}

fn parse_level(s: &str) -> Result<(String, usize), String> {
    let (p, k) = s.split_once('=').ok_or("expected `path=k`")?;
    let k = k.parse().map_err(|e| format!("`{k}`: {e}"))?;
    Ok((p.to_string(), k))
}

fn parse_fix(s: &str) -> Result<(String, f64), String> {
    let (p, v) = s.split_once('=').ok_or("expected `path=value`")?;
    let v = v.parse().map_err(|e| format!("`{v}`: {e}"))?;
    Ok((p.to_string(), v))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
