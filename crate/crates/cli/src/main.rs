//! `hqmem` — simulate multi-time probing of open quantum dynamics, analyze
//! the resulting statistics families for hidden memory, and certify whether
//! a family admits a memoryless model.

mod render;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use hqmem::catalog::{self, ReferenceCircuit, TableKind};
use hqmem::qrf::{certify, FitConfig};
use hqmem::quantum::{all_pattern_statistics, run_schedule, DilatedProcess, ProbeSchedule};
use hqmem::stats::{witness_hidden_memory, StatisticsFamily, DEFAULT_TOL};
use render::Format;

#[derive(Parser)]
#[command(
    name = "hqmem",
    version,
    about = "Multi-time measurement statistics: simulate, analyze, certify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct OutputOpts {
    /// Output format
    #[arg(long, value_enum, default_value = "table")]
    format: Format,
    /// Write the output to a file instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a circuit: one probing schedule, or the complete family
    Simulate {
        /// Circuit JSON file
        circuit: PathBuf,
        /// Probing pattern such as 1011, earliest time leftmost; omit to
        /// compute every pattern
        #[arg(long)]
        schedule: Option<String>,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Run every hidden-memory check on a statistics family
    Analyze {
        /// Family JSON file
        family: PathBuf,
        /// Tolerance for all probability comparisons
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Decide memorylessness: witness checks plus a numerical model fit
    Certify {
        /// Family JSON file
        family: PathBuf,
        /// Number of independent optimizer starts
        #[arg(long, default_value_t = 32)]
        starts: usize,
        /// Seed for the deterministic per-start generators
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Stinespring ancilla dimension; defaults to the outcome dimension
        /// squared
        #[arg(long)]
        ancilla_dim: Option<usize>,
        /// Worker threads for the fit; the result is thread-count independent
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Tolerance for the witness checks
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Rebuild both reference circuits and verify every frozen table
    Reproduce {
        /// Tolerance for every comparison
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
        #[command(flatten)]
        output: OutputOpts,
    },
    /// Write a built-in reference circuit as circuit JSON
    ExportCircuit {
        /// Which circuit to export
        #[arg(value_enum)]
        name: CircuitName,
        /// Write to a file instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum CircuitName {
    HiddenMemory,
    IncompatibleStatistics,
}

impl CircuitName {
    fn circuit(self) -> ReferenceCircuit {
        match self {
            CircuitName::HiddenMemory => ReferenceCircuit::HiddenMemory,
            CircuitName::IncompatibleStatistics => ReferenceCircuit::IncompatibleStatistics,
        }
    }
}

/// A command failure carrying its process exit code: 2 for bad input, 3 for
/// an incomplete family, 4 for internal invariant violations.
struct Failure {
    code: u8,
    message: String,
}

impl From<hqmem::Error> for Failure {
    fn from(err: hqmem::Error) -> Self {
        let code = match &err {
            hqmem::Error::IncompleteFamily { .. } => 3,
            hqmem::Error::Internal { .. } => 4,
            _ => 2,
        };
        Failure {
            code,
            message: err.to_string(),
        }
    }
}

fn input_error(path: &Path, detail: impl std::fmt::Display) -> Failure {
    Failure {
        code: 2,
        message: format!("{}: {detail}", path.display()),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| input_error(path, e))?;
    serde_json::from_str(&text).map_err(|e| input_error(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure {
        code: 4,
        message: format!("serialization failed: {e}"),
    })?;
    text.push('\n');
    Ok(text)
}

fn emit(text: String, out: &Option<PathBuf>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| input_error(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(failure) => {
            eprintln!("error: {}", failure.message);
            ExitCode::from(failure.code)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, Failure> {
    match command {
        Command::Simulate {
            circuit,
            schedule,
            output,
        } => cmd_simulate(&circuit, schedule.as_deref(), &output),
        Command::Analyze {
            family,
            tol,
            output,
        } => cmd_analyze(&family, tol, &output),
        Command::Certify {
            family,
            starts,
            seed,
            ancilla_dim,
            threads,
            tol,
            output,
        } => cmd_certify(&family, starts, seed, ancilla_dim, threads, tol, &output),
        Command::Reproduce { tol, output } => cmd_reproduce(tol, &output),
        Command::ExportCircuit { name, out } => {
            let text = to_json(&name.circuit().build())?;
            emit(text, &out)?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn cmd_simulate(
    circuit_path: &Path,
    schedule: Option<&str>,
    output: &OutputOpts,
) -> Result<ExitCode, Failure> {
    let process: DilatedProcess = read_json(circuit_path)?;
    let text = match schedule {
        Some(pattern) => {
            let schedule = ProbeSchedule::from_pattern(pattern)?;
            let dist = run_schedule(&process, &schedule)?;
            match output.format {
                Format::Table => render::distribution_table(&dist),
                Format::Csv => render::distribution_csv(&dist),
                Format::Json => to_json(&dist)?,
            }
        }
        None => {
            let family = all_pattern_statistics(&process)?;
            match output.format {
                Format::Table => render::family_table(&family),
                Format::Csv => render::family_csv(&family),
                Format::Json => to_json(&family)?,
            }
        }
    };
    emit(text, &output.out)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(family_path: &Path, tol: f64, output: &OutputOpts) -> Result<ExitCode, Failure> {
    let family: StatisticsFamily = read_json(family_path)?;
    family.require_complete()?;
    let report = witness_hidden_memory(&family, tol)?;
    let text = match output.format {
        Format::Table => render::analysis_table(&report),
        Format::Csv => render::analysis_csv(&report),
        Format::Json => to_json(&report)?,
    };
    emit(text, &output.out)?;
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_certify(
    family_path: &Path,
    starts: usize,
    seed: u64,
    ancilla_dim: Option<usize>,
    threads: usize,
    tol: f64,
    output: &OutputOpts,
) -> Result<ExitCode, Failure> {
    let family: StatisticsFamily = read_json(family_path)?;
    family.require_complete()?;
    let config = FitConfig {
        n_starts: starts,
        seed,
        ancilla_dim,
        ..FitConfig::default()
    };
    let report = certify(&family, &config, threads, tol)?;
    let text = match output.format {
        Format::Table => render::certify_table(&report),
        Format::Csv => render::certify_csv(&report),
        Format::Json => to_json(&report)?,
    };
    emit(text, &output.out)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct TableCheck {
    circuit: String,
    label: String,
    pattern: String,
    kind: String,
    rows: usize,
    max_deviation: f64,
    pass: bool,
}

#[derive(Serialize)]
struct VerdictCheck {
    circuit: String,
    expected: String,
    actual: String,
    pass: bool,
}

#[derive(Serialize)]
struct ReproduceReport {
    tol: f64,
    tables: Vec<TableCheck>,
    verdicts: Vec<VerdictCheck>,
    all_pass: bool,
}

fn cmd_reproduce(tol: f64, output: &OutputOpts) -> Result<ExitCode, Failure> {
    let mut report = ReproduceReport {
        tol,
        tables: Vec::new(),
        verdicts: Vec::new(),
        all_pass: true,
    };
    for table in oracle_tables_sorted() {
        let computed = table.computed_f64()?;
        let expected = table.expected_f64();
        let max_deviation = computed
            .iter()
            .zip(&expected)
            .map(|(c, e)| (c - e).abs())
            .fold(0.0, f64::max);
        let pass = computed.len() == expected.len() && max_deviation <= tol;
        report.all_pass &= pass;
        report.tables.push(TableCheck {
            circuit: table.circuit.name().to_string(),
            label: table.label.clone(),
            pattern: table.pattern.clone(),
            kind: match table.kind {
                TableKind::Joint => "joint".to_string(),
                TableKind::Conditional { target_time } => {
                    format!("conditional at t{}", target_time + 1)
                }
            },
            rows: expected.len(),
            max_deviation,
            pass,
        });
    }
    for circuit in ReferenceCircuit::ALL {
        let family = all_pattern_statistics(&circuit.build())?;
        let analysis = witness_hidden_memory(&family, tol)?;
        let expected = circuit.expected_verdict();
        let pass = analysis.verdict == expected;
        report.all_pass &= pass;
        report.verdicts.push(VerdictCheck {
            circuit: circuit.name().to_string(),
            expected: expected.to_string(),
            actual: analysis.verdict.to_string(),
            pass,
        });
    }
    let text = match output.format {
        Format::Table => reproduce_table(&report),
        Format::Csv => reproduce_csv(&report),
        Format::Json => to_json(&report)?,
    };
    emit(text, &output.out)?;
    Ok(if report.all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

/// Tables grouped by circuit, then by pattern, for stable readable output.
fn oracle_tables_sorted() -> Vec<catalog::OracleTable> {
    let mut tables = catalog::oracle_tables();
    tables.sort_by(|a, b| {
        (a.circuit.name(), &a.pattern, &a.label).cmp(&(b.circuit.name(), &b.pattern, &b.label))
    });
    tables
}

fn reproduce_table(report: &ReproduceReport) -> String {
    let mut out = String::new();
    for check in &report.tables {
        out.push_str(&format!(
            "{}  {} ({}, {} rows)  max deviation {}\n",
            if check.pass { "PASS" } else { "FAIL" },
            check.label,
            check.kind,
            check.rows,
            render::sig12(check.max_deviation),
        ));
    }
    for check in &report.verdicts {
        out.push_str(&format!(
            "{}  {}  verdict {}",
            if check.pass { "PASS" } else { "FAIL" },
            check.circuit,
            check.actual,
        ));
        if !check.pass {
            out.push_str(&format!(" (expected {})", check.expected));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "{} ({} tables, {} verdicts, tolerance {})\n",
        if report.all_pass {
            "ALL CHECKS PASS"
        } else {
            "CHECKS FAILED"
        },
        report.tables.len(),
        report.verdicts.len(),
        render::sig12(report.tol),
    ));
    out
}

fn reproduce_csv(report: &ReproduceReport) -> String {
    let mut out = String::from("circuit,check,pattern,max_deviation,pass\n");
    for check in &report.tables {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            check.circuit,
            check.label.replace(',', ";"),
            check.pattern,
            render::sig12(check.max_deviation),
            check.pass,
        ));
    }
    for check in &report.verdicts {
        out.push_str(&format!(
            "{},verdict {},,,{}\n",
            check.circuit, check.actual, check.pass
        ));
    }
    out
}
