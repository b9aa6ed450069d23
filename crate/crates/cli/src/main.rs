//! `erglim`: orbits, theory tables, experiments and self-validation.
//!
//! Exit codes: 0 success, 1 validation failure, 2 orbit could not be
//! continued (precision exhausted or a cylinder boundary hit), 3 the
//! trimming order `W` could not be classified, 4 configuration or usage
//! error.

mod experiment;
mod orbit;
mod theory;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const EXIT_VALIDATE: u8 = 1;
pub const EXIT_ORBIT: u8 = 2;
pub const EXIT_INCONCLUSIVE: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "erglim", version, about = "Trimmed ergodic sums for backward and even-integer continued fractions")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the digit expansion and return-time ledger of one orbit.
    Orbit(orbit::OrbitArgs),
    /// Dump theory tables (n, mu_tail_A, w, alpha, beta, a, b) and model constants.
    Theory(theory::TheoryArgs),
    /// Run a Monte Carlo experiment from a config file, a preset, or flags.
    Experiment(experiment::ExperimentArgs),
    /// Run the invariant suites; nonzero exit on any failure.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// fast (under a minute) or full (adds the 10^6-sample distribution tests).
    #[arg(default_value = "fast")]
    level: String,
    /// Corrupt a named invariant on purpose, to check that it is caught.
    #[arg(long, env = "ERGLIM_INJECT_FAULT", hide = true)]
    inject_fault: Option<String>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where tabular output goes: a file or stdout.
pub fn open_out(path: &Option<PathBuf>) -> io::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.cmd {
        Command::Orbit(a) => orbit::run(a),
        Command::Theory(a) => theory::run(a),
        Command::Experiment(a) => experiment::run(a),
        Command::Validate(a) => validate(a),
    };
    ExitCode::from(code)
}

fn validate(a: ValidateArgs) -> u8 {
    use erglim_experiments::validate::{validate, Level};
    let level: Level = match a.level.parse() {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let report = match validate(level, a.inject_fault.as_deref()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for c in &report.checks {
        eprintln!(
            "{} {:<22} {:>7.2}s  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.seconds,
            c.detail
        );
    }
    let json = serde_json::json!({
        "schema": erglim_experiments::emit::SCHEMA_VERSION,
        "tool": erglim_experiments::emit::TOOL_VERSION,
        "report": report,
        "passed": report.passed(),
    });
    let write = open_out(&a.out).and_then(|mut w| {
        writeln!(w, "{}", serde_json::to_string_pretty(&json).expect("report serializes"))?;
        w.flush()
    });
    if let Err(e) = write {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    if report.passed() {
        eprintln!("validate {}: all {} checks passed in {:.1}s", a.level, report.checks.len(), report.seconds);
        0
    } else {
        eprintln!("validate {}: FAILED {}", a.level, report.failed().join(", "));
        EXIT_VALIDATE
    }
}
