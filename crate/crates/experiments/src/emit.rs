//! Output files. Every file starts with `#` comment lines carrying the
//! schema version, tool version and the resolved config; floats are written
//! with 17 significant digits so values survive a round trip.
//!
//! Records CSV columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | seed | seed the orbit was drawn from |
//! | requested_seed | seed named by the config |
//! | n | horizon `N` (return count `K` for bb runs) |
//! | statistic | the variant's statistic; empty when aborted |
//! | secondary | companion value (main1 statistic for dispersion) |
//! | m | `m(N,E,x)` |
//! | r_enm | `R_{E,N+m}` |
//! | max_value | largest observable value over the horizon |
//! | sum | untrimmed Birkhoff sum over the horizon |
//! | trim_r | number of trimmed terms |
//! | removed | total removed by trimming and the `c·m` term |
//! | crossing | dispersion: first `N'` with `max_{k≤N'+m}/N' > 1` |
//! | bits | random bits consumed |
//! | engine | exact or float |
//! | rigorous | false for float rows |
//! | replaced | seed was replaced after an abort |
//! | aborted | no value could be computed |
//! | error | reason for the abort |

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::aggregate::SummaryRow;
use crate::config::{EngineKind, ExperimentConfig, Format};
use crate::laws::LawRow;
use crate::run::{ResultRecord, RunOutput};

pub const SCHEMA_VERSION: &str = "erglim-results/1";
pub const TOOL_VERSION: &str = concat!("erglim ", env!("CARGO_PKG_VERSION"));

pub const RECORD_COLUMNS: [&str; 18] = [
    "seed",
    "requested_seed",
    "n",
    "statistic",
    "secondary",
    "m",
    "r_enm",
    "max_value",
    "sum",
    "trim_r",
    "removed",
    "crossing",
    "bits",
    "engine",
    "rigorous",
    "replaced",
    "aborted",
    "error",
];

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "n",
    "median",
    "q25",
    "q75",
    "predicted",
    "mean",
    "iqr",
    "min",
    "max",
    "count",
    "aborted_fraction",
];

pub const LAW_COLUMNS: [&str; 8] = [
    "threshold",
    "samples",
    "aborted",
    "count",
    "empirical",
    "predicted",
    "sigma",
    "z",
];

#[derive(Debug, Error)]
pub enum EmitError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad value '{value}' in column {column}")]
    Parse { column: &'static str, value: String },
}

/// 17 significant digits; `NaN` and infinities spelled out.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn opt_f(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn opt_u(x: Option<u64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Comment lines opening every file.
pub fn header_lines(cfg: &ExperimentConfig, diagnostics: &[String]) -> Vec<String> {
    let engine = match cfg.engine {
        EngineKind::Exact => "exact (rigorous)",
        EngineKind::Float => "float (non-rigorous: double precision, drifts from the true orbit)",
    };
    let mut h = vec![
        format!("schema: {SCHEMA_VERSION}"),
        format!("tool: {TOOL_VERSION}"),
        format!("config: {}", cfg.summary_line()),
        format!("engine: {engine}"),
    ];
    h.extend(diagnostics.iter().map(|d| format!("diagnostic: {d}")));
    h
}

fn write_comments<W: Write>(w: &mut W, header: &[String]) -> io::Result<()> {
    for line in header {
        writeln!(w, "# {line}")?;
    }
    Ok(())
}

fn record_fields(r: &ResultRecord) -> Vec<String> {
    vec![
        r.seed.to_string(),
        r.requested_seed.to_string(),
        r.n.to_string(),
        opt_f(r.statistic),
        opt_f(r.secondary),
        opt_u(r.m),
        opt_u(r.r_enm),
        opt_f(r.max_value),
        opt_f(r.sum),
        r.trim_r.to_string(),
        opt_f(r.removed),
        opt_u(r.crossing),
        r.bits.to_string(),
        r.engine.to_string(),
        r.rigorous.to_string(),
        r.replaced.to_string(),
        r.aborted.to_string(),
        r.error.clone().unwrap_or_default(),
    ]
}

pub fn write_records_csv<W: Write>(mut w: W, header: &[String], records: &[ResultRecord]) -> Result<(), EmitError> {
    write_comments(&mut w, header)?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(RECORD_COLUMNS)?;
    for r in records {
        cw.write_record(record_fields(r))?;
    }
    cw.flush()?;
    Ok(())
}

fn parse<T: std::str::FromStr>(column: &'static str, s: &str) -> Result<T, EmitError> {
    s.parse().map_err(|_| EmitError::Parse {
        column,
        value: s.to_string(),
    })
}

fn parse_opt<T: std::str::FromStr>(column: &'static str, s: &str) -> Result<Option<T>, EmitError> {
    if s.is_empty() {
        Ok(None)
    } else {
        parse(column, s).map(Some)
    }
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<ResultRecord>, EmitError> {
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let f = |i: usize| row.get(i).unwrap_or("");
        let engine: EngineKind = f(13).parse().map_err(|_| EmitError::Parse {
            column: "engine",
            value: f(13).to_string(),
        })?;
        out.push(ResultRecord {
            seed: parse("seed", f(0))?,
            requested_seed: parse("requested_seed", f(1))?,
            n: parse("n", f(2))?,
            statistic: parse_opt("statistic", f(3))?,
            secondary: parse_opt("secondary", f(4))?,
            m: parse_opt("m", f(5))?,
            r_enm: parse_opt("r_enm", f(6))?,
            max_value: parse_opt("max_value", f(7))?,
            sum: parse_opt("sum", f(8))?,
            trim_r: parse("trim_r", f(9))?,
            removed: parse_opt("removed", f(10))?,
            crossing: parse_opt("crossing", f(11))?,
            bits: parse("bits", f(12))?,
            engine,
            rigorous: parse("rigorous", f(14))?,
            replaced: parse("replaced", f(15))?,
            aborted: parse("aborted", f(16))?,
            error: Some(f(17).to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(out)
}

/// JSON lines: one record per line after the `#` header.
pub fn write_records_jsonl<W: Write>(mut w: W, header: &[String], records: &[ResultRecord]) -> Result<(), EmitError> {
    write_comments(&mut w, header)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_jsonl<R: Read>(r: R) -> Result<Vec<ResultRecord>, EmitError> {
    let mut out = Vec::new();
    for line in BufReader::new(r).lines() {
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_summary_csv<W: Write>(mut w: W, header: &[String], rows: &[SummaryRow]) -> Result<(), EmitError> {
    write_comments(&mut w, header)?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        cw.write_record([
            r.n.to_string(),
            fmt_f64(r.median),
            fmt_f64(r.q25),
            fmt_f64(r.q75),
            opt_f(r.predicted),
            fmt_f64(r.mean),
            fmt_f64(r.iqr),
            fmt_f64(r.min),
            fmt_f64(r.max),
            r.count.to_string(),
            fmt_f64(r.aborted_fraction),
        ])?;
    }
    cw.flush()?;
    Ok(())
}

pub fn write_laws_csv<W: Write>(mut w: W, header: &[String], rows: &[LawRow]) -> Result<(), EmitError> {
    write_comments(&mut w, header)?;
    let mut cw = csv::Writer::from_writer(w);
    cw.write_record(LAW_COLUMNS)?;
    for r in rows {
        cw.write_record([
            r.threshold.to_string(),
            r.samples.to_string(),
            r.aborted.to_string(),
            r.count.to_string(),
            fmt_f64(r.empirical),
            fmt_f64(r.predicted),
            fmt_f64(r.sigma),
            fmt_f64(r.z),
        ])?;
    }
    cw.flush()?;
    Ok(())
}

/// Writes the records (or law table) and the per-`N` summary into `dir`,
/// named after the config. Returns the paths written.
pub fn emit(
    cfg: &ExperimentConfig,
    out: &RunOutput,
    summary: Option<&[SummaryRow]>,
    dir: &Path,
) -> Result<Vec<PathBuf>, EmitError> {
    fs::create_dir_all(dir)?;
    let header = header_lines(cfg, &out.diagnostics);
    let mut paths = Vec::new();
    if cfg.variant.is_law() {
        let p = dir.join(format!("{}.laws.csv", cfg.name));
        write_laws_csv(BufWriter::new(File::create(&p)?), &header, &out.laws)?;
        paths.push(p);
        return Ok(paths);
    }
    let p = match cfg.format {
        Format::Csv => {
            let p = dir.join(format!("{}.records.csv", cfg.name));
            write_records_csv(BufWriter::new(File::create(&p)?), &header, &out.records)?;
            p
        }
        Format::Jsonl => {
            let p = dir.join(format!("{}.records.jsonl", cfg.name));
            write_records_jsonl(BufWriter::new(File::create(&p)?), &header, &out.records)?;
            p
        }
    };
    paths.push(p);
    if let Some(rows) = summary {
        let p = dir.join(format!("{}.summary.csv", cfg.name));
        write_summary_csv(BufWriter::new(File::create(&p)?), &header, rows)?;
        paths.push(p);
    }
    Ok(paths)
}
