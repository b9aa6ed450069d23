use std::path::PathBuf;

use clap::Args;
use erglim_experiments::aggregate::{aggregate, distance_nonincreasing, SummaryRow};
use erglim_experiments::config::{preset, ConfigError, RawConfig, PRESETS};
use erglim_experiments::{emit, paper_claim, predicted, run_experiment, ExperimentConfig, RunOutput};
use toml::{Table, Value};

use crate::{EXIT_CONFIG, EXIT_ORBIT};

/// Config keys (TOML): name, map, observable, variant, n_grid, seeds
/// (a list or `{ start, count }`), engine, start, threshold_power, bit_cap,
/// and `[output]` with dir and format. Flags override the file or preset.
#[derive(Args, Debug)]
pub struct ExperimentArgs {
    /// TOML config file.
    config: Option<PathBuf>,
    /// Start from a built-in preset instead of a file.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    #[arg(long)]
    name: Option<String>,
    /// bcf or ecf.
    #[arg(long)]
    map: Option<String>,
    /// digits, gtilde, power:s or tlogt.
    #[arg(long)]
    observable: Option<String>,
    /// main1, main2, h_slow, no_trim, h_fast, intermediate:u, dispersion,
    /// tail_law, phi_law or bb.
    #[arg(long)]
    variant: Option<String>,
    /// Half-open range `a..b`, or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated horizons; `1e5` style is accepted.
    #[arg(long)]
    n_grid: Option<String>,
    /// exact or float.
    #[arg(long)]
    engine: Option<String>,
    /// uniform_E or uniform_01.
    #[arg(long)]
    start: Option<String>,
    #[arg(long)]
    threshold_power: Option<f64>,
    #[arg(long)]
    bit_cap: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory (default `results`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    format: Option<String>,
    /// List the presets and exit.
    #[arg(long)]
    list_presets: bool,
}

pub(crate) fn parse_int(s: &str) -> Result<u64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        _ => Err(format!("'{s}' is not a nonnegative integer")),
    }
}

fn parse_list(s: &str) -> Result<Vec<u64>, String> {
    s.split(',').filter(|x| !x.trim().is_empty()).map(parse_int).collect()
}

fn seeds_value(s: &str) -> Result<Value, String> {
    if let Some((a, b)) = s.split_once("..") {
        let (a, b) = (parse_int(a)?, parse_int(b)?);
        if b <= a {
            return Err(format!("empty seed range '{s}'"));
        }
        let mut t = Table::new();
        t.insert("start".into(), Value::Integer(a as i64));
        t.insert("count".into(), Value::Integer((b - a) as i64));
        return Ok(Value::Table(t));
    }
    Ok(Value::Array(parse_list(s)?.into_iter().map(|v| Value::Integer(v as i64)).collect()))
}

fn field_err(field: &'static str) -> impl Fn(String) -> ConfigError {
    move |msg| ConfigError::Field { field, msg }
}

/// File or preset, then flags on top, then the usual validation.
fn resolve(a: &ExperimentArgs) -> Result<ExperimentConfig, ConfigError> {
    let mut t: Table = match (&a.config, &a.preset) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Parse(format!("{}: {e}", p.display())))?;
            text.parse().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?
        }
        (None, Some(name)) => {
            let mut raw = preset(name)?.to_raw();
            // output options come from flags, not from the preset
            raw.output = None;
            Table::try_from(raw).map_err(|e| ConfigError::Parse(e.to_string()))?
        }
        (None, None) => Table::new(),
    };
    let mut set = |k: &str, v: Value| {
        t.insert(k.to_string(), v);
    };
    for (k, v) in [
        ("name", &a.name),
        ("map", &a.map),
        ("observable", &a.observable),
        ("variant", &a.variant),
        ("engine", &a.engine),
        ("start", &a.start),
    ] {
        if let Some(v) = v {
            set(k, Value::String(v.clone()));
        }
    }
    if let Some(s) = &a.seeds {
        set("seeds", seeds_value(s).map_err(field_err("seeds"))?);
    }
    if let Some(s) = &a.n_grid {
        let v = parse_list(s).map_err(field_err("n_grid"))?;
        set("n_grid", Value::Array(v.into_iter().map(|x| Value::Integer(x as i64)).collect()));
    }
    if let Some(p) = a.threshold_power {
        set("threshold_power", Value::Float(p));
    }
    if let Some(c) = a.bit_cap {
        set("bit_cap", Value::Integer(c as i64));
    }
    if a.out.is_some() || a.format.is_some() {
        let out = t.entry("output").or_insert_with(|| Value::Table(Table::new()));
        let Value::Table(out) = out else {
            return Err(ConfigError::Field {
                field: "output",
                msg: "must be a table".into(),
            });
        };
        if let Some(d) = &a.out {
            out.insert("dir".into(), Value::String(d.display().to_string()));
        }
        if let Some(f) = &a.format {
            out.insert("format".into(), Value::String(f.clone()));
        }
    }
    let raw: RawConfig = Value::Table(t).try_into().map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    ExperimentConfig::from_raw(raw)
}

pub fn run(a: ExperimentArgs) -> u8 {
    if a.list_presets {
        for p in PRESETS {
            if let Ok(c) = preset(p) {
                println!("{p:<20} {}", c.summary_line());
            }
        }
        return 0;
    }
    let cfg = match resolve(&a) {
        Ok(c) => c,
        Err(e) => {
            match e.field_name() {
                Some(f) => eprintln!("config error in field `{f}`: {e}"),
                None => eprintln!("config error: {e}"),
            }
            return EXIT_CONFIG;
        }
    };
    let workers = a
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    eprintln!("# {}", cfg.summary_line());
    let out = match run_experiment(&cfg, workers) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let summary = if cfg.variant.is_law() { None } else { aggregate(&out.records, predicted(&cfg)).ok() };
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("results"));
    match emit(&cfg, &out, summary.as_deref(), &dir) {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    }
    report(&cfg, &out, summary.as_deref())
}

fn report(cfg: &ExperimentConfig, out: &RunOutput, summary: Option<&[SummaryRow]>) -> u8 {
    for s in &out.substitutions {
        println!(
            "substituted seed {} -> {}: {}",
            s.requested_seed, s.replacement_seed, s.reason
        );
    }
    for d in &out.diagnostics {
        println!("diagnostic: {d}");
    }
    if cfg.variant.is_law() {
        println!("{:>10} {:>9} {:>12} {:>12} {:>7}", "threshold", "count", "empirical", "predicted", "z");
        for r in &out.laws {
            println!(
                "{:>10} {:>9} {:>12.6e} {:>12.6e} {:>7.2}",
                r.threshold, r.count, r.empirical, r.predicted, r.z
            );
        }
        return 0;
    }
    let Some(rows) = summary else {
        println!("no records");
        return EXIT_ORBIT;
    };
    println!("{:>10} {:>6} {:>12} {:>12} {:>12} {:>10}", "N", "count", "median", "IQR", "predicted", "aborted");
    for r in rows {
        println!(
            "{:>10} {:>6} {:>12.5} {:>12.5} {:>12} {:>10.3}",
            r.n,
            r.count,
            r.median,
            r.iqr,
            r.predicted.map_or("-".into(), |p| format!("{p}")),
            r.aborted_fraction
        );
    }
    if let (Some(p), Some(last)) = (predicted(cfg), rows.last()) {
        println!(
            "|median - {p}| non-increasing across the grid: {}",
            if distance_nonincreasing(rows) { "yes" } else { "no" }
        );
        if let Some(claim) = paper_claim(cfg).filter(|c| *c != p) {
            let (dp, dc) = ((last.median - p).abs(), (last.median - claim).abs());
            let supported = if dp < dc { p } else { claim };
            println!(
                "verdict at N = {}: median {:.4} is closer to {} (derived {p}, published {claim})",
                last.n, last.median, supported
            );
        }
    }
    if rows.iter().all(|r| r.count == 0) {
        return EXIT_ORBIT;
    }
    0
}
