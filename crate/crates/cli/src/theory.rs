use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use erglim_core::theory::{classify_w, Norming, TailModel, TheoryTable, WOutcome};
use erglim_core::{MapId, ObservableKind, ObservableSpec};
use erglim_experiments::emit::{fmt_f64, TOOL_VERSION};

use crate::{open_out, EXIT_CONFIG, EXIT_INCONCLUSIVE};

pub const THEORY_SCHEMA: &str = "erglim-theory/1";

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// Only `dump` is supported; it is also the default.
    #[arg(default_value = "dump")]
    action: String,
    /// Restrict to one map.
    #[arg(long)]
    map: Option<String>,
    /// One observable instead of the standard models (bcf digits, ecf digits,
    /// ecf gtilde, bcf power:2).
    #[arg(long)]
    observable: Option<String>,
    #[arg(long, default_value_t = 100_000_000, value_parser = crate::experiment::parse_int)]
    n_max: u64,
    /// Log-spaced nodes per decade above 10.
    #[arg(long, default_value_t = 10)]
    per_decade: usize,
    /// Largest trimming order tried when classifying W.
    #[arg(long, default_value_t = 64)]
    r_max: u32,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn models(a: &TheoryArgs) -> Result<Vec<ObservableSpec>, String> {
    if a.action != "dump" {
        return Err(format!("unknown theory action '{}', expected dump", a.action));
    }
    if a.n_max < 10 || a.per_decade == 0 {
        return Err("--n-max must be at least 10 and --per-decade positive".into());
    }
    let map: Option<MapId> = a.map.as_deref().map(str::parse).transpose()?;
    match &a.observable {
        Some(o) => {
            let kind: ObservableKind = o.parse()?;
            let maps: Vec<MapId> = map.map_or(MapId::ALL.to_vec(), |m| vec![m]);
            let specs: Vec<_> = maps.into_iter().filter_map(|m| ObservableSpec::new(m, kind).ok()).collect();
            if specs.is_empty() {
                return Err(format!("observable {kind} is not defined on the requested map"));
            }
            Ok(specs)
        }
        None => {
            let power2 = ObservableSpec::new(MapId::Bcf, ObservableKind::Power { s: 2.0 })?;
            let all = [ObservableSpec::bcf_g(), ObservableSpec::ecf_g(), ObservableSpec::ecf_gtilde(), power2];
            Ok(all.into_iter().filter(|s| map.is_none_or(|m| s.map == m)).collect())
        }
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or("none".into(), |v| format!("{v}"))
}

pub fn run(a: TheoryArgs) -> u8 {
    let specs = match models(&a) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut w = match open_out(&a.out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match dump(&mut *w, &a, &specs) {
        Ok(true) => EXIT_INCONCLUSIVE,
        Ok(false) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// Returns whether any model's W was inconclusive.
fn dump(w: &mut dyn Write, a: &TheoryArgs, specs: &[ObservableSpec]) -> Result<bool, String> {
    let io = |e: std::io::Error| e.to_string();
    writeln!(w, "# schema: {THEORY_SCHEMA}").map_err(io)?;
    writeln!(w, "# tool: {TOOL_VERSION}").map_err(io)?;
    writeln!(w, "# config: n_max={} per_decade={} r_max={}", a.n_max, a.per_decade, a.r_max).map_err(io)?;
    let mut inconclusive = false;
    let mut body = Vec::new();
    for &spec in specs {
        let model = TailModel::new(spec);
        let norming = Norming::new(model).map_err(|e| format!("{}: {e}", model.id()))?;
        let report = classify_w(&norming, a.r_max);
        inconclusive |= report.outcome == WOutcome::Inconclusive;
        let claim = match model.paper_claim() {
            Some(p) if p != model.predicted_limit() => format!(" PAPER_CLAIMS={p}"),
            _ => String::new(),
        };
        writeln!(
            w,
            "# model={} c={} kappa={} W={} w_slope={:.4} predicted={}{}",
            model.id(),
            model.c,
            model.kappa,
            report.outcome,
            report.slope,
            opt(Some(model.predicted_limit()).filter(|p| p.is_finite())),
            claim
        )
        .map_err(io)?;
        let table = TheoryTable::build(&norming, a.n_max, a.per_decade).map_err(|e| format!("{}: {e}", model.id()))?;
        body.push((model.id(), table));
    }
    writeln!(w, "model,n,mu_tail_A,w,alpha,beta,a,b").map_err(io)?;
    for (id, table) in body {
        for r in &table.rows {
            writeln!(
                w,
                "{id},{},{},{},{},{},{},{}",
                r.n,
                fmt_f64(r.mu_tail_a),
                fmt_f64(r.w),
                fmt_f64(r.alpha),
                fmt_f64(r.beta),
                fmt_f64(r.a),
                fmt_f64(r.b)
            )
            .map_err(io)?;
        }
    }
    w.flush().map_err(io)?;
    Ok(inconclusive)
}
