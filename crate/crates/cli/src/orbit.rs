use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use erglim_core::{
    DigitRecord, ExactEngine, FloatEngine, MapId, ObservableKind, ObservableSpec, OrbitEngine, Start, StepError,
};
use erglim_experiments::emit::{fmt_f64, TOOL_VERSION};
use erglim_experiments::EngineKind;
use num_bigint::BigInt;
use num_rational::BigRational;

use crate::{open_out, EXIT_CONFIG, EXIT_ORBIT};

pub const ORBIT_SCHEMA: &str = "erglim-orbit/1";

#[derive(Args, Debug)]
pub struct OrbitArgs {
    #[arg(long)]
    map: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of steps (rows) to print.
    #[arg(long)]
    steps: u64,
    /// exact or float.
    #[arg(long, default_value = "exact")]
    engine: String,
    /// uniform_E, uniform_01, or a rational p/q to iterate exactly.
    #[arg(long, default_value = "uniform_E")]
    start: String,
    /// digits, gtilde, power:s or tlogt; fills the value column.
    #[arg(long, default_value = "digits")]
    observable: String,
    /// Random bits one digit may consume before giving up.
    #[arg(long, default_value_t = erglim_core::cfmaps::DEFAULT_BIT_CAP)]
    bit_cap: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum StartArg {
    Random(Start),
    Point(BigRational),
}

fn parse_start(s: &str) -> Result<StartArg, String> {
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| format!("bad numerator in '{s}'"))?;
        let q: BigInt = q.trim().parse().map_err(|_| format!("bad denominator in '{s}'"))?;
        if q == BigInt::from(0) {
            return Err(format!("zero denominator in '{s}'"));
        }
        return Ok(StartArg::Point(BigRational::new(p, q)));
    }
    s.parse().map(StartArg::Random)
}

fn to_f64(x: &BigRational) -> f64 {
    use num_rational::Ratio;
    let r: Ratio<BigInt> = x.clone();
    r.numer().to_string().parse::<f64>().unwrap_or(f64::NAN) / r.denom().to_string().parse::<f64>().unwrap_or(f64::NAN)
}

pub fn run(a: OrbitArgs) -> u8 {
    let parsed = (|| -> Result<_, String> {
        let map: MapId = a.map.parse()?;
        let engine: EngineKind = a.engine.parse()?;
        let kind: ObservableKind = a.observable.parse()?;
        let obs = ObservableSpec::new(map, kind)?;
        let start = parse_start(&a.start)?;
        if a.steps == 0 {
            return Err("--steps must be at least 1".into());
        }
        Ok((map, engine, obs, start))
    })();
    let (map, engine_kind, obs, start) = match parsed {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let mut engine: Box<dyn OrbitEngine> = match (&start, engine_kind) {
        (StartArg::Random(s), EngineKind::Exact) => {
            Box::new(ExactEngine::new(map, a.seed, s).with_bit_cap(a.bit_cap))
        }
        (StartArg::Random(s), EngineKind::Float) => Box::new(FloatEngine::new(map, a.seed, s)),
        (StartArg::Point(x), EngineKind::Exact) => Box::new(ExactEngine::from_rational(map, x.clone())),
        (StartArg::Point(x), EngineKind::Float) => Box::new(FloatEngine::from_f64(map, to_f64(x))),
    };
    let mut w = match open_out(&a.out) {
        Ok(w) => w,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let float = engine_kind == EngineKind::Float;
    match write_orbit(&mut *w, &a, map, obs, float, &mut *engine) {
        Ok(None) => 0,
        Ok(Some(err)) => {
            eprintln!("orbit stopped: {err}");
            EXIT_ORBIT
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// Writes the rows; returns the step error that cut the orbit short, if any.
fn write_orbit(
    w: &mut dyn Write,
    a: &OrbitArgs,
    map: MapId,
    obs: ObservableSpec,
    float: bool,
    engine: &mut dyn OrbitEngine,
) -> std::io::Result<Option<StepError>> {
    writeln!(w, "# schema: {ORBIT_SCHEMA}")?;
    writeln!(w, "# tool: {TOOL_VERSION}")?;
    writeln!(
        w,
        "# config: map={map} seed={} steps={} engine={} start={} observable={} bit_cap={}",
        a.seed, a.steps, a.engine, a.start, obs.kind, a.bit_cap
    )?;
    if float {
        writeln!(w, "# engine: float (non-rigorous)")?;
    }
    let mut header = "step,cylinder_index,digit,eps,value,in_E,phi_so_far".to_string();
    if float {
        header.push_str(",engine");
    }
    writeln!(w, "{header}")?;
    let mut t = 0u64;
    let mut last_visit: Option<u64> = None;
    let mut failure = None;
    'outer: while t < a.steps {
        let run = match engine.next_run() {
            Ok(r) => r,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let rec = DigitRecord::new(t + 1, run.cylinder);
        let (digit, eps) = match map {
            MapId::Bcf => (rec.bcf_digit(), String::new()),
            MapId::Ecf => (2 * rec.ecf_h(), rec.ecf_eps().to_string()),
        };
        let value = if obs.is_integer_valued() {
            obs.int_value(run.cylinder).map(|v| v.to_string()).unwrap_or_default()
        } else {
            fmt_f64(obs.value_f64(run.cylinder))
        };
        for _ in 0..run.len {
            if t >= a.steps {
                break 'outer;
            }
            let phi = last_visit.map(|v| (t - v).to_string()).unwrap_or_default();
            write!(
                w,
                "{},{},{},{},{},{},{}",
                t + 1,
                run.cylinder,
                digit,
                eps,
                value,
                u8::from(rec.in_e),
                phi
            )?;
            if float {
                write!(w, ",float")?;
            }
            writeln!(w)?;
            if rec.in_e {
                last_visit = Some(t);
            }
            t += 1;
        }
    }
    if let Some(e) = &failure {
        writeln!(w, "# aborted after {t} rows: {e}")?;
    }
    w.flush()?;
    Ok(failure)
}
