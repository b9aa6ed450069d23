//! The invariant suites behind `erglim validate`.

use std::str::FromStr;
use std::time::Instant;

use erglim_core::exactreal::BitSource;
use erglim_core::theory::{self, Norming, TailModel, TheoryTable, WOutcome};
use erglim_core::{MapId, ObservableKind, ObservableSpec, Start, TrimAccumulator};
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, StatVariant};
use crate::crosscheck::engine_agreement;
use crate::identities::{check_orbit, Tamper};
use crate::laws::law_rows;
use crate::run::run_experiment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Fast,
    Full,
}

impl FromStr for Level {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            other => Err(format!("unknown level '{other}', expected fast or full")),
        }
    }
}

/// Invariants a fault can be injected into.
pub const FAULTS: [&str; 2] = ["trim_identity", "decomposition"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateReport {
    pub level: Level,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl ValidateReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect()
    }
}

fn timed<F: FnOnce() -> (bool, String)>(name: &str, f: F) -> CheckResult {
    let t = Instant::now();
    let (passed, detail) = f();
    CheckResult {
        name: name.to_string(),
        passed,
        detail,
        seconds: t.elapsed().as_secs_f64(),
    }
}

/// Runs the suite. `fault` names an invariant from [`FAULTS`] to corrupt on
/// purpose; the report must then fail on exactly that name.
pub fn validate(level: Level, fault: Option<&str>) -> Result<ValidateReport, String> {
    if let Some(f) = fault {
        if !FAULTS.contains(&f) {
            return Err(format!("unknown fault '{f}', expected one of {FAULTS:?}"));
        }
    }
    let full = level == Level::Full;
    let t0 = Instant::now();
    let mut checks = Vec::new();

    checks.push(timed("trim_identity", || trim_identity(fault == Some("trim_identity"))));
    checks.push(timed("trim_merge", trim_merge));

    let tamper = match fault {
        Some("trim_identity") => Tamper::TrimIdentity,
        Some("decomposition") => Tamper::Decomposition,
        _ => Tamper::None,
    };
    let (orbits, n_max) = if full { (1000u64, 10_000u64) } else { (30, 1000) };
    checks.extend(orbit_identities(orbits, n_max, tamper));

    let agree_seeds: Vec<u64> = (0..if full { 1000 } else { 200 }).collect();
    checks.push(timed("engine_agreement", || {
        let mut ok = true;
        let mut detail = Vec::new();
        for map in MapId::ALL {
            let a = engine_agreement(map, &agree_seeds, 20, &Start::UniformE);
            ok &= a.fraction() >= 0.95;
            detail.push(format!("{map}: {}/{} agree on 20 digits", a.agree, a.total));
        }
        (ok, detail.join("; "))
    }));

    let samples = if full { 1_000_000 } else { 20_000 };
    let z_max = if full { 3.0 } else { 4.0 };
    for (name, variant, grid) in [
        ("tail_law", StatVariant::TailLaw, vec![2u64, 5, 10, 50]),
        ("phi_law", StatVariant::PhiLaw, vec![1u64, 5, 10, 50]),
    ] {
        checks.push(timed(name, || law_check(variant, &grid, samples, z_max)));
    }

    checks.push(timed("theory_w", theory_w));
    checks.push(timed("theory_inverse", theory_inverse));
    checks.push(timed("predicted_limits", predicted_limits));
    checks.push(timed("determinism", determinism));

    Ok(ValidateReport {
        level,
        checks,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

fn trim_identity(tamper: bool) -> (bool, String) {
    let mut src = BitSource::new(11);
    for round in 0..50 {
        let len = 1 + src.next_bits_u64(10) as usize;
        let vals: Vec<i128> = (0..len).map(|_| src.next_bits_u64(6) as i128).collect();
        let mut acc = TrimAccumulator::<i128>::new(16);
        for &v in &vals {
            acc.push(v);
        }
        let mut sorted = vals.clone();
        sorted.sort_unstable_by(|a, b| b.cmp(a));
        let total: i128 = vals.iter().sum();
        for r in 0..=16.min(len) {
            let got = acc.trimmed_sum(r).unwrap() + i128::from(tamper);
            let want = total - sorted[..r].iter().sum::<i128>();
            if got != want {
                return (false, format!("round {round}, r = {r}: {got} != {want}"));
            }
        }
    }
    (true, "50 random streams, r = 0..16".into())
}

fn trim_merge() -> (bool, String) {
    let mut src = BitSource::new(12);
    for round in 0..50 {
        let vals: Vec<i128> = (0..200).map(|_| src.next_bits_u64(8) as i128).collect();
        let cut1 = src.next_bits_u64(7) as usize;
        let cut2 = cut1 + src.next_bits_u64(6) as usize;
        let build = |s: &[i128]| {
            let mut a = TrimAccumulator::<i128>::new(8);
            s.iter().for_each(|&v| a.push(v));
            a
        };
        let (a, b, c) = (build(&vals[..cut1]), build(&vals[cut1..cut2]), build(&vals[cut2..]));
        let whole = build(&vals);
        let left = a.merge(&b).merge(&c);
        let right = a.merge(&b.merge(&c));
        let swapped = c.merge(&a).merge(&b);
        if left != whole || right != whole || swapped.top() != whole.top() || swapped.sum() != whole.sum() {
            return (false, format!("round {round}: merge differs from a single pass"));
        }
    }
    (true, "merge associative, commutative, equal to one pass".into())
}

const ORBIT_IDENTITIES: [&str; 5] = [
    "decomposition",
    "m_relations",
    "orbit_trim_identity",
    "corrected_numerator",
    "returns_nm",
];

/// One result per identity, from a single pass over the orbits.
fn orbit_identities(orbits: u64, n_max: u64, tamper: Tamper) -> Vec<CheckResult> {
    let t = Instant::now();
    let observables = [ObservableSpec::bcf_g(), ObservableSpec::ecf_g(), ObservableSpec::ecf_gtilde()];
    let mut src = BitSource::new(13);
    let mut bad = Vec::new();
    let mut broken = None;
    for i in 0..orbits {
        let obs = observables[(i % 3) as usize];
        let n = 1 + src.next_bits_u64(20) % n_max;
        match check_orbit(obs, i, &[1, n.div_ceil(3), n], tamper) {
            Ok(f) => bad.extend(f),
            Err(e) => {
                broken = Some(format!("seed {i}: {e}"));
                break;
            }
        }
    }
    let seconds = t.elapsed().as_secs_f64();
    ORBIT_IDENTITIES
        .iter()
        .map(|&name| {
            let key = if name == "orbit_trim_identity" { "trim_identity" } else { name };
            let hits: Vec<_> = bad.iter().filter(|f| f.identity == key).collect();
            let (passed, detail) = match (&broken, hits.first()) {
                (Some(e), _) => (false, e.clone()),
                (None, None) => (true, format!("{orbits} orbits, N up to {n_max}")),
                (None, Some(f)) => (
                    false,
                    format!("{} failures; first: seed {} N {}: {}", hits.len(), f.seed, f.n, f.detail),
                ),
            };
            CheckResult {
                name: name.to_string(),
                passed,
                detail,
                seconds,
            }
        })
        .collect()
}

fn law_check(variant: StatVariant, grid: &[u64], samples: u64, z_max: f64) -> (bool, String) {
    let mut ok = true;
    let mut detail = Vec::new();
    for map in MapId::ALL {
        let cfg = ExperimentConfig::from_toml(&format!(
            "map = \"{map}\"\nobservable = \"digits\"\nvariant = \"{variant}\"\nn_grid = {grid:?}\n\
             seeds = {{ start = 0, count = {samples} }}\n"
        ))
        .expect("internal config");
        for row in law_rows(&cfg) {
            ok &= row.z.abs() <= z_max && row.aborted == 0;
            detail.push(format!("{map} >{}: z = {:.2}", row.threshold, row.z));
        }
    }
    (ok, detail.join(", "))
}

fn theory_w() -> (bool, String) {
    let rep = |obs| {
        let n = Norming::new(TailModel::new(obs)).expect("norming");
        theory::classify_w(&n, 64).outcome
    };
    let bcf = rep(ObservableSpec::bcf_g());
    let sq = rep(ObservableSpec::new(MapId::Bcf, ObservableKind::Power { s: 2.0 }).unwrap());
    (
        bcf == WOutcome::Finite(1) && sq == WOutcome::ExceedsRmax,
        format!("W(bcf digits) = {bcf}, W(bcf power:2) = {sq}"),
    )
}

fn theory_inverse() -> (bool, String) {
    let mut worst: f64 = 0.0;
    for map in MapId::ALL {
        let obs = match map {
            MapId::Bcf => ObservableSpec::bcf_g(),
            MapId::Ecf => ObservableSpec::ecf_g(),
        };
        let norming = Norming::new(TailModel::new(obs)).expect("norming");
        let table = TheoryTable::build(&norming, 100_000_000, 20).expect("table");
        for n in [100.0, 1e4, 1e6, 1e8] {
            let a = table.alpha_interp(n);
            let back = table.beta(a).unwrap();
            worst = worst.max((back / n - 1.0).abs());
            let b = norming.b(n).unwrap();
            worst = worst.max((norming.a(b) / n - 1.0).abs());
        }
    }
    (worst <= 1e-6, format!("worst inverse ratio error {worst:.2e}"))
}

fn predicted_limits() -> (bool, String) {
    let p = |obs| TailModel::new(obs).predicted_limit();
    let (b, et, eg) = (p(ObservableSpec::bcf_g()), p(ObservableSpec::ecf_gtilde()), p(ObservableSpec::ecf_g()));
    (
        b == 3.0 && et == 3.0 && eg == 4.0,
        format!("bcf digits {b}, ecf gtilde {et}, ecf g {eg}"),
    )
}

fn determinism() -> (bool, String) {
    let cfg = ExperimentConfig::from_toml(
        "map = \"ecf\"\nobservable = \"gtilde\"\nvariant = \"main2\"\nn_grid = [100, 1000]\n\
         seeds = { start = 0, count = 8 }\n",
    )
    .expect("internal config");
    let a = run_experiment(&cfg, 1).map(|o| o.records);
    let b = run_experiment(&cfg, 4).map(|o| o.records);
    match (a, b) {
        (Ok(a), Ok(b)) => (a == b, format!("{} records, 1 vs 4 workers", a.len())),
        (Err(e), _) | (_, Err(e)) => (false, e.to_string()),
    }
}
