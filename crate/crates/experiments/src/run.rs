//! Runs an experiment: one orbit per seed, one record per `(seed, N)`.

use std::env;

use erglim_core::theory::{self, Norming, TailModel};
use erglim_core::trimsum::{schedule_r, Schedule};
use erglim_core::{
    ExactEngine, FloatEngine, LedgerError, ObservableKind, OrbitEngine, OrbitLedger, Scalar, Variant,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bb::{borel_bernstein_check, threshold_schedule};
use crate::config::{EngineKind, ExperimentConfig, StatVariant};
use crate::laws::{law_rows, LawRow};

/// Added to a seed whose orbit could not be completed.
pub const DEFAULT_SEED_OFFSET: u64 = 1_000_000_000;
pub const SEED_OFFSET_ENV: &str = "ERGLIM_SEED_OFFSET";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("theory tables unavailable: {0}")]
    Theory(String),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    /// Seed the orbit was drawn from.
    pub seed: u64,
    /// Seed the config asked for; differs after a replacement.
    pub requested_seed: u64,
    pub n: u64,
    /// `None` exactly when `aborted`.
    pub statistic: Option<f64>,
    /// Variant-specific companion value (the main1 statistic for
    /// dispersion runs).
    pub secondary: Option<f64>,
    pub m: Option<u64>,
    /// `R_{E,N+m}`.
    pub r_enm: Option<u64>,
    /// Largest observable value over the horizon used.
    pub max_value: Option<f64>,
    /// Untrimmed Birkhoff sum over the horizon used.
    pub sum: Option<f64>,
    /// Number of terms trimmed.
    pub trim_r: u64,
    /// Amount removed by trimming and the `c·m` correction.
    pub removed: Option<f64>,
    /// Dispersion runs: first `N'` from the start of the grid with
    /// `max_{k≤N'+m}/N' > 1`, if it is at most `N`.
    pub crossing: Option<u64>,
    pub bits: u64,
    pub engine: EngineKind,
    pub rigorous: bool,
    pub replaced: bool,
    pub aborted: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub requested_seed: u64,
    pub replacement_seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutput {
    pub records: Vec<ResultRecord>,
    pub laws: Vec<LawRow>,
    pub substitutions: Vec<Substitution>,
    pub diagnostics: Vec<String>,
}

pub fn seed_offset() -> u64 {
    env::var(SEED_OFFSET_ENV)
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_SEED_OFFSET)
}

/// What the per-seed work needs beyond the config, computed once.
struct Context {
    w: u64,
    norming: Option<Norming>,
    bb_thresholds: Option<f64>,
}

fn context(cfg: &ExperimentConfig) -> Result<Context, RunError> {
    let mut ctx = Context {
        w: 1,
        norming: None,
        bb_thresholds: None,
    };
    if cfg.variant == StatVariant::HFast {
        let model = TailModel::new(cfg.obs);
        let n = Norming::new(model).map_err(|e| RunError::Theory(e.to_string()))?;
        let report = theory::classify_w(&n, 64);
        ctx.w = match report.outcome {
            theory::WOutcome::Finite(w) => w as u64,
            other => return Err(RunError::Theory(format!("h_fast needs a finite W, got {other}"))),
        };
        ctx.norming = Some(n);
    }
    if cfg.variant == StatVariant::BorelBernstein {
        ctx.bb_thresholds = Some(cfg.threshold_power);
    }
    Ok(ctx)
}

/// Runs `cfg` on `workers` threads (0 = rayon's default). Output is sorted
/// by `(requested_seed, N)` and does not depend on `workers`.
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<RunOutput, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| run_in_pool(cfg))
}

fn run_in_pool(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    if cfg.variant.is_law() {
        return Ok(RunOutput {
            laws: law_rows(cfg),
            ..RunOutput::default()
        });
    }
    let ctx = context(cfg)?;
    let offset = seed_offset();
    let per_seed: Vec<(Vec<ResultRecord>, Option<Substitution>)> = cfg
        .seeds
        .par_iter()
        .map(|&seed| match seed_records(cfg, &ctx, seed) {
            Ok(recs) => (recs, None),
            Err(first) => {
                let alt = seed.wrapping_add(offset);
                let sub = Substitution {
                    requested_seed: seed,
                    replacement_seed: alt,
                    reason: first.to_string(),
                };
                let recs = match seed_records(cfg, &ctx, alt) {
                    Ok(recs) => recs,
                    Err(second) => aborted_records(cfg, alt, &second),
                };
                let recs = recs
                    .into_iter()
                    .map(|mut r| {
                        r.requested_seed = seed;
                        r.replaced = true;
                        r
                    })
                    .collect();
                (recs, Some(sub))
            }
        })
        .collect();
    let mut out = RunOutput::default();
    for (recs, sub) in per_seed {
        out.records.extend(recs);
        out.substitutions.extend(sub);
    }
    out.records.sort_by_key(|r| (r.requested_seed, r.n));
    out.substitutions.sort_by_key(|s| s.requested_seed);
    for s in &out.substitutions {
        out.diagnostics.push(format!(
            "seed {} replaced by {}: {}",
            s.requested_seed, s.replacement_seed, s.reason
        ));
    }
    if out.records.iter().all(|r| r.aborted) {
        out.diagnostics.push(format!(
            "all {} seeds aborted; no statistics available",
            cfg.seeds.len()
        ));
    }
    Ok(out)
}

fn aborted_records(cfg: &ExperimentConfig, seed: u64, err: &LedgerError) -> Vec<ResultRecord> {
    cfg.n_grid
        .iter()
        .map(|&n| ResultRecord {
            seed,
            requested_seed: seed,
            n,
            statistic: None,
            secondary: None,
            m: None,
            r_enm: None,
            max_value: None,
            sum: None,
            trim_r: 0,
            removed: None,
            crossing: None,
            bits: 0,
            engine: cfg.engine,
            rigorous: cfg.engine == EngineKind::Exact,
            replaced: false,
            aborted: true,
            error: Some(err.to_string()),
        })
        .collect()
}

fn seed_records(cfg: &ExperimentConfig, ctx: &Context, seed: u64) -> Result<Vec<ResultRecord>, LedgerError> {
    match cfg.engine {
        EngineKind::Exact => {
            let mut e = ExactEngine::new(cfg.obs.map, seed, &cfg.start).with_bit_cap(cfg.bit_cap);
            by_scalar(cfg, ctx, seed, &mut e)
        }
        EngineKind::Float => {
            let mut e = FloatEngine::new(cfg.obs.map, seed, &cfg.start);
            by_scalar(cfg, ctx, seed, &mut e)
        }
    }
}

fn by_scalar<E: OrbitEngine>(
    cfg: &ExperimentConfig,
    ctx: &Context,
    seed: u64,
    engine: &mut E,
) -> Result<Vec<ResultRecord>, LedgerError> {
    if cfg.obs.is_integer_valued() {
        orbit_records::<i128, E>(cfg, ctx, seed, engine)
    } else {
        orbit_records::<f64, E>(cfg, ctx, seed, engine)
    }
}

/// Builds the ledger far enough for every `N` and evaluates the variant.
pub fn orbit_ledger<S: Scalar, E: OrbitEngine>(
    cfg: &ExperimentConfig,
    engine: &mut E,
) -> Result<OrbitLedger<S>, LedgerError> {
    let mut ledger = OrbitLedger::<S>::for_observable(cfg.obs);
    let n_max = *cfg.n_grid.last().expect("validated nonempty grid");
    if cfg.variant == StatVariant::BorelBernstein {
        // grid counts returns to E, not steps
        while (ledger.visit_times().len() as u64) < n_max {
            let run = engine.next_run()?;
            ledger.push_run(run)?;
        }
    } else {
        ledger.extend_for(engine, n_max)?;
    }
    Ok(ledger)
}

fn orbit_records<S: Scalar, E: OrbitEngine>(
    cfg: &ExperimentConfig,
    ctx: &Context,
    seed: u64,
    engine: &mut E,
) -> Result<Vec<ResultRecord>, LedgerError> {
    let ledger = orbit_ledger::<S, E>(cfg, engine)?;
    let bits = engine.bits_consumed();
    let base = ResultRecord {
        seed,
        requested_seed: seed,
        n: 0,
        statistic: None,
        secondary: None,
        m: None,
        r_enm: None,
        max_value: None,
        sum: None,
        trim_r: 0,
        removed: None,
        crossing: None,
        bits,
        engine: cfg.engine,
        rigorous: engine.is_rigorous(),
        replaced: false,
        aborted: false,
        error: None,
    };
    if cfg.variant == StatVariant::BorelBernstein {
        let values: Vec<f64> = ledger.visit_values().map(|v| v.to_f64_lossy()).collect();
        let delta = threshold_schedule(ctx.bb_thresholds.unwrap_or(cfg.threshold_power));
        let counts = borel_bernstein_check(&values, &delta, &cfg.n_grid);
        return Ok(cfg
            .n_grid
            .iter()
            .zip(counts)
            .map(|(&k, count)| ResultRecord {
                n: k,
                statistic: Some(count as f64),
                max_value: values[..k as usize].iter().cloned().reduce(f64::max),
                ..base.clone()
            })
            .collect());
    }

    let crossing = if cfg.variant == StatVariant::Dispersion {
        first_crossing(&ledger, cfg.n_grid[0], *cfg.n_grid.last().unwrap())?
    } else {
        None
    };
    let c = ledger.c().to_f64_lossy();
    let mut out = Vec::with_capacity(cfg.n_grid.len());
    for &n in &cfg.n_grid {
        let m = ledger.longest_excursion_m(n)?;
        let mut rec = ResultRecord {
            n,
            m: Some(m),
            r_enm: Some(ledger.returns_count_nm(n)?),
            ..base.clone()
        };
        let nf = n as f64;
        match cfg.variant {
            StatVariant::Main1 | StatVariant::Main2 => {
                let variant = if cfg.variant == StatVariant::Main1 { Variant::A } else { Variant::B };
                let h = n + m;
                let total = ledger.sum_to(h)?.to_f64_lossy();
                let num = ledger.corrected_numerator(n, variant)?.to_f64_lossy();
                rec.statistic = Some(num / nf);
                rec.sum = Some(total);
                rec.max_value = Some(ledger.max_to(h)?.to_f64_lossy());
                rec.trim_r = 1;
                rec.removed = Some(total - num);
            }
            StatVariant::HSlow | StatVariant::NoTrim | StatVariant::Dispersion => {
                let total = ledger.sum_to(n)?.to_f64_lossy();
                let mx = ledger.max_to(n)?.to_f64_lossy();
                rec.sum = Some(total);
                rec.max_value = Some(mx);
                if cfg.variant == StatVariant::HSlow {
                    rec.trim_r = 1;
                    rec.removed = Some(mx);
                    rec.statistic = Some((total - mx) / nf);
                } else {
                    rec.removed = Some(0.0);
                    rec.statistic = Some(total / nf);
                }
                if cfg.variant == StatVariant::Dispersion {
                    rec.secondary = Some(ledger.corrected_statistic(n, Variant::A)?);
                    rec.max_value = Some(ledger.max_to(n + m)?.to_f64_lossy());
                    rec.crossing = crossing.filter(|&k| k <= n);
                }
            }
            StatVariant::HFast | StatVariant::Intermediate { .. } => {
                let h = n + m;
                let r = match cfg.variant {
                    StatVariant::Intermediate { u } => {
                        schedule_r(n, Schedule::LoglogPow { u }).expect("grid validated N >= 16")
                    }
                    _ => ctx.w,
                };
                let acc = ledger.trim_windows(&[h], (r as usize).max(1))?.pop().expect("one window");
                let total = acc.sum().to_f64_lossy();
                let trimmed = acc
                    .trimmed_sum(r as usize)
                    .map(|s| s.to_f64_lossy())
                    .unwrap_or(0.0);
                rec.sum = Some(total);
                rec.max_value = acc.top().first().map(|v| v.to_f64_lossy());
                rec.trim_r = r;
                let value = match cfg.variant {
                    StatVariant::Intermediate { u } => {
                        let s = match cfg.obs.kind {
                            ObservableKind::Power { s } => s,
                            _ => unreachable!("validated"),
                        };
                        rec.removed = Some(total - trimmed);
                        trimmed / theory::gamma_n(s, u, nf).expect("validated domain")
                    }
                    _ => {
                        let norming = ctx.norming.as_ref().expect("h_fast context");
                        let alpha = theory::alpha(cfg.obs.map, nf);
                        let b = norming.b(alpha).unwrap_or(f64::NAN);
                        rec.removed = Some(total - trimmed + c * m as f64);
                        (trimmed - c * m as f64) / b
                    }
                };
                rec.statistic = Some(value);
            }
            StatVariant::TailLaw | StatVariant::PhiLaw | StatVariant::BorelBernstein => unreachable!(),
        }
        out.push(rec);
    }
    Ok(out)
}

/// Smallest `N` in `lo..=hi` with `max_{k≤N+m(N)} g(T^{k−1}x) > N`.
pub fn first_crossing<S: Scalar>(ledger: &OrbitLedger<S>, lo: u64, hi: u64) -> Result<Option<u64>, LedgerError> {
    for n in lo.max(1)..=hi {
        let m = ledger.longest_excursion_m(n)?;
        if ledger.max_to(n + m)?.to_f64_lossy() > n as f64 {
            return Ok(Some(n));
        }
    }
    Ok(None)
}

/// Replays the config for a single seed, for callers that need the ledger
/// itself (identity checks, exports).
pub fn ledger_for_seed<S: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<(OrbitLedger<S>, u64), LedgerError> {
    match cfg.engine {
        EngineKind::Exact => {
            let mut e = ExactEngine::new(cfg.obs.map, seed, &cfg.start).with_bit_cap(cfg.bit_cap);
            let l = orbit_ledger::<S, _>(cfg, &mut e)?;
            Ok((l, e.bits_consumed()))
        }
        EngineKind::Float => {
            let mut e = FloatEngine::new(cfg.obs.map, seed, &cfg.start);
            let l = orbit_ledger::<S, _>(cfg, &mut e)?;
            Ok((l, e.bits_consumed()))
        }
    }
}
