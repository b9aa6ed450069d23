//! Seeded Monte Carlo experiments on continued fraction orbits.
//!
//! A config names a map, an observable, a statistic and a grid of horizons;
//! [`run_experiment`] draws one orbit per seed and evaluates the statistic at
//! every horizon, [`aggregate`] summarizes across seeds and [`emit`] writes
//! schema-stable files.

pub mod aggregate;
pub mod bb;
pub mod config;
pub mod crosscheck;
pub mod emit;
pub mod identities;
pub mod laws;
pub mod run;
pub mod validate;

pub use aggregate::{aggregate, aggregate_by, AggregateError, SummaryRow};
pub use config::{ConfigError, EngineKind, ExperimentConfig, Format, StatVariant};
pub use emit::emit;
pub use run::{run_experiment, ResultRecord, RunError, RunOutput};

use erglim_core::TailModel;

/// The value the statistic should approach, where theory gives one.
pub fn predicted(cfg: &ExperimentConfig) -> Option<f64> {
    match cfg.variant {
        StatVariant::Main1 | StatVariant::Main2 => {
            let p = TailModel::new(cfg.obs).predicted_limit();
            p.is_finite().then_some(p)
        }
        StatVariant::HSlow | StatVariant::NoTrim => Some(cfg.obs.c_f64()),
        StatVariant::HFast | StatVariant::Intermediate { .. } => Some(1.0),
        _ => None,
    }
}

/// The limit the published corollaries state, for the main statistics.
pub fn paper_claim(cfg: &ExperimentConfig) -> Option<f64> {
    match cfg.variant {
        StatVariant::Main1 | StatVariant::Main2 => TailModel::new(cfg.obs).paper_claim(),
        _ => None,
    }
}
