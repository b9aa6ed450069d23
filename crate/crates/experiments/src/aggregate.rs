//! Per-`N` summaries across seeds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::run::ResultRecord;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AggregateError {
    #[error("no records to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: u64,
    /// Records with a value.
    pub count: u64,
    /// Share of requested seeds that were replaced or aborted.
    pub aborted_fraction: f64,
    pub median: f64,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
    pub min: f64,
    pub max: f64,
    pub predicted: Option<f64>,
}

/// Quantile with linear interpolation between order statistics; `sorted`
/// must be sorted and nonempty.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub fn iqr(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.75) - quantile(&v, 0.25)
}

pub fn aggregate(records: &[ResultRecord], predicted: Option<f64>) -> Result<Vec<SummaryRow>, AggregateError> {
    aggregate_by(records, predicted, |r| r.statistic)
}

/// Same as `aggregate` over any per-record value.
pub fn aggregate_by<F: Fn(&ResultRecord) -> Option<f64>>(
    records: &[ResultRecord],
    predicted: Option<f64>,
    value: F,
) -> Result<Vec<SummaryRow>, AggregateError> {
    if records.is_empty() {
        return Err(AggregateError::EmptyInput);
    }
    let mut by_n: BTreeMap<u64, Vec<&ResultRecord>> = BTreeMap::new();
    for r in records {
        by_n.entry(r.n).or_default().push(r);
    }
    let mut rows = Vec::with_capacity(by_n.len());
    for (n, group) in by_n {
        let mut vals: Vec<f64> = group.iter().filter_map(|r| value(r)).filter(|v| !v.is_nan()).collect();
        let bad = group.iter().filter(|r| r.replaced || r.aborted).count();
        let aborted_fraction = bad as f64 / group.len() as f64;
        if vals.is_empty() {
            rows.push(SummaryRow {
                n,
                count: 0,
                aborted_fraction,
                median: f64::NAN,
                mean: f64::NAN,
                q25: f64::NAN,
                q75: f64::NAN,
                iqr: f64::NAN,
                min: f64::NAN,
                max: f64::NAN,
                predicted,
            });
            continue;
        }
        vals.sort_by(f64::total_cmp);
        let q25 = quantile(&vals, 0.25);
        let q75 = quantile(&vals, 0.75);
        rows.push(SummaryRow {
            n,
            count: vals.len() as u64,
            aborted_fraction,
            median: quantile(&vals, 0.5),
            mean: vals.iter().sum::<f64>() / vals.len() as f64,
            q25,
            q75,
            iqr: q75 - q25,
            min: vals[0],
            max: vals[vals.len() - 1],
            predicted,
        });
    }
    Ok(rows)
}

/// Least-squares slope of `|median − predicted|` against `log10 N`. Negative
/// means the medians approach the prediction.
pub fn trend_slope(rows: &[SummaryRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.predicted.map(|p| ((r.n as f64).log10(), (r.median - p).abs())))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// `|median − predicted|` never grows along the grid.
pub fn distance_nonincreasing(rows: &[SummaryRow]) -> bool {
    let d: Vec<f64> = rows
        .iter()
        .filter_map(|r| r.predicted.map(|p| (r.median - p).abs()))
        .collect();
    d.windows(2).all(|w| w[1] <= w[0])
}
