//! Streaming trimmed sums: the running total minus the `r` largest terms,
//! for `r` up to a fixed capacity.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub const DEFAULT_R_MAX: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrimError {
    #[error("rank {rank} out of range (held values: {held})")]
    RankOutOfRange { rank: usize, held: usize },
    #[error("trimming schedule undefined for N = {n} (need N >= 16)")]
    DomainError { n: u64 },
    #[error("schedule asks for r = {r}, above the accumulator capacity {r_max}")]
    ExceedsRmax { r: u64, r_max: usize },
}

/// Running sum plus the `r_max` largest values, with multiplicity.
///
/// The top values live in a vector sorted in descending order. `r_max` is
/// small in every use here (at most a few dozen are ever read back), and
/// the vector is only touched when a value beats the current minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimAccumulator<S> {
    r_max: usize,
    top: Vec<S>,
    sum: S,
    count: u64,
}

impl<S: Scalar> TrimAccumulator<S> {
    pub fn new(r_max: usize) -> Self {
        TrimAccumulator {
            r_max,
            top: Vec::with_capacity(r_max.min(64)),
            sum: S::zero(),
            count: 0,
        }
    }

    pub fn r_max(&self) -> usize {
        self.r_max
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> &S {
        &self.sum
    }

    /// Held values, largest first.
    pub fn top(&self) -> &[S] {
        &self.top
    }

    pub fn push(&mut self, value: S) {
        self.push_n(value, 1);
    }

    /// Pushes `n` copies of `value`.
    pub fn push_n(&mut self, value: S, n: u64) {
        if n == 0 {
            return;
        }
        self.sum = self.sum.clone() + value.times(n);
        self.count += n;
        self.insert_top(value, n);
    }

    fn insert_top(&mut self, value: S, n: u64) {
        if self.r_max == 0 {
            return;
        }
        let full = self.top.len() == self.r_max;
        if full && !(value > *self.top.last().expect("r_max > 0")) {
            return;
        }
        // first index holding something strictly smaller
        let at = self.top.partition_point(|x| *x >= value);
        let copies = (n.min(self.r_max as u64)) as usize;
        let copies = copies.min(self.r_max - at);
        self.top
            .splice(at..at, std::iter::repeat(value).take(copies));
        self.top.truncate(self.r_max);
    }

    /// Sum with the `r` largest terms removed.
    pub fn trimmed_sum(&self, r: usize) -> Result<S, TrimError> {
        if r > self.top.len() {
            return Err(TrimError::RankOutOfRange {
                rank: r,
                held: self.top.len(),
            });
        }
        let mut s = self.sum.clone();
        for v in &self.top[..r] {
            s = s - v.clone();
        }
        Ok(s)
    }

    /// `k`-th largest value, `k ≥ 1`.
    pub fn kth_max(&self, k: usize) -> Result<S, TrimError> {
        if k == 0 || k > self.top.len() {
            return Err(TrimError::RankOutOfRange {
                rank: k,
                held: self.top.len(),
            });
        }
        Ok(self.top[k - 1].clone())
    }

    /// Combines two accumulators as if all values had gone into one.
    /// Associative and commutative; capacities must match.
    pub fn merge(&self, other: &Self) -> Self {
        assert_eq!(self.r_max, other.r_max, "merging accumulators of different capacity");
        let mut top = Vec::with_capacity(self.top.len() + other.top.len());
        let (mut i, mut j) = (0, 0);
        while top.len() < self.r_max && (i < self.top.len() || j < other.top.len()) {
            let take_left = match (self.top.get(i), other.top.get(j)) {
                (Some(a), Some(b)) => a >= b,
                (Some(_), None) => true,
                _ => false,
            };
            if take_left {
                top.push(self.top[i].clone());
                i += 1;
            } else {
                top.push(other.top[j].clone());
                j += 1;
            }
        }
        TrimAccumulator {
            r_max: self.r_max,
            top,
            sum: self.sum.clone() + other.sum.clone(),
            count: self.count + other.count,
        }
    }
}

impl<S: Scalar> Default for TrimAccumulator<S> {
    fn default() -> Self {
        Self::new(DEFAULT_R_MAX)
    }
}

/// How many of the largest terms to remove at horizon `N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Schedule {
    /// Fixed `r`.
    Light { r: u64 },
    /// `⌊(log log N)^u⌋`.
    LoglogPow { u: f64 },
    /// `⌊(log log (N log N / log 2))^u⌋`.
    LoglogPowRebased { u: f64 },
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Light { r } => write!(f, "light({r})"),
            Schedule::LoglogPow { u } => write!(f, "loglog_pow({u})"),
            Schedule::LoglogPowRebased { u } => write!(f, "loglog_pow_rebased({u})"),
        }
    }
}

pub fn schedule_r(n: u64, kind: Schedule) -> Result<u64, TrimError> {
    if let Schedule::Light { r } = kind {
        return Ok(r);
    }
    if n < 16 {
        return Err(TrimError::DomainError { n });
    }
    let nf = n as f64;
    let r = match kind {
        Schedule::Light { .. } => unreachable!(),
        Schedule::LoglogPow { u } => nf.ln().ln().powf(u),
        Schedule::LoglogPowRebased { u } => {
            let arg = nf.ln() + nf.ln().ln() - std::f64::consts::LN_2.ln();
            arg.ln().powf(u)
        }
    };
    Ok(r.floor() as u64)
}

/// `schedule_r`, also rejecting values the accumulator cannot serve.
pub fn schedule_r_checked(n: u64, kind: Schedule, r_max: usize) -> Result<u64, TrimError> {
    let r = schedule_r(n, kind)?;
    if r > r_max as u64 {
        return Err(TrimError::ExceedsRmax { r, r_max });
    }
    Ok(r)
}
