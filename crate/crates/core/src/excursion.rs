//! Return-time bookkeeping along one orbit and the corrected Birkhoff sums
//! built from it.
//!
//! Time is the exponent of `T`: time `t` is the point `T^t x`, and the
//! Birkhoff sum `S_N g` covers times `0..N`. The ledger stores the orbit as
//! runs of equal observable value, so a stretch of `10^9` steps next to the
//! neutral fixed point costs one entry.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfmaps::{ObservableSpec, OrbitEngine, Run, StepError};
use crate::scalar::Scalar;
use crate::trimsum::TrimAccumulator;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LedgerError {
    #[error("orbit known up to time {have}, need time {need}")]
    InsufficientOrbit { need: u64, have: u64 },
    #[error("orbit must start in E")]
    StartOutsideE,
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    /// `(S_{N+m} − max − c·m)/N`.
    A,
    /// `(S_{N+m} − max(max, c·m))/N`.
    B,
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "A" | "a" | "main1" => Ok(Variant::A),
            "B" | "b" | "main2" => Ok(Variant::B),
            other => Err(format!("unknown variant '{other}'")),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::A => "main1",
            Variant::B => "main2",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Seg<S> {
    start: u64,
    len: u64,
    in_e: bool,
    cylinder: u64,
    value: S,
}

/// `S_N g` split at the last visit to `E` up to time `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<S> {
    pub total: S,
    /// Sum of the induced observable over the first `R_{E,N} − 1` returns.
    pub induced: S,
    /// Steps from the last visit up to time `N − 1`.
    pub tail: S,
    pub returns: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitLedger<S> {
    obs: Option<ObservableSpec>,
    c: S,
    segs: Vec<Seg<S>>,
    // cum[i] = sum over segs[..i]
    cum: Vec<S>,
    // running max through segs[..=i]
    run_max: Vec<S>,
    visits: Vec<u64>,
    visit_seg: Vec<usize>,
    // phi_max[k] = max(φ_1, …, φ_{k+1})
    phi_max: Vec<u64>,
    // induced[k] = g^E summed over the first k completed excursion blocks
    induced: Vec<S>,
    steps: u64,
}

impl<S: Scalar> OrbitLedger<S> {
    /// Ledger fed by an orbit engine.
    pub fn for_observable(obs: ObservableSpec) -> Self {
        let mut l = Self::with_c(obs.c());
        l.obs = Some(obs);
        l
    }

    /// Ledger fed by hand with `push`, for fixtures.
    pub fn with_c(c: S) -> Self {
        OrbitLedger {
            obs: None,
            c,
            segs: Vec::new(),
            cum: vec![S::zero()],
            run_max: Vec::new(),
            visits: Vec::new(),
            visit_seg: Vec::new(),
            phi_max: Vec::new(),
            induced: vec![S::zero()],
            steps: 0,
        }
    }

    pub fn c(&self) -> &S {
        &self.c
    }

    pub fn observable(&self) -> Option<&ObservableSpec> {
        self.obs.as_ref()
    }

    /// Number of known steps; times `0..steps()` are known.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Visit times to `E`, starting with 0.
    pub fn visit_times(&self) -> &[u64] {
        &self.visits
    }

    /// Completed return times `φ_k`.
    pub fn return_times(&self) -> impl Iterator<Item = u64> + '_ {
        self.visits.windows(2).map(|w| w[1] - w[0])
    }

    /// Observable value at each visit to `E`.
    pub fn visit_values(&self) -> impl Iterator<Item = &S> + '_ {
        self.visit_seg.iter().map(|&i| &self.segs[i].value)
    }

    /// Appends `len` steps of value `value`. Visits to `E` are stored one
    /// per step; consecutive non-`E` steps of equal value are merged.
    pub fn push(&mut self, in_e: bool, value: S, len: u64) -> Result<(), LedgerError> {
        self.push_seg(in_e, 0, value, len)
    }

    /// Appends a run emitted by an engine; needs `for_observable`.
    pub fn push_run(&mut self, run: Run) -> Result<(), LedgerError> {
        let obs = self.obs.expect("push_run on a ledger without observable");
        let in_e = obs.map.in_e(run.cylinder);
        self.push_seg(in_e, run.cylinder, obs.value(run.cylinder), run.len)
    }

    fn push_seg(&mut self, in_e: bool, cylinder: u64, value: S, len: u64) -> Result<(), LedgerError> {
        if len == 0 {
            return Ok(());
        }
        if self.steps == 0 && !in_e {
            return Err(LedgerError::StartOutsideE);
        }
        if in_e {
            for _ in 0..len {
                self.push_visit(cylinder, value.clone());
            }
            return Ok(());
        }
        let start = self.steps;
        self.steps += len;
        let contribution = value.times(len);
        if let Some(last) = self.segs.last_mut() {
            if !last.in_e && last.value == value {
                last.len += len;
                let n = self.cum.len();
                self.cum[n - 1] = self.cum[n - 1].clone() + contribution;
                return Ok(());
            }
        }
        self.append_seg(Seg {
            start,
            len,
            in_e: false,
            cylinder,
            value,
        }, contribution);
        Ok(())
    }

    fn push_visit(&mut self, cylinder: u64, value: S) {
        let t = self.steps;
        if let Some(&prev) = self.visits.last() {
            let phi = t - prev;
            let best = self.phi_max.last().copied().unwrap_or(0).max(phi);
            self.phi_max.push(best);
            let from = *self.visit_seg.last().expect("visit recorded");
            let block = self.segs[from..]
                .iter()
                .fold(S::zero(), |acc, s| acc + s.value.times(s.len));
            let k = self.induced.len();
            let next = self.induced[k - 1].clone() + block;
            self.induced.push(next);
        }
        self.visits.push(t);
        self.visit_seg.push(self.segs.len());
        self.steps += 1;
        let contribution = value.clone();
        self.append_seg(Seg {
            start: t,
            len: 1,
            in_e: true,
            cylinder,
            value,
        }, contribution);
    }

    fn append_seg(&mut self, seg: Seg<S>, contribution: S) {
        let prev_max = self.run_max.last().cloned();
        let m = match prev_max {
            Some(p) => S::max_of(p, seg.value.clone()),
            None => seg.value.clone(),
        };
        self.run_max.push(m);
        let n = self.cum.len();
        let next = self.cum[n - 1].clone() + contribution;
        self.cum.push(next);
        self.segs.push(seg);
    }

    fn need(&self, time: u64) -> Result<(), LedgerError> {
        if time >= self.steps {
            Err(LedgerError::InsufficientOrbit {
                need: time,
                have: self.steps.saturating_sub(1),
            })
        } else {
            Ok(())
        }
    }

    fn seg_at(&self, t: u64) -> usize {
        self.segs.partition_point(|s| s.start <= t) - 1
    }

    /// `S_H g`, the sum over times `0..H`.
    pub fn sum_to(&self, h: u64) -> Result<S, LedgerError> {
        if h == 0 {
            return Ok(S::zero());
        }
        self.need(h - 1)?;
        let i = self.seg_at(h - 1);
        let s = &self.segs[i];
        Ok(self.cum[i].clone() + s.value.times(h - s.start))
    }

    /// `max_{1≤k≤H} g(T^{k−1} x)`.
    pub fn max_to(&self, h: u64) -> Result<S, LedgerError> {
        if h == 0 {
            return Ok(S::zero());
        }
        self.need(h - 1)?;
        Ok(self.run_max[self.seg_at(h - 1)].clone())
    }

    /// `R_{E,N}`: visits to `E` at times `0..=N`.
    pub fn returns_count(&self, n: u64) -> Result<u64, LedgerError> {
        self.need(n)?;
        Ok(self.visits.partition_point(|&t| t <= n) as u64)
    }

    /// `m(N,E,x)` as the largest of the first `R_{E,N}` return times.
    pub fn longest_excursion_m(&self, n: u64) -> Result<u64, LedgerError> {
        let r = self.returns_count(n)? as usize;
        if self.phi_max.len() < r {
            return Err(LedgerError::InsufficientOrbit {
                need: n + 1,
                have: self.steps.saturating_sub(1),
            });
        }
        Ok(self.phi_max[r - 1])
    }

    /// `m(N,E,x)` straight from its definition: one plus the longest stretch
    /// outside `E` that starts at a time in `1..=N+1`.
    pub fn def_m_scan(&self, n: u64) -> Result<u64, LedgerError> {
        self.need(n + 1)?;
        let mut best = 0u64;
        let mut i = 0;
        while i < self.segs.len() {
            if self.segs[i].in_e {
                i += 1;
                continue;
            }
            let start = self.segs[i].start;
            let mut len = 0;
            while i < self.segs.len() && !self.segs[i].in_e {
                len += self.segs[i].len;
                i += 1;
            }
            if start > n + 1 {
                break;
            }
            if i == self.segs.len() {
                return Err(LedgerError::InsufficientOrbit {
                    need: start + len,
                    have: self.steps - 1,
                });
            }
            best = best.max(len);
        }
        Ok(1 + best)
    }

    /// Stretches outside `E` as `(first time, length)`; the last one may be
    /// unfinished.
    fn stretches(&self) -> Vec<(u64, u64)> {
        let mut out: Vec<(u64, u64)> = Vec::new();
        let mut prev_out = false;
        for s in &self.segs {
            if s.in_e {
                prev_out = false;
                continue;
            }
            if prev_out {
                out.last_mut().expect("open stretch").1 += s.len;
            } else {
                out.push((s.start, s.len));
            }
            prev_out = true;
        }
        out
    }

    /// `w(N,E,x)` as written: the longest run of consecutive times outside
    /// `E` inside the window `1..=N−1`. A stretch still open at time `N`
    /// contributes the part inside the window.
    pub fn excursion_w(&self, n: u64) -> Result<u64, LedgerError> {
        if n < 2 {
            return Ok(0);
        }
        self.need(n - 1)?;
        let last = n - 1;
        Ok(self
            .stretches()
            .into_iter()
            .filter(|&(s, _)| s <= last)
            .map(|(s, l)| (s + l - 1).min(last) - s + 1)
            .max()
            .unwrap_or(0))
    }

    /// Longest stretch outside `E` lying entirely inside `1..=N−1`; a
    /// stretch that is still open at time `N − 1` is left out.
    pub fn completed_excursion_w(&self, n: u64) -> Result<u64, LedgerError> {
        if n < 2 {
            return Ok(0);
        }
        self.need(n - 1)?;
        let last = n - 1;
        let open = self.segs.last().is_some_and(|s| !s.in_e);
        let stretches = self.stretches();
        let k = stretches.len();
        Ok(stretches
            .into_iter()
            .enumerate()
            .filter(|&(i, (s, l))| s + l - 1 <= last && !(open && i + 1 == k))
            .map(|(_, (_, l))| l)
            .max()
            .unwrap_or(0))
    }

    /// `S_N g` together with its split at the last visit up to time `N`.
    pub fn birkhoff_sum(&self, n: u64) -> Result<Decomposition<S>, LedgerError> {
        let r = self.returns_count(n)?;
        let total = self.sum_to(n)?;
        let k = (r - 1) as usize;
        let induced = self.induced[k].clone();
        let last_visit = self.visits[k];
        let mut tail = S::zero();
        for s in &self.segs[self.visit_seg[k]..] {
            if s.start >= n {
                break;
            }
            let end = (s.start + s.len).min(n);
            tail = tail + s.value.times(end - s.start);
        }
        debug_assert!(last_visit <= n);
        Ok(Decomposition {
            total,
            induced,
            tail,
            returns: r,
        })
    }

    /// The orbit is long enough for the corrected statistics at `N`.
    pub fn covers_corrected(&self, n: u64) -> bool {
        match self.longest_excursion_m(n) {
            Ok(m) => self.steps >= n + m + 1,
            Err(_) => false,
        }
    }

    /// Numerator of the corrected statistic, before dividing by `N`.
    pub fn corrected_numerator(&self, n: u64, variant: Variant) -> Result<S, LedgerError> {
        let m = self.longest_excursion_m(n)?;
        let h = n + m;
        let s = self.sum_to(h)?;
        let mx = self.max_to(h)?;
        let cm = self.c.times(m);
        Ok(match variant {
            Variant::A => s - mx - cm,
            Variant::B => s - S::max_of(mx, cm),
        })
    }

    pub fn corrected_statistic(&self, n: u64, variant: Variant) -> Result<f64, LedgerError> {
        Ok(self.corrected_numerator(n, variant)?.to_f64_lossy() / n as f64)
    }

    /// `R_{E,N,m} = R_{E,N+m(N,E,x)}`.
    pub fn returns_count_nm(&self, n: u64) -> Result<u64, LedgerError> {
        let m = self.longest_excursion_m(n)?;
        self.returns_count(n + m)
    }

    /// `(max_{k≤N} g(T^{k−1}x)/N, m(N,E,x)/N)` for each `N`.
    pub fn growth_ratio_series(&self, grid: &[u64]) -> Result<Vec<(f64, f64)>, LedgerError> {
        grid.iter()
            .map(|&n| {
                let mx = self.max_to(n)?.to_f64_lossy();
                let m = self.longest_excursion_m(n)? as f64;
                Ok((mx / n as f64, m / n as f64))
            })
            .collect()
    }

    /// Trimming accumulators over times `0..H` for each horizon, which must
    /// be nondecreasing.
    pub fn trim_windows(&self, horizons: &[u64], r_max: usize) -> Result<Vec<TrimAccumulator<S>>, LedgerError> {
        assert!(horizons.windows(2).all(|w| w[0] <= w[1]), "horizons must be sorted");
        if let Some(&h) = horizons.last() {
            if h > 0 {
                self.need(h - 1)?;
            }
        }
        let mut acc = TrimAccumulator::new(r_max);
        let mut out = Vec::with_capacity(horizons.len());
        let mut filled = 0u64;
        let mut i = 0usize;
        for &h in horizons {
            while filled < h {
                let s = &self.segs[i];
                let end = (s.start + s.len).min(h);
                acc.push_n(s.value.clone(), end - filled);
                filled = end;
                if end == s.start + s.len {
                    i += 1;
                }
            }
            out.push(acc.clone());
        }
        Ok(out)
    }

    /// Runs the engine until the ledger has at least `steps` steps.
    pub fn extend_to<E: OrbitEngine>(&mut self, engine: &mut E, steps: u64) -> Result<(), LedgerError> {
        while self.steps < steps {
            let run = engine.next_run()?;
            self.push_run(run)?;
        }
        Ok(())
    }

    /// Runs the engine until every statistic at horizon `N` is available:
    /// the excursion following the last visit up to time `N` has finished
    /// and time `N + m(N,E,x)` is known.
    pub fn extend_for<E: OrbitEngine>(&mut self, engine: &mut E, n: u64) -> Result<(), LedgerError> {
        self.extend_to(engine, n + 1)?;
        let r = self.returns_count(n)? as usize;
        while self.phi_max.len() < r {
            let run = engine.next_run()?;
            self.push_run(run)?;
        }
        let m = self.phi_max[r - 1];
        self.extend_to(engine, n + m + 1)
    }

    /// Per-step rows `(time, cylinder, in_e, value)` for the first `limit`
    /// steps. Cylinder is 0 for hand-fed ledgers.
    pub fn step_rows(&self, limit: u64) -> Vec<(u64, u64, bool, S)> {
        let mut out = Vec::new();
        for s in &self.segs {
            for t in s.start..s.start + s.len {
                if t >= limit {
                    return out;
                }
                out.push((t, s.cylinder, s.in_e, s.value.clone()));
            }
        }
        out
    }
}
