//! Exact bookkeeping identities on one orbit, checked against a recount
//! from the raw run stream that shares no code with the ledger.

use erglim_core::{ExactEngine, IntLedger, ObservableSpec, OrbitEngine, Run, Start, Variant};

/// Which identity failed, and where.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityFailure {
    pub seed: u64,
    pub n: u64,
    pub identity: &'static str,
    pub detail: String,
}

/// Deliberate corruption for exercising the checker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tamper {
    None,
    /// Adds one to the trimmed sum before comparing.
    TrimIdentity,
    /// Adds one to the induced part of the decomposition.
    Decomposition,
}

struct Recount {
    // (first time, len, cylinder, value per step)
    runs: Vec<(u64, u64, u64, i128)>,
    obs: ObservableSpec,
}

impl Recount {
    fn new(obs: ObservableSpec, runs: &[Run]) -> Self {
        let mut t = 0;
        let mut out = Vec::with_capacity(runs.len());
        for r in runs {
            let v = obs.int_value(r.cylinder).expect("integer observable") as i128;
            out.push((t, r.len, r.cylinder, v));
            t += r.len;
        }
        Recount { runs: out, obs }
    }

    fn sum(&self, h: u64) -> i128 {
        self.runs
            .iter()
            .filter(|r| r.0 < h)
            .map(|&(s, len, _, v)| v * ((s + len).min(h) - s) as i128)
            .sum()
    }

    fn visits(&self) -> Vec<u64> {
        self.runs
            .iter()
            .filter(|r| self.obs.map.in_e(r.2))
            .map(|r| r.0)
            .collect()
    }

    /// One plus the longest maximal stretch outside `E` starting in
    /// `1..=N+1`.
    fn m(&self, n: u64) -> u64 {
        let mut best = 0;
        let mut i = 0;
        while i < self.runs.len() {
            if self.obs.map.in_e(self.runs[i].2) {
                i += 1;
                continue;
            }
            let start = self.runs[i].0;
            let mut len = 0;
            while i < self.runs.len() && !self.obs.map.in_e(self.runs[i].2) {
                len += self.runs[i].1;
                i += 1;
            }
            if start <= n + 1 {
                best = best.max(len);
            }
        }
        1 + best
    }

    /// The `r` largest values among times `0..h`, with multiplicity.
    fn top(&self, h: u64, r: usize) -> Vec<i128> {
        let mut pairs: Vec<(i128, u64)> = self
            .runs
            .iter()
            .filter(|x| x.0 < h)
            .map(|&(s, len, _, v)| (v, (s + len).min(h) - s))
            .collect();
        pairs.sort_by(|a, b| b.0.cmp(&a.0));
        let mut out = Vec::new();
        for (v, k) in pairs {
            for _ in 0..k {
                if out.len() == r {
                    return out;
                }
                out.push(v);
            }
        }
        out
    }
}

/// Builds the orbit for `seed` far enough for every `N` in `ns` and checks
/// every identity there. Returns all failures.
pub fn check_orbit(obs: ObservableSpec, seed: u64, ns: &[u64], tamper: Tamper) -> Result<Vec<IdentityFailure>, String> {
    let n_max = *ns.iter().max().ok_or("no horizons")?;
    let mut engine = ExactEngine::new(obs.map, seed, &Start::UniformE);
    let mut ledger = IntLedger::for_observable(obs);
    ledger.extend_for(&mut engine, n_max).map_err(|e| e.to_string())?;
    // replay the identical stream for the recount
    let mut replay = ExactEngine::new(obs.map, seed, &Start::UniformE);
    let mut runs = Vec::new();
    let mut t = 0;
    while t < ledger.steps() {
        let r = replay.next_run().map_err(|e| e.to_string())?;
        t += r.len;
        runs.push(r);
    }
    let rc = Recount::new(obs, &runs);
    let visits = rc.visits();
    let c = obs.c::<i128>();
    let mut fails = Vec::new();
    let mut fail = |n: u64, identity: &'static str, detail: String| {
        fails.push(IdentityFailure {
            seed,
            n,
            identity,
            detail,
        })
    };

    for &n in ns {
        let r = visits.partition_point(|&v| v <= n);
        // S_N split at the last visit
        let d = ledger.birkhoff_sum(n).map_err(|e| e.to_string())?;
        let last = visits[r - 1];
        let induced = d.induced + i128::from(tamper == Tamper::Decomposition);
        if d.total != rc.sum(n) || induced != rc.sum(last) || d.tail != rc.sum(n) - rc.sum(last)
            || induced + d.tail != d.total || d.returns != r as u64
        {
            fail(n, "decomposition", format!("{d:?} vs recount S_N = {}", rc.sum(n)));
        }
        // m from the relations against m from its definition
        let m_rel = ledger.longest_excursion_m(n).map_err(|e| e.to_string())?;
        let m_def = ledger.def_m_scan(n).map_err(|e| e.to_string())?;
        let m_raw = rc.m(n);
        if m_rel != m_def || m_def != m_raw {
            fail(n, "m_relations", format!("relations {m_rel}, definition {m_def}, recount {m_raw}"));
        }
        // trimmed sums plus the trimmed maxima give the full sum
        let h = n + m_rel;
        let acc = ledger.trim_windows(&[h], 8).map_err(|e| e.to_string())?.remove(0);
        let full = rc.sum(h);
        let top = rc.top(h, 8);
        for k in 0..=top.len() {
            let trimmed = acc.trimmed_sum(k).map_err(|e| e.to_string())? + i128::from(tamper == Tamper::TrimIdentity);
            let removed: i128 = top[..k].iter().sum();
            if trimmed + removed != full || acc.top()[..k] != top[..k] {
                fail(n, "trim_identity", format!("r = {k}: {trimmed} + {removed} != {full}"));
                break;
            }
        }
        // corrected numerator, straight from the pieces
        let num = ledger.corrected_numerator(n, Variant::A).map_err(|e| e.to_string())?;
        let expect = full - top[0] - c * m_rel as i128;
        if num != expect {
            fail(n, "corrected_numerator", format!("{num} != {expect}"));
        }
        // R_{E,N+m}
        let r_nm = ledger.returns_count_nm(n).map_err(|e| e.to_string())?;
        let raw = visits.partition_point(|&v| v <= h) as u64;
        if r_nm != raw || r_nm < r as u64 + 1 {
            fail(n, "returns_nm", format!("ledger {r_nm}, recount {raw}, R_N = {r}"));
        }
    }
    Ok(fails)
}
