//! Threshold crossings along the returns to `E`: how often the induced
//! observable exceeds `δ_n` at the `n`-th return.

use erglim_core::theory::TailModel;
use erglim_core::ObservableSpec;
use serde::{Deserialize, Serialize};

/// `δ_n = n (log n)^p`, with `n = 1` read as `n = 2` so the first threshold
/// is not zero.
pub fn threshold_schedule(p: f64) -> impl Fn(u64) -> f64 {
    move |n| {
        let n = n.max(2) as f64;
        n * n.ln().powf(p)
    }
}

/// For each `K` in `ks`, the number of `n ≤ K` with `values[n−1] > δ_n`.
/// `ks` must be sorted; values beyond the stream are not counted.
pub fn borel_bernstein_check<F: Fn(u64) -> f64>(values: &[f64], delta: &F, ks: &[u64]) -> Vec<u64> {
    let mut out = Vec::with_capacity(ks.len());
    let mut count = 0u64;
    let mut n = 0u64;
    for &k in ks {
        while n < k && (n as usize) < values.len() {
            n += 1;
            if values[(n - 1) as usize] > delta(n) {
                count += 1;
            }
        }
        out.push(count);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summability {
    Summable,
    NonSummable,
}

/// Decides whether `Σ μ(f > δ_n)` converges, from the closed-form tail and
/// before any orbit is drawn. By condensation the series converges with
/// `Σ_k 2^k μ(f > δ_{2^k})`, whose terms behave like `k^{−q}`; `q` is read
/// off between `k = 30` and `k = 50`. `q` near 1 is the harmonic case and
/// counts as divergent; iterated-logarithm refinements that would converge
/// there are out of reach of this test.
pub fn tail_summability(obs: ObservableSpec, p: f64) -> (f64, Summability) {
    let model = TailModel::new(obs);
    let delta = threshold_schedule(p);
    let term = |k: u32| {
        let n = 1u64 << k;
        (k as f64) * std::f64::consts::LN_2 + model.continuous_tail(delta(n)).ln()
    };
    let (k0, k1) = (30u32, 50u32);
    let q = -(term(k1) - term(k0)) / ((k1 as f64).ln() - (k0 as f64).ln());
    let verdict = if q > 1.05 {
        Summability::Summable
    } else {
        Summability::NonSummable
    };
    (q, verdict)
}
