//! Closed-form measures, norming sequences and the trimming order `W`.
//!
//! Measures are the invariant ones normalized by `μ(E) = 1`; the
//! `*_lebesgue` functions are Lebesgue measures and are what uniform
//! sampling sees.

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cfmaps::{MapId, ObservableKind, ObservableSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TheoryError {
    #[error("outside the domain: {0}")]
    DomainError(String),
    #[error("alpha is not increasing on the grid near n = {0}")]
    NonMonotone(u64),
    #[error("the trimming order exceeds r_max = {0}")]
    ExceedsRmax(u32),
    #[error("could not classify the trimming order (slope {slope:.3})")]
    Inconclusive { slope: f64 },
}

fn ln3() -> f64 {
    3f64.ln()
}

/// `μ(A_{>n})`, the measure of points of `E` whose first return takes more
/// than `n` steps.
pub fn mu_tail_a(map: MapId, n: u64) -> f64 {
    let n = n as f64;
    match map {
        MapId::Bcf => (1.0 / (n + 1.0)).ln_1p() / LN_2,
        MapId::Ecf => (2.0 / (2.0 * n + 1.0)).ln_1p() / ln3(),
    }
}

/// `w_n(E) = Σ_{k<n} μ(A_{>k})`, summed in closed form.
pub fn wandering_rate(map: MapId, n: f64) -> f64 {
    match map {
        MapId::Bcf => (n + 1.0).log2(),
        MapId::Ecf => (2.0 * n + 1.0).ln() / ln3(),
    }
}

/// `α(n) = n / w_n(E)`.
pub fn alpha(map: MapId, n: f64) -> f64 {
    n / wandering_rate(map, n)
}

/// `n μ(A_{>n})² / w_n²`, the summand of the level-set condition.
pub fn level_set_term(map: MapId, n: u64) -> f64 {
    let m = mu_tail_a(map, n);
    let w = wandering_rate(map, n as f64);
    n as f64 * m * m / (w * w)
}

/// `μ(g > n)` for an integer-valued observable. Infinite below the smallest
/// value the observable takes on `E`, since it also exceeds `n` on `X∖E`.
pub fn digit_tail(obs: &ObservableSpec, n: u64) -> f64 {
    let nf = n as f64;
    match (obs.map, obs.kind) {
        (MapId::Bcf, ObservableKind::Digits) => {
            if n < 2 {
                f64::INFINITY
            } else {
                (1.0 / (nf - 1.0)).ln_1p() / LN_2
            }
        }
        (MapId::Ecf, ObservableKind::Gtilde) => {
            if n < 1 {
                f64::INFINITY
            } else {
                (2.0 / nf).ln_1p() / ln3()
            }
        }
        (MapId::Ecf, ObservableKind::Digits) => {
            let k = 2.0 * (n / 2) as f64 + 1.0;
            if k < 2.0 {
                f64::INFINITY
            } else {
                (2.0 / (k - 1.0)).ln_1p() / ln3()
            }
        }
        _ => panic!("digit_tail needs an integer-valued observable"),
    }
}

/// `λ(g > n)` on all of `[0,1]`.
pub fn lebesgue_tail(obs: &ObservableSpec, n: u64) -> f64 {
    let first = first_cylinder_above(obs, n);
    match obs.map {
        MapId::Bcf => 1.0 - (first - 1) as f64 / first as f64,
        MapId::Ecf => 1.0 / first as f64,
    }
}

/// Smallest cylinder index on which the observable exceeds `n`.
fn first_cylinder_above(obs: &ObservableSpec, n: u64) -> u64 {
    match (obs.map, obs.kind) {
        (MapId::Bcf, ObservableKind::Digits) => n.max(1),
        (MapId::Ecf, ObservableKind::Gtilde) => n + 1,
        (MapId::Ecf, ObservableKind::Digits) => 2 * (n / 2) + 1,
        _ => panic!("needs an integer-valued observable"),
    }
}

/// `Σ_{j≥j0} [1/(p j + u) − 1/(p j + v)]`, summed directly for a while and
/// finished with an Euler–Maclaurin tail. Terms are formed as
/// `(v−u)/((pj+u)(pj+v))` so that nearly equal `u, v` lose nothing.
fn pair_series(p: f64, u: f64, v: f64, j0: u64) -> f64 {
    const DIRECT: u64 = 4096;
    let d = v - u;
    let term = |j: f64| d / ((p * j + u) * (p * j + v));
    let mut s = 0.0;
    let mut comp = 0.0;
    let end = j0 + DIRECT;
    for j in (j0..end).rev() {
        // Kahan, smallest terms first
        let y = term(j as f64) - comp;
        let t = s + y;
        comp = (t - s) - y;
        s = t;
    }
    let jj = end as f64;
    let x = p * jj + u;
    let w = p * jj + v;
    let integral = (d / x).ln_1p() / p;
    // k-th derivative of 1/(p j + c) is (−1)^k k! p^k / (p j + c)^{k+1}
    let deriv = |k: i32, fact: f64| {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * fact * p.powi(k) * (x.powi(-(k + 1)) - w.powi(-(k + 1)))
    };
    let em = integral + term(jj) / 2.0 - deriv(1, 1.0) / 12.0 + deriv(3, 6.0) / 720.0
        - deriv(5, 120.0) / 30240.0;
    s + em
}

/// `λ(φ_E > M)`: Lebesgue measure of the points of `E` that stay out of `E`
/// for at least `M` steps after leaving.
pub fn phi_tail_lebesgue(map: MapId, m: u64) -> f64 {
    match map {
        MapId::Bcf => bcf_phi_pieces(m, 2),
        MapId::Ecf => ecf_phi_pieces(m, 2),
    }
}

/// `Σ_{m≥first} λ(I_m ∩ {φ_E > M})` for BCF: `1/(m²(M+1)+m)`.
fn bcf_phi_pieces(big_m: u64, first: u64) -> f64 {
    let a = 1.0 / (big_m as f64 + 1.0);
    pair_series(1.0, 0.0, a, first.max(2))
}

/// Same for ECF, with `θ = M/(M+1)`: odd `m = 2j−1` contributes
/// `1/(2j−1) − 1/(2j−θ)`, even `m = 2j` contributes `1/(2j+θ) − 1/(2j+1)`.
fn ecf_phi_pieces(big_m: u64, first: u64) -> f64 {
    let first = first.max(2);
    let theta = big_m as f64 / (big_m as f64 + 1.0);
    let odd_j0 = (first + 2) / 2; // smallest j with 2j−1 ≥ first
    let even_j0 = first.div_ceil(2); // smallest j with 2j ≥ first
    pair_series(2.0, -1.0, -theta, odd_j0) + pair_series(2.0, theta, 1.0, even_j0)
}

/// `λ({g > N} ∩ {φ_E > M})` inside `E`.
pub fn joint_tail_lebesgue(obs: &ObservableSpec, n: u64, m: u64) -> f64 {
    let first = first_cylinder_above(obs, n);
    match obs.map {
        MapId::Bcf => bcf_phi_pieces(m, first),
        MapId::Ecf => ecf_phi_pieces(m, first),
    }
}

/// Which observable a tail model describes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailModel {
    pub obs: ObservableSpec,
    pub kappa: f64,
    pub c: f64,
    pub y0: f64,
}

impl TailModel {
    pub fn new(obs: ObservableSpec) -> Self {
        let kappa = match (obs.map, obs.kind) {
            (MapId::Bcf, ObservableKind::Digits) => 1.0,
            (MapId::Ecf, ObservableKind::Digits) | (MapId::Ecf, ObservableKind::Gtilde) => 2.0,
            (_, ObservableKind::Power { s }) if s < 1.0 => 0.0,
            (_, ObservableKind::Power { s }) if s == 1.0 => Self::new(ObservableSpec {
                map: obs.map,
                kind: ObservableKind::Digits,
            })
            .kappa,
            _ => f64::INFINITY,
        };
        let y0 = match obs.kind {
            ObservableKind::Digits | ObservableKind::Gtilde => 2.0,
            _ => 4.0,
        };
        TailModel {
            obs,
            kappa,
            c: obs.c_f64(),
            y0,
        }
    }

    pub fn with_y0(mut self, y0: f64) -> Self {
        self.y0 = y0;
        self
    }

    pub fn id(&self) -> String {
        format!("{}-{}", self.obs.map, self.obs.kind)
    }

    fn base(&self) -> ObservableSpec {
        match self.obs.kind {
            ObservableKind::Gtilde => self.obs,
            _ => ObservableSpec {
                map: self.obs.map,
                kind: ObservableKind::Digits,
            },
        }
    }

    /// Threshold on the base digit equivalent to `value > t`.
    fn base_threshold(&self, t: f64) -> f64 {
        match self.obs.kind {
            ObservableKind::Digits | ObservableKind::Gtilde => t,
            ObservableKind::Power { s } => t.max(0.0).powf(1.0 / s),
            ObservableKind::Tlogt => inverse_tlogt(t),
        }
    }

    /// `μ(g > n)` at an integer threshold.
    pub fn exact_tail(&self, n: u64) -> f64 {
        let b = self.base_threshold(n as f64);
        // nearest integer when within rounding of one, so 9^{1/2} counts as 3
        let r = b.round();
        let k = if (b - r).abs() <= 1e-9 * r.max(1.0) { r } else { b.floor() };
        digit_tail(&self.base(), k as u64)
    }

    /// Tail between integer thresholds of the base digit, by linear
    /// interpolation.
    pub fn continuous_tail(&self, t: f64) -> f64 {
        let b = self.base_threshold(t);
        let n = b.floor();
        let frac = b - n;
        let base = self.base();
        let lo = digit_tail(&base, n as u64);
        if frac == 0.0 {
            return lo;
        }
        let hi = digit_tail(&base, n as u64 + 1);
        lo * (1.0 - frac) + hi * frac
    }

    /// `c + κ`.
    pub fn predicted_limit(&self) -> f64 {
        self.c + self.kappa
    }

    /// The limit the published corollaries state for this observable, where
    /// one is stated.
    pub fn paper_claim(&self) -> Option<f64> {
        match (self.obs.map, self.obs.kind) {
            (MapId::Bcf, ObservableKind::Digits) => Some(3.0),
            (MapId::Ecf, ObservableKind::Digits) | (MapId::Ecf, ObservableKind::Gtilde) => Some(3.0),
            _ => None,
        }
    }
}

/// Solution `x ≥ 1` of `x ln x = t`.
pub fn inverse_tlogt(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut x = if t < std::f64::consts::E { 1.0 + t / 2.0 } else { t / t.ln() };
    for _ in 0..60 {
        let f = x * x.ln() - t;
        let step = f / (x.ln() + 1.0);
        x -= step;
        if x < 1.0 {
            x = 1.0;
        }
        if step.abs() <= 1e-15 * x {
            break;
        }
    }
    x
}

const GL_X: [f64; 8] = [
    -0.960_289_856_497_536_2,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_2,
];
const GL_W: [f64; 8] = [
    0.101_228_536_290_376_26,
    0.222_381_034_453_374_47,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362,
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_47,
    0.101_228_536_290_376_26,
];

fn gauss<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let h = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    GL_X.iter().zip(GL_W.iter()).map(|(x, w)| w * f(mid + h * x)).sum::<f64>() * h
}

const UNIT_PANELS: usize = 4096;
const LOG_PANELS_PER_E: f64 = 128.0;
pub const Y_MAX: f64 = 1e15;

/// `a(y) = y / ∫_{y0}^y μ(g > t) dt` and its inverse `b`.
///
/// The integral is tabulated once: unit panels above `y0` (where the
/// interpolated tail is piecewise linear and Gauss–Legendre is exact) and
/// logarithmic panels beyond, up to `Y_MAX`.
#[derive(Debug, Clone)]
pub struct Norming {
    pub model: TailModel,
    pub y0: f64,
    unit_cum: Vec<f64>,
    log_start: f64,
    log_step: f64,
    log_cum: Vec<f64>,
    /// Where `a` attains its minimum on the table; `b` inverts `a` above it.
    a_min_at: f64,
}

impl Norming {
    pub fn new(model: TailModel) -> Result<Self, TheoryError> {
        let y0 = model.y0;
        if !(y0 > 1.0) {
            return Err(TheoryError::DomainError(format!("y0 = {y0} must exceed 1")));
        }
        let f = |t: f64| model.continuous_tail(t);
        let mut unit_cum = Vec::with_capacity(UNIT_PANELS + 1);
        unit_cum.push(0.0);
        let mut acc = 0.0;
        for k in 0..UNIT_PANELS {
            let a = y0 + k as f64;
            acc += gauss(&f, a, a + 1.0);
            unit_cum.push(acc);
        }
        let log_start = (y0 + UNIT_PANELS as f64).ln();
        let log_step = 1.0 / LOG_PANELS_PER_E;
        let n_log = ((Y_MAX.ln() - log_start) / log_step).ceil() as usize;
        let g = |u: f64| {
            let t = u.exp();
            t * f(t)
        };
        let mut log_cum = Vec::with_capacity(n_log + 1);
        log_cum.push(acc);
        for k in 0..n_log {
            let a = log_start + k as f64 * log_step;
            acc += gauss(&g, a, a + log_step);
            log_cum.push(acc);
        }
        let mut me = Norming {
            model,
            y0,
            unit_cum,
            log_start,
            log_step,
            log_cum,
            a_min_at: y0,
        };
        me.a_min_at = me.locate_a_min()?;
        Ok(me)
    }

    /// `∫_{y0}^y μ(g > t) dt`.
    pub fn integral(&self, y: f64) -> f64 {
        let f = |t: f64| self.model.continuous_tail(t);
        if y <= self.y0 {
            return 0.0;
        }
        let x = y - self.y0;
        if x < UNIT_PANELS as f64 {
            let k = x.floor() as usize;
            let a = self.y0 + k as f64;
            return self.unit_cum[k] + gauss(&f, a, y);
        }
        let u = y.ln();
        let k = (((u - self.log_start) / self.log_step).floor().max(0.0) as usize).min(self.log_cum.len() - 2);
        let a = self.log_start + k as f64 * self.log_step;
        let g = |v: f64| {
            let t = v.exp();
            t * f(t)
        };
        self.log_cum[k] + gauss(&g, a, u)
    }

    pub fn a(&self, y: f64) -> f64 {
        y / self.integral(y)
    }

    fn locate_a_min(&self) -> Result<f64, TheoryError> {
        // a blows up at y0 and must eventually increase
        let mut best = (f64::INFINITY, self.y0);
        let steps = 4000;
        let (lo, hi) = ((self.y0 + 1e-3).ln(), Y_MAX.ln());
        let mut prev = f64::NAN;
        let mut last_decrease = 0.0;
        for i in 0..=steps {
            let y = (lo + (hi - lo) * i as f64 / steps as f64).exp();
            let v = self.a(y);
            if v < best.0 {
                best = (v, y);
            }
            if v < prev {
                last_decrease = y;
            }
            prev = v;
        }
        if last_decrease > Y_MAX / 10.0 {
            return Err(TheoryError::DomainError(
                "a(y) is not eventually increasing on the table".into(),
            ));
        }
        Ok(best.1.max(last_decrease))
    }

    /// Asymptotic inverse of `a`, by bisection on the increasing branch.
    pub fn b(&self, n: f64) -> Result<f64, TheoryError> {
        let mut lo = self.a_min_at;
        let mut hi = Y_MAX;
        if !(n >= self.a(lo) && n <= self.a(hi)) {
            return Err(TheoryError::DomainError(format!("b({n}) outside the tabulated range")));
        }
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if self.a(mid) < n {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi / lo - 1.0 <= 1e-14 {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `y μ(g > y) / ∫_{y0}^y μ(g > t) dt`, the base of the integrand that
    /// decides `W`.
    pub fn rho(&self, y: f64) -> f64 {
        y * self.model.continuous_tail(y) / self.integral(y)
    }
}

/// Outcome of the `W` classification plus what it was based on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WReport {
    /// Fitted `p` in `ρ(y) ≈ C (log y)^{−p}` near the top of the grid.
    pub slope: f64,
    pub outcome: WOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum WOutcome {
    Finite(u32),
    ExceedsRmax,
    Inconclusive,
}

impl fmt::Display for WOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WOutcome::Finite(w) => write!(f, "{w}"),
            WOutcome::ExceedsRmax => f.write_str("EXCEEDS_RMAX"),
            WOutcome::Inconclusive => f.write_str("INCONCLUSIVE"),
        }
    }
}

pub const W_Y_MAX: f64 = 1e12;
pub const W_NODES: usize = 10_000;

/// Classifies `W` from the decay of `ρ`. With `ρ ∼ C (log y)^{−p}` the
/// integrand `ρ^{r+1}/y` is integrable iff `p (r+1) > 1`; a `ρ` tending to
/// a positive constant (`p = 0`) is never integrable. Values of `p (r+1)`
/// within a quarter of 1 are too close to call.
pub fn classify_w(norming: &Norming, r_max: u32) -> WReport {
    let lo = (norming.y0 * std::f64::consts::E).max(16.0).ln();
    let hi = W_Y_MAX.ln();
    let pts: Vec<(f64, f64)> = (0..W_NODES)
        .map(|i| {
            let u = lo + (hi - lo) * i as f64 / (W_NODES - 1) as f64;
            let y = u.exp();
            (u.ln(), norming.rho(y).ln())
        })
        .collect();
    // least-squares slope over the top decade of y
    let cut = hi - 10f64.ln();
    let top: Vec<&(f64, f64)> = pts.iter().filter(|(ll, _)| ll.exp() >= cut).collect();
    let k = top.len() as f64;
    let mx = top.iter().map(|p| p.0).sum::<f64>() / k;
    let my = top.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = top.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = top.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = -sxy / sxx;
    let outcome = if !slope.is_finite() {
        WOutcome::Inconclusive
    } else if slope < 0.1 {
        WOutcome::ExceedsRmax
    } else {
        let mut out = WOutcome::ExceedsRmax;
        for r in 1..=r_max {
            let e = slope * (r as f64 + 1.0);
            if e > 1.25 {
                out = WOutcome::Finite(r);
                break;
            }
            if e >= 0.75 {
                out = WOutcome::Inconclusive;
                break;
            }
        }
        out
    };
    WReport { slope, outcome }
}

pub fn compute_w(model: TailModel, r_max: u32) -> Result<u32, TheoryError> {
    let n = Norming::new(model)?;
    let rep = classify_w(&n, r_max);
    match rep.outcome {
        WOutcome::Finite(w) => Ok(w),
        WOutcome::ExceedsRmax => Err(TheoryError::ExceedsRmax(r_max)),
        WOutcome::Inconclusive => Err(TheoryError::Inconclusive { slope: rep.slope }),
    }
}

/// `γ_n = (log 2)^s/(s−1) · (n/log n)^s · (log log n)^{(1−s)u}`.
pub fn gamma_n(s: f64, u: f64, n: f64) -> Result<f64, TheoryError> {
    if !(s > 1.0) || !(u > 1.0) || !(n >= 16.0) {
        return Err(TheoryError::DomainError(format!(
            "gamma_n needs s > 1, u > 1, n >= 16 (got s={s}, u={u}, n={n})"
        )));
    }
    let ln = n.ln();
    Ok(LN_2.powf(s) / (s - 1.0) * (n / ln).powf(s) * ln.ln().powf((1.0 - s) * u))
}

/// One row of the theory dump.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub n: u64,
    pub mu_tail_a: f64,
    pub w: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
}

/// `μ(A_{>n})`, `w_n`, `α`, `β`, `a`, `b` on a log-spaced integer grid.
/// `α` between nodes is the piecewise-linear interpolant and `β` inverts
/// that interpolant.
#[derive(Debug, Clone)]
pub struct TheoryTable {
    pub map: MapId,
    pub rows: Vec<TableRow>,
}

impl TheoryTable {
    pub fn build(norming: &Norming, n_max: u64, per_decade: usize) -> Result<Self, TheoryError> {
        let map = norming.model.obs.map;
        let mut nodes: Vec<u64> = (1..=10u64.min(n_max)).collect();
        let decades = (n_max as f64).log10();
        let total = (decades * per_decade as f64).ceil() as usize;
        for i in 0..=total {
            let v = 10f64.powf(i as f64 / per_decade as f64).round() as u64;
            if v > 10 && v <= n_max {
                nodes.push(v);
            }
        }
        nodes.push(n_max);
        nodes.sort_unstable();
        nodes.dedup();

        let mut rows: Vec<TableRow> = nodes
            .iter()
            .map(|&n| {
                let nf = n as f64;
                let a = if nf > norming.y0 { norming.a(nf) } else { f64::NAN };
                TableRow {
                    n,
                    mu_tail_a: mu_tail_a(map, n),
                    w: wandering_rate(map, nf),
                    alpha: alpha(map, nf),
                    beta: f64::NAN,
                    a,
                    b: norming.b(nf).unwrap_or(f64::NAN),
                }
            })
            .collect();
        for w in rows.windows(2) {
            if !(w[1].alpha > w[0].alpha) {
                return Err(TheoryError::NonMonotone(w[1].n));
            }
        }
        let table = TheoryTable { map, rows: rows.clone() };
        for r in rows.iter_mut() {
            r.beta = table.beta(r.n as f64).unwrap_or(f64::NAN);
        }
        Ok(TheoryTable { map, rows })
    }

    /// Piecewise-linear `α` through the nodes.
    pub fn alpha_interp(&self, t: f64) -> f64 {
        let i = self.rows.partition_point(|r| (r.n as f64) <= t);
        if i == 0 {
            return self.rows[0].alpha;
        }
        if i == self.rows.len() {
            return self.rows[i - 1].alpha;
        }
        let (p, q) = (&self.rows[i - 1], &self.rows[i]);
        let f = (t - p.n as f64) / (q.n - p.n) as f64;
        p.alpha + f * (q.alpha - p.alpha)
    }

    /// Inverse of `alpha_interp`.
    pub fn beta(&self, y: f64) -> Result<f64, TheoryError> {
        let first = &self.rows[0];
        let last = self.rows.last().expect("nonempty table");
        if !(y >= first.alpha && y <= last.alpha) {
            return Err(TheoryError::DomainError(format!("beta({y}) outside the table")));
        }
        let (mut lo, mut hi) = (first.n as f64, last.n as f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.alpha_interp(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}
