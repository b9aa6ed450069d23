//! The backward continued fraction map `x ↦ {1/(1−x)}` and the even-integer
//! continued fraction map `x ↦ |1/x − 2k|`, their cylinders, digit
//! observables and two orbit engines.
//!
//! Cylinders are indexed by `m ≥ 1`:
//!
//! * BCF: `I_m = ((m−1)/m, m/(m+1))`, digit `d = m+1`, neutral fixed point 0.
//! * ECF: `I_m = (1/(m+1), 1/m)`, `h = ⌈m/2⌉`, `ε = −1` for odd `m`, neutral
//!   fixed point 1.
//!
//! In both cases `E = closure(⋃_{m≥2} I_m)` and `I_1` is the only cylinder
//! outside `E`. An orbit in `I_1` stays there for a number of steps that can
//! be read off in closed form, so both engines emit runs rather than single
//! steps.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use twofloat::TwoFloat;

use crate::exactreal::{BitSource, Lft, RatInterval};
use crate::scalar::Scalar;

pub const DEFAULT_BIT_CAP: u64 = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("orbit hit a cylinder endpoint at step {step}")]
    BoundaryHit { step: u64 },
    #[error("interval straddles a cylinder endpoint")]
    NeedMoreBits,
    #[error("more than {cap} bits needed to resolve step {step}")]
    PrecisionExhausted { step: u64, cap: u64 },
    #[error("digit or run length at step {step} does not fit in 64 bits")]
    Overflow { step: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("interval straddles a cylinder endpoint")]
pub struct Ambiguous;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapId {
    Bcf,
    Ecf,
}

impl fmt::Display for MapId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapId::Bcf => "bcf",
            MapId::Ecf => "ecf",
        })
    }
}

impl FromStr for MapId {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bcf" => Ok(MapId::Bcf),
            "ecf" => Ok(MapId::Ecf),
            other => Err(format!("unknown map '{other}', expected bcf or ecf")),
        }
    }
}

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn qu(n: u64, d: u64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

impl MapId {
    pub const ALL: [MapId; 2] = [MapId::Bcf, MapId::Ecf];

    /// Closed inducing set as `(lo, hi)`.
    pub fn e_bounds(self) -> (BigRational, BigRational) {
        match self {
            MapId::Bcf => (q(1, 2), q(1, 1)),
            MapId::Ecf => (q(0, 1), q(1, 2)),
        }
    }

    pub fn in_e(self, cylinder: u64) -> bool {
        cylinder >= 2
    }

    /// Invariant density, normalized so that `μ(E) = 1`.
    pub fn density(self, x: f64) -> f64 {
        match self {
            MapId::Bcf => 1.0 / (x * std::f64::consts::LN_2),
            MapId::Ecf => 2.0 / (3f64.ln() * (1.0 - x * x)),
        }
    }

    /// `μ((a, b))` from the antiderivative of the density.
    pub fn measure(self, a: f64, b: f64) -> f64 {
        match self {
            MapId::Bcf => (b / a).log2(),
            MapId::Ecf => {
                let prim = |x: f64| ((1.0 + x) / (1.0 - x)).ln();
                (prim(b) - prim(a)) / 3f64.ln()
            }
        }
    }

    /// `(lo, hi)` of cylinder `I_m`.
    pub fn cylinder_bounds(self, m: u64) -> (BigRational, BigRational) {
        assert!(m >= 1);
        match self {
            MapId::Bcf => (qu(m - 1, m), qu(m, m + 1)),
            MapId::Ecf => (qu(1, m + 1), qu(1, m)),
        }
    }

    /// The map restricted to `I_m`, as an integer Möbius transform.
    pub fn branch(self, m: u64) -> Lft {
        let mb = BigInt::from(m);
        match self {
            MapId::Bcf => Lft::from_big(mb.clone(), BigInt::one() - mb, BigInt::from(-1), BigInt::one()),
            MapId::Ecf => {
                let k2 = BigInt::from(2 * m.div_ceil(2));
                if m % 2 == 1 {
                    Lft::from_big(k2, BigInt::from(-1), BigInt::one(), BigInt::zero())
                } else {
                    Lft::from_big(-k2, BigInt::one(), BigInt::one(), BigInt::zero())
                }
            }
        }
        .expect("branches are unimodular")
    }

    /// `n`-th iterate of the `I_1` branch.
    pub fn excursion(self, n: u64) -> Lft {
        let nb = BigInt::from(n);
        match self {
            MapId::Bcf => Lft::from_big(BigInt::one(), BigInt::zero(), -nb, BigInt::one()),
            MapId::Ecf => Lft::from_big(&nb + 1u32, -nb.clone(), nb.clone(), BigInt::one() - nb),
        }
        .expect("branches are unimodular")
    }

    /// Cylinder containing every interior point of `[lo, hi]`, with
    /// `0 ≤ lo < hi ≤ 1`. Endpoints may sit on cylinder boundaries since a
    /// random point lies strictly inside its interval.
    pub fn cylinder_of(self, iv: &RatInterval) -> Result<u64, Ambiguous> {
        classify(self, iv.lo.numer(), iv.lo.denom(), iv.hi.numer(), iv.hi.denom())
            .map(|c| c.cylinder())
            .ok_or(Ambiguous)
    }
}

/// Per-step output of an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DigitRecord {
    pub step: u64,
    pub cylinder_index: u64,
    pub in_e: bool,
}

impl DigitRecord {
    pub fn new(step: u64, cylinder_index: u64) -> Self {
        DigitRecord {
            step,
            cylinder_index,
            in_e: cylinder_index >= 2,
        }
    }

    pub fn bcf_digit(&self) -> u64 {
        self.cylinder_index + 1
    }

    pub fn ecf_h(&self) -> u64 {
        self.cylinder_index.div_ceil(2)
    }

    pub fn ecf_eps(&self) -> i8 {
        if self.cylinder_index % 2 == 1 {
            -1
        } else {
            1
        }
    }
}

/// `len` consecutive steps in cylinder `cylinder`. Engines return maximal
/// runs, so two `I_1` runs never follow each other. Only `I_1` runs have
/// `len > 1`; an `E` cylinder is left after one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Run {
    pub cylinder: u64,
    pub len: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// BCF: the digit `d`; ECF: the even partial quotient `2h`.
    Digits,
    /// ECF only: `⌊1/x⌋`.
    Gtilde,
    /// `(digits)^s`.
    Power { s: f64 },
    /// `t log t` of the digits.
    Tlogt,
}

impl fmt::Display for ObservableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObservableKind::Digits => f.write_str("digits"),
            ObservableKind::Gtilde => f.write_str("gtilde"),
            ObservableKind::Power { s } => write!(f, "power:{s}"),
            ObservableKind::Tlogt => f.write_str("tlogt"),
        }
    }
}

impl FromStr for ObservableKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        match lower.as_str() {
            "digits" | "g" => Ok(ObservableKind::Digits),
            "gtilde" => Ok(ObservableKind::Gtilde),
            "tlogt" => Ok(ObservableKind::Tlogt),
            _ => {
                if let Some(rest) = lower.strip_prefix("power:") {
                    let s: f64 = rest
                        .parse()
                        .map_err(|_| format!("bad exponent in '{s}'"))?;
                    if !(s.is_finite() && s > 0.0) {
                        return Err(format!("power exponent must be positive, got {s}"));
                    }
                    Ok(ObservableKind::Power { s })
                } else {
                    Err(format!(
                        "unknown observable '{s}', expected digits, gtilde, power:<s> or tlogt"
                    ))
                }
            }
        }
    }
}

/// An observable that is constant on cylinders.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSpec {
    pub map: MapId,
    pub kind: ObservableKind,
}

impl ObservableSpec {
    pub fn new(map: MapId, kind: ObservableKind) -> Result<Self, String> {
        if map == MapId::Bcf && kind == ObservableKind::Gtilde {
            return Err("gtilde is only defined for the ecf map".into());
        }
        Ok(ObservableSpec { map, kind })
    }

    pub fn bcf_g() -> Self {
        ObservableSpec {
            map: MapId::Bcf,
            kind: ObservableKind::Digits,
        }
    }

    pub fn ecf_g() -> Self {
        ObservableSpec {
            map: MapId::Ecf,
            kind: ObservableKind::Digits,
        }
    }

    pub fn ecf_gtilde() -> Self {
        ObservableSpec {
            map: MapId::Ecf,
            kind: ObservableKind::Gtilde,
        }
    }

    /// Integer-valued observables are accumulated exactly.
    pub fn is_integer_valued(&self) -> bool {
        matches!(self.kind, ObservableKind::Digits | ObservableKind::Gtilde)
    }

    /// BCF digit or ECF `2h` on cylinder `m`.
    pub fn base_digit(map: MapId, m: u64) -> u64 {
        match map {
            MapId::Bcf => m + 1,
            MapId::Ecf => 2 * m.div_ceil(2),
        }
    }

    /// Value on cylinder `m` for integer-valued kinds.
    pub fn int_value(&self, m: u64) -> Option<u64> {
        match self.kind {
            ObservableKind::Digits => Some(Self::base_digit(self.map, m)),
            ObservableKind::Gtilde => Some(m),
            _ => None,
        }
    }

    pub fn value_f64(&self, m: u64) -> f64 {
        let t = Self::base_digit(self.map, m) as f64;
        match self.kind {
            ObservableKind::Digits => t,
            ObservableKind::Gtilde => m as f64,
            ObservableKind::Power { s } => t.powf(s),
            ObservableKind::Tlogt => t * t.ln(),
        }
    }

    /// Value on cylinder `m` in the scalar type used by the ledger.
    pub fn value<S: Scalar>(&self, m: u64) -> S {
        match self.int_value(m) {
            Some(v) => S::from_count(v),
            None => S::from_f64(self.value_f64(m)).expect("observable value not representable"),
        }
    }

    /// Constant value on `X∖E`, i.e. on `I_1`.
    pub fn c<S: Scalar>(&self) -> S {
        self.value(1)
    }

    pub fn c_f64(&self) -> f64 {
        self.value_f64(1)
    }
}

pub fn observable_eval(spec: &ObservableSpec, rec: &DigitRecord) -> f64 {
    spec.value_f64(rec.cylinder_index)
}

enum Class {
    Cyl(u64),
    Neutral(u64),
}

impl Class {
    fn cylinder(&self) -> u64 {
        match self {
            Class::Cyl(m) => *m,
            Class::Neutral(_) => 1,
        }
    }
}

/// Cylinder of the interval with endpoints `ln/ld ≤ hn/hd` (positive
/// denominators). For `I_1` also returns the number of steps every interior
/// point is guaranteed to spend there. `None` if ambiguous or the digit does
/// not fit in `u64`.
fn classify(map: MapId, ln: &BigInt, ld: &BigInt, hn: &BigInt, hd: &BigInt) -> Option<Class> {
    match map {
        MapId::Bcf => {
            if !(ln < ld) || ln.is_negative() {
                return None;
            }
            let m = ld / (ld - ln);
            if hn * (&m + 1u32) > &m * hd {
                return None;
            }
            let m = m.to_u64()?;
            if m == 1 {
                if !hn.is_positive() {
                    return None;
                }
                let n = (hd / hn).to_u64()? - 1;
                Some(Class::Neutral(n))
            } else {
                Some(Class::Cyl(m))
            }
        }
        MapId::Ecf => {
            if !hn.is_positive() || hn > hd {
                return None;
            }
            let m = hd / hn;
            if ln * (&m + 1u32) < *ld {
                return None;
            }
            let m = m.to_u64()?;
            if m == 1 {
                let z = ld - ln;
                if !z.is_positive() {
                    return None;
                }
                let n = (ld / z).to_u64()? - 1;
                Some(Class::Neutral(n))
            } else {
                Some(Class::Cyl(m))
            }
        }
    }
}

/// One exact step of a rational point.
pub fn step_point(map: MapId, x: &BigRational) -> Result<(u64, BigRational), StepError> {
    let boundary = StepError::BoundaryHit { step: 1 };
    if !x.is_positive() || *x >= BigRational::one() {
        return Err(boundary);
    }
    match map {
        MapId::Bcf => {
            let r = (BigRational::one() - x).recip();
            if r.is_integer() {
                return Err(boundary);
            }
            let m = r.floor();
            let next = &r - &m;
            Ok((m.to_integer().to_u64().ok_or(StepError::Overflow { step: 1 })?, next))
        }
        MapId::Ecf => {
            let r = x.recip();
            if r.is_integer() {
                return Err(boundary);
            }
            let m = r.floor().to_integer();
            let mu = m.to_u64().ok_or(StepError::Overflow { step: 1 })?;
            let k2 = BigRational::from_integer(BigInt::from(2 * mu.div_ceil(2)));
            let next = if mu % 2 == 1 { k2 - r } else { r - k2 };
            Ok((mu, next))
        }
    }
}

pub fn bcf_step(x: &BigRational) -> Result<(DigitRecord, BigRational), StepError> {
    step_point(MapId::Bcf, x).map(|(m, y)| (DigitRecord::new(1, m), y))
}

pub fn ecf_step(x: &BigRational) -> Result<(DigitRecord, BigRational), StepError> {
    step_point(MapId::Ecf, x).map(|(m, y)| (DigitRecord::new(1, m), y))
}

/// One step of an interval; `NeedMoreBits` unless it lies in one cylinder.
pub fn step_interval(map: MapId, iv: &RatInterval) -> Result<(DigitRecord, RatInterval), StepError> {
    let m = map.cylinder_of(iv).map_err(|_| StepError::NeedMoreBits)?;
    let img = map
        .branch(m)
        .apply(iv)
        .map_err(|_| StepError::NeedMoreBits)?;
    Ok((DigitRecord::new(1, m), img))
}

/// Where an orbit starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Lebesgue-uniform on `E`.
    UniformE,
    /// Lebesgue-uniform on `[0,1]`.
    Uniform01,
}

impl FromStr for Start {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform_E" | "uniform_e" => Ok(Start::UniformE),
            "uniform_01" => Ok(Start::Uniform01),
            other => Err(format!("unknown start '{other}', expected uniform_E or uniform_01")),
        }
    }
}

impl fmt::Display for Start {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Start::UniformE => "uniform_E",
            Start::Uniform01 => "uniform_01",
        })
    }
}

fn start_lft(map: MapId, start: &Start) -> Lft {
    match (start, map) {
        (Start::Uniform01, _) => Lft::identity(),
        (Start::UniformE, MapId::Bcf) => Lft::new(1, 1, 0, 2),
        (Start::UniformE, MapId::Ecf) => Lft::new(1, 0, 0, 2),
    }
}

/// Anything that produces an orbit as a stream of runs.
pub trait OrbitEngine {
    fn map(&self) -> MapId;
    /// Steps emitted so far.
    fn steps(&self) -> u64;
    fn bits_consumed(&self) -> u64;
    fn is_rigorous(&self) -> bool;
    fn next_run(&mut self) -> Result<Run, StepError>;
}

enum ExactState {
    // det_pos: sign of det M, tracked so the hot loop never multiplies two
    // large entries together
    Random { m: Lft, src: BitSource, det_pos: bool },
    Point(BigRational),
    Dead,
}

/// Exact engine. A random point is `M(t)` with `t` the unread part of the bit
/// stream; a rational fixture is iterated directly.
pub struct ExactEngine {
    map: MapId,
    state: ExactState,
    // the run read past the end of an I_1 stretch, to know it was maximal
    ahead: Option<Result<Run, StepError>>,
    steps: u64,
    bits: u64,
    bit_cap: u64,
}

impl ExactEngine {
    pub fn new(map: MapId, seed: u64, start: &Start) -> Self {
        ExactEngine {
            map,
            state: ExactState::Random {
                m: start_lft(map, start),
                src: BitSource::new(seed),
                det_pos: true,
            },
            ahead: None,
            steps: 0,
            bits: 0,
            bit_cap: DEFAULT_BIT_CAP,
        }
    }

    pub fn from_rational(map: MapId, x: BigRational) -> Self {
        ExactEngine {
            map,
            state: ExactState::Point(x),
            ahead: None,
            steps: 0,
            bits: 0,
            bit_cap: DEFAULT_BIT_CAP,
        }
    }

    pub fn with_bit_cap(mut self, cap: u64) -> Self {
        self.bit_cap = cap;
        self
    }

    /// Current transform, for inspection in tests.
    pub fn lft(&self) -> Option<&Lft> {
        match &self.state {
            ExactState::Random { m, .. } => Some(m),
            _ => None,
        }
    }

    fn fail(&mut self, e: StepError) -> Result<Run, StepError> {
        self.state = ExactState::Dead;
        Err(e)
    }

    /// Joins the pieces the interval classification hands out into one
    /// maximal `I_1` run.
    fn next_merged(&mut self) -> Result<Run, StepError> {
        let mut run = match self.ahead.take() {
            Some(r) => r?,
            None => self.next_random()?,
        };
        if run.cylinder != 1 {
            return Ok(run);
        }
        loop {
            match self.next_random() {
                Ok(r) if r.cylinder == 1 => run.len += r.len,
                other => {
                    self.ahead = Some(other);
                    return Ok(run);
                }
            }
        }
    }

    fn next_random(&mut self) -> Result<Run, StepError> {
        let step = self.steps + 1;
        let map = self.map;
        let cap = self.bit_cap;
        let ExactState::Random { m, src, det_pos } = &mut self.state else {
            unreachable!()
        };
        let mut spent = 0u64;
        let mut chunk = 4u64;
        let class = loop {
            // d > 0 and c + d > 0 are kept by normalization, since M maps
            // [0,1] into (0,1) without a pole.
            let e0 = (&m.b, &m.d);
            let num1 = &m.a + &m.b;
            let den1 = &m.c + &m.d;
            let (lo, hi) = if *det_pos {
                (e0, (&num1, &den1))
            } else {
                ((&num1, &den1), e0)
            };
            if let Some(c) = classify(map, lo.0, lo.1, hi.0, hi.1) {
                break c;
            }
            if spent >= cap {
                let e = StepError::PrecisionExhausted { step, cap };
                return self.fail(e);
            }
            let e = chunk.min(cap - spent);
            let p = src.next_bits(e);
            // M · (t ↦ (t + p)/2^e)
            m.b = &m.a * &p + (&m.b << e);
            m.d = &m.c * &p + (&m.d << e);
            m.normalize_pow2();
            spent += e;
            chunk = (chunk * 2).min(256);
        };
        self.bits += spent;
        let (cyl, len, branch) = match class {
            Class::Cyl(c) => (c, 1, map.branch(c)),
            Class::Neutral(n) => (1, n, map.excursion(n)),
        };
        // only the even ECF branches reverse orientation
        if map == MapId::Ecf && cyl % 2 == 0 {
            *det_pos = !*det_pos;
        }
        let mut next = branch.compose_raw(m);
        next.normalize_pow2();
        if next.d.is_negative() {
            next = Lft {
                a: -next.a,
                b: -next.b,
                c: -next.c,
                d: -next.d,
            };
        }
        *m = next;
        match self.steps.checked_add(len) {
            Some(s) => self.steps = s,
            None => return self.fail(StepError::Overflow { step }),
        }
        Ok(Run { cylinder: cyl, len })
    }

    fn next_point(&mut self) -> Result<Run, StepError> {
        let step = self.steps + 1;
        let map = self.map;
        let ExactState::Point(x) = &mut self.state else {
            unreachable!()
        };
        let one = BigRational::one();
        // In I_1 the orbit is 1/z ↦ 1/z − 1 in the coordinate z = x (BCF)
        // or z = 1 − x (ECF), and it leaves once 1/z ≤ 2.
        let z = match map {
            MapId::Bcf => x.clone(),
            MapId::Ecf => &one - &*x,
        };
        let half = q(1, 2);
        if z.is_positive() && z < half {
            let inv = z.recip();
            let n: BigInt = inv.ceil().to_integer() - 2;
            let Some(n) = n.to_u64() else {
                return self.fail(StepError::Overflow { step });
            };
            let z2 = (inv - BigRational::from_integer(n.into())).recip();
            *x = match map {
                MapId::Bcf => z2,
                MapId::Ecf => one - z2,
            };
            self.steps += n;
            return Ok(Run { cylinder: 1, len: n });
        }
        match step_point(map, x) {
            Ok((c, y)) => {
                *x = y;
                self.steps += 1;
                Ok(Run { cylinder: c, len: 1 })
            }
            Err(StepError::BoundaryHit { .. }) => self.fail(StepError::BoundaryHit { step }),
            Err(StepError::Overflow { .. }) => self.fail(StepError::Overflow { step }),
            Err(e) => self.fail(e),
        }
    }
}

impl OrbitEngine for ExactEngine {
    fn map(&self) -> MapId {
        self.map
    }

    fn steps(&self) -> u64 {
        match &self.ahead {
            Some(Ok(r)) => self.steps - r.len,
            _ => self.steps,
        }
    }

    fn bits_consumed(&self) -> u64 {
        self.bits
    }

    fn is_rigorous(&self) -> bool {
        true
    }

    fn next_run(&mut self) -> Result<Run, StepError> {
        if self.ahead.is_some() {
            return self.next_merged();
        }
        match self.state {
            ExactState::Random { .. } => self.next_merged(),
            ExactState::Point(_) => self.next_point(),
            ExactState::Dead => Err(StepError::BoundaryHit { step: self.steps + 1 }),
        }
    }
}

/// Relative distance below which a double is treated as sitting on a
/// cylinder endpoint.
const FLOAT_BOUNDARY_TOL: f64 = 8.0 * f64::EPSILON;

fn near_integer(r: f64) -> bool {
    (r - r.round()).abs() <= FLOAT_BOUNDARY_TOL * r.abs().max(1.0)
}

/// One double-precision step. Non-rigorous.
pub fn float_step(map: MapId, x: f64) -> Result<(DigitRecord, f64), StepError> {
    let boundary = StepError::BoundaryHit { step: 1 };
    if !(x > 0.0 && x < 1.0) {
        return Err(boundary);
    }
    let (m, next) = match map {
        MapId::Bcf => {
            let r = 1.0 / (1.0 - x);
            if near_integer(r) {
                return Err(boundary);
            }
            let m = r.floor();
            (m, r - m)
        }
        MapId::Ecf => {
            let r = 1.0 / x;
            if near_integer(r) {
                return Err(boundary);
            }
            let m = r.floor();
            let k2 = 2.0 * (m / 2.0).ceil();
            (m, (r - k2).abs())
        }
    };
    if m >= u64::MAX as f64 {
        return Err(StepError::Overflow { step: 1 });
    }
    Ok((DigitRecord::new(1, m as u64), next))
}

/// Relative distance below which a double-double is treated as sitting on
/// a cylinder endpoint.
const DD_BOUNDARY_TOL: f64 = 1e-29;

fn dd_near_integer(r: TwoFloat) -> bool {
    let d = r - r.round();
    d.abs() <= TwoFloat::from(DD_BOUNDARY_TOL) * r.abs().max(TwoFloat::from(1.0))
}

/// `1/x` to double-double accuracy. The library quotient is only good to
/// about 1e-17 here, so one Newton step cleans it up.
fn dd_recip(x: TwoFloat) -> TwoFloat {
    let y = x.recip();
    y + y * (1.0 - x * y)
}

/// Bits of the stream the float engine starts from.
pub const FLOAT_START_BITS: u64 = 106;

/// Floating-point engine on double-double numbers (about 106 bits). Starts
/// from the first 106 bits of the same bit stream the exact engine reads, so
/// the two agree on a prefix; a plain double start is too coarse for that,
/// since 20 digits routinely need more than 53 bits. Non-rigorous.
pub struct FloatEngine {
    map: MapId,
    x: TwoFloat,
    steps: u64,
    dead: bool,
}

impl FloatEngine {
    pub fn new(map: MapId, seed: u64, start: &Start) -> Self {
        let mut src = BitSource::new(seed);
        let hi = src.next_bits_u64(53) as f64 / (1u64 << 53) as f64;
        let lo = src.next_bits_u64(53) as f64 / (1u64 << 53) as f64 / (1u64 << 53) as f64;
        let u = TwoFloat::new_add(hi, lo);
        let x = match (start, map) {
            (Start::Uniform01, _) => u,
            (Start::UniformE, MapId::Bcf) => u * 0.5 + 0.5,
            (Start::UniformE, MapId::Ecf) => u * 0.5,
        };
        FloatEngine {
            map,
            x,
            steps: 0,
            dead: false,
        }
    }

    pub fn from_f64(map: MapId, x: f64) -> Self {
        FloatEngine {
            map,
            x: TwoFloat::from(x),
            steps: 0,
            dead: false,
        }
    }

    /// Current point, rounded to a double.
    pub fn point(&self) -> f64 {
        self.x.hi() + self.x.lo()
    }

    fn fail(&mut self, e: StepError) -> Result<Run, StepError> {
        self.dead = true;
        Err(e)
    }

    fn one_step(&self) -> Result<(u64, TwoFloat), StepError> {
        let boundary = StepError::BoundaryHit { step: 1 };
        let one = TwoFloat::from(1.0);
        let x = self.x;
        if !(x > TwoFloat::from(0.0) && x < one) {
            return Err(boundary);
        }
        let r = match self.map {
            MapId::Bcf => dd_recip(one - x),
            MapId::Ecf => dd_recip(x),
        };
        if dd_near_integer(r) {
            return Err(boundary);
        }
        let m = r.floor();
        if m.hi() >= u64::MAX as f64 {
            return Err(StepError::Overflow { step: 1 });
        }
        let next = match self.map {
            MapId::Bcf => r - m,
            MapId::Ecf => (r - (m * 0.5).ceil() * 2.0).abs(),
        };
        Ok(((m.hi() + m.lo()) as u64, next))
    }
}

impl OrbitEngine for FloatEngine {
    fn map(&self) -> MapId {
        self.map
    }

    fn steps(&self) -> u64 {
        self.steps
    }

    fn bits_consumed(&self) -> u64 {
        FLOAT_START_BITS
    }

    fn is_rigorous(&self) -> bool {
        false
    }

    fn next_run(&mut self) -> Result<Run, StepError> {
        let step = self.steps + 1;
        if self.dead {
            return Err(StepError::BoundaryHit { step });
        }
        let one = TwoFloat::from(1.0);
        let z = match self.map {
            MapId::Bcf => self.x,
            MapId::Ecf => one - self.x,
        };
        if z > TwoFloat::from(0.0) && z < TwoFloat::from(0.5) {
            // a whole I_1 stretch at once: 1/z drops by one per step
            let inv = dd_recip(z);
            if dd_near_integer(inv) {
                return self.fail(StepError::BoundaryHit { step });
            }
            let n = inv.ceil() - 2.0;
            if n.hi() >= u64::MAX as f64 {
                return self.fail(StepError::Overflow { step });
            }
            let z2 = dd_recip(inv - n);
            self.x = match self.map {
                MapId::Bcf => z2,
                MapId::Ecf => one - z2,
            };
            let len = (n.hi() + n.lo()) as u64;
            self.steps += len;
            return Ok(Run { cylinder: 1, len });
        }
        match self.one_step() {
            Ok((m, y)) => {
                self.x = y;
                self.steps += 1;
                Ok(Run { cylinder: m, len: 1 })
            }
            Err(StepError::Overflow { .. }) => self.fail(StepError::Overflow { step }),
            Err(_) => self.fail(StepError::BoundaryHit { step }),
        }
    }
}

/// Expands runs into per-step cylinder indices; handy for short orbits.
pub fn cylinder_prefix<E: OrbitEngine>(engine: &mut E, steps: usize) -> Result<Vec<u64>, (Vec<u64>, StepError)> {
    let mut out = Vec::with_capacity(steps);
    while out.len() < steps {
        match engine.next_run() {
            Ok(run) => {
                let take = (run.len as usize).min(steps - out.len());
                out.extend(std::iter::repeat(run.cylinder).take(take));
            }
            Err(e) => return Err((out, e)),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        q(n, d)
    }

    #[test]
    fn bcf_step_examples() {
        let (rec, y) = bcf_step(&r(2, 5)).unwrap();
        assert_eq!((rec.bcf_digit(), y), (2, r(2, 3)));
        let (rec, y) = bcf_step(&r(7, 10)).unwrap();
        assert_eq!((rec.bcf_digit(), y), (4, r(1, 3)));
        let (rec, y) = bcf_step(&r(3, 5)).unwrap();
        assert_eq!((rec.bcf_digit(), y), (3, r(1, 2)));
    }

    #[test]
    fn ecf_step_examples() {
        let (rec, y) = ecf_step(&r(3, 10)).unwrap();
        assert_eq!((rec.ecf_h(), rec.ecf_eps(), y), (2, -1, r(2, 3)));
        let (rec, y) = ecf_step(&r(2, 5)).unwrap();
        assert_eq!((rec.ecf_h(), rec.ecf_eps(), y), (1, 1, r(1, 2)));
        assert_eq!(ecf_step(&r(1, 3)), Err(StepError::BoundaryHit { step: 1 }));
    }

    #[test]
    fn cylinder_of_examples() {
        let iv = |a: i64, b: i64| RatInterval::new(r(a, 100), r(b, 100));
        assert_eq!(MapId::Ecf.cylinder_of(&iv(26, 30)), Ok(3));
        assert_eq!(MapId::Ecf.cylinder_of(&iv(30, 40)), Err(Ambiguous));
        assert_eq!(MapId::Bcf.cylinder_of(&iv(55, 60)), Ok(2));
        assert_eq!(MapId::Bcf.cylinder_of(&iv(0, 100)), Err(Ambiguous));
        assert_eq!(MapId::Ecf.cylinder_of(&iv(0, 100)), Err(Ambiguous));
    }

    #[test]
    fn observable_examples() {
        let rec = DigitRecord::new(1, 3);
        assert_eq!(observable_eval(&ObservableSpec::ecf_gtilde(), &rec), 3.0);
        assert_eq!(2 * rec.ecf_h() as i64 + (rec.ecf_eps() as i64 - 1) / 2, 3);
        let rec = DigitRecord::new(1, 2);
        assert_eq!(observable_eval(&ObservableSpec::ecf_g(), &rec), 2.0);
        let p = ObservableSpec::new(MapId::Bcf, ObservableKind::Power { s: 2.0 }).unwrap();
        assert_eq!(observable_eval(&p, &DigitRecord::new(1, 4)), 25.0);
    }

    #[test]
    fn constants_off_e() {
        assert_eq!(ObservableSpec::bcf_g().c::<i128>(), 2);
        assert_eq!(ObservableSpec::ecf_g().c::<i128>(), 2);
        assert_eq!(ObservableSpec::ecf_gtilde().c::<i128>(), 1);
        let p = ObservableSpec::new(MapId::Bcf, ObservableKind::Power { s: 0.5 }).unwrap();
        assert!((p.c_f64() - 2f64.sqrt()).abs() < 1e-15);
        assert!(ObservableSpec::new(MapId::Bcf, ObservableKind::Gtilde).is_err());
    }

    #[test]
    fn float_step_examples() {
        let (rec, y) = float_step(MapId::Bcf, 0.25).unwrap();
        assert_eq!(rec.bcf_digit(), 2);
        assert!((y - 1.0 / 3.0).abs() < 1e-15);
        let (rec, y) = float_step(MapId::Ecf, 0.3).unwrap();
        assert_eq!((rec.ecf_h(), rec.ecf_eps()), (2, -1));
        assert!((y - 2.0 / 3.0).abs() < 1e-12);
        let (rec, y) = float_step(MapId::Bcf, 0.6).unwrap();
        assert_eq!(rec.bcf_digit(), 3);
        assert!((y - 0.5).abs() < 1e-15);
    }

    #[test]
    fn observable_parse() {
        assert_eq!("power:0.5".parse::<ObservableKind>(), Ok(ObservableKind::Power { s: 0.5 }));
        assert_eq!("digits".parse::<ObservableKind>(), Ok(ObservableKind::Digits));
        assert!("power:-1".parse::<ObservableKind>().is_err());
        assert!("nope".parse::<ObservableKind>().is_err());
    }

    #[test]
    fn exact_engine_runs_and_steps_agree() {
        let mut e = ExactEngine::new(MapId::Bcf, 11, &Start::UniformE);
        let first = e.next_run().unwrap();
        assert!(first.cylinder >= 2 && first.len == 1);
        let mut total = 1;
        for _ in 0..50 {
            total += e.next_run().unwrap().len;
        }
        assert_eq!(e.steps(), total);
        assert!(e.bits_consumed() > 0);
    }

    #[test]
    fn exact_runs_are_maximal() {
        for map in MapId::ALL {
            for seed in 0..40 {
                let mut e = ExactEngine::new(map, seed, &Start::UniformE);
                let mut prev = e.next_run().unwrap();
                for _ in 0..100 {
                    let r = e.next_run().unwrap();
                    assert!(!(prev.cylinder == 1 && r.cylinder == 1), "{map} seed {seed}: split I_1 run");
                    prev = r;
                }
            }
        }
        // seed 0 opens with 19 steps in I_1; earlier builds handed it out in pieces
        let mut e = ExactEngine::new(MapId::Bcf, 0, &Start::UniformE);
        e.next_run().unwrap();
        assert_eq!(e.next_run().unwrap(), Run { cylinder: 1, len: 19 });
        assert_eq!(e.steps(), 20);
    }

    #[test]
    fn tracked_orientation_matches_determinant() {
        for map in MapId::ALL {
            let mut e = ExactEngine::new(map, 21, &Start::UniformE);
            for _ in 0..200 {
                e.next_run().unwrap();
                let ExactState::Random { m, det_pos, .. } = &e.state else { unreachable!() };
                assert_eq!(m.det().is_positive(), *det_pos);
            }
        }
    }

    #[test]
    fn bit_cap_is_enforced() {
        let mut e = ExactEngine::new(MapId::Bcf, 1, &Start::Uniform01).with_bit_cap(1);
        let mut saw = false;
        for _ in 0..20 {
            match e.next_run() {
                Err(StepError::PrecisionExhausted { cap: 1, .. }) => {
                    saw = true;
                    break;
                }
                Err(other) => panic!("{other}"),
                Ok(_) => {}
            }
        }
        assert!(saw);
    }

    #[test]
    fn rational_fixture_hits_boundary() {
        let mut e = ExactEngine::from_rational(MapId::Bcf, r(2, 5));
        assert_eq!(e.next_run(), Ok(Run { cylinder: 1, len: 1 }));
        // 2/5 -> 2/3, the right end of I_2
        assert_eq!(e.next_run(), Err(StepError::BoundaryHit { step: 2 }));
    }
}
