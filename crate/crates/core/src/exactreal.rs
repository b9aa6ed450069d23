//! Lazily revealed random reals and integer Möbius transforms.
//!
//! A random point of `[0,1]` is never materialized. It is the limit of the
//! dyadic intervals cut out by a deterministic bit stream, and the orbit
//! engines in `cfmaps` carry it around as `t ↦ (a·t+b)/(c·t+d)` applied to the
//! part of the bit stream not yet read.

use std::fmt;

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExactRealError {
    #[error("denominator c*t+d changes sign on the interval")]
    SignChange,
    #[error("degenerate transform (zero determinant)")]
    Singular,
}

/// Identifier written next to every seed in experiment output.
pub const BIT_SOURCE_ALGORITHM: &str = "chacha20/rand_chacha-0.3/seed_from_u64/msb-first";

/// Deterministic bit stream. Bits come out of consecutive little-endian
/// `u64` words of ChaCha20, most significant bit first.
#[derive(Clone)]
pub struct BitSource {
    rng: ChaCha20Rng,
    seed: u64,
    word: u64,
    left: u32,
    bits_consumed: u64,
}

impl fmt::Debug for BitSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BitSource")
            .field("algorithm_id", &BIT_SOURCE_ALGORITHM)
            .field("seed", &self.seed)
            .field("bits_consumed", &self.bits_consumed)
            .finish()
    }
}

impl BitSource {
    pub fn new(seed: u64) -> Self {
        BitSource {
            rng: ChaCha20Rng::seed_from_u64(seed),
            seed,
            word: 0,
            left: 0,
            bits_consumed: 0,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn algorithm_id(&self) -> &'static str {
        BIT_SOURCE_ALGORITHM
    }

    pub fn bits_consumed(&self) -> u64 {
        self.bits_consumed
    }

    pub fn next_bit(&mut self) -> bool {
        if self.left == 0 {
            self.word = self.rng.next_u64();
            self.left = 64;
        }
        self.left -= 1;
        self.bits_consumed += 1;
        (self.word >> self.left) & 1 == 1
    }

    /// Next `k ≤ 64` bits as an integer, first bit most significant.
    pub fn next_bits_u64(&mut self, k: u32) -> u64 {
        assert!(k <= 64);
        let mut out = 0u64;
        let mut need = k;
        while need > 0 {
            if self.left == 0 {
                self.word = self.rng.next_u64();
                self.left = 64;
            }
            let take = need.min(self.left);
            let shift = self.left - take;
            let chunk = if take == 64 {
                self.word
            } else {
                (self.word >> shift) & ((1u64 << take) - 1)
            };
            out = if take == 64 { chunk } else { (out << take) | chunk };
            self.left -= take;
            need -= take;
        }
        self.bits_consumed += k as u64;
        out
    }

    /// Next `k` bits as a big integer, first bit most significant.
    pub fn next_bits(&mut self, k: u64) -> BigInt {
        let mut out = BigInt::zero();
        let mut need = k;
        while need > 0 {
            let take = need.min(64) as u32;
            out = (out << take) | BigInt::from(self.next_bits_u64(take));
            need -= take as u64;
        }
        out
    }
}

/// `[lo/2^k, hi/2^k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DyadicInterval {
    pub lo_numerator: BigInt,
    pub hi_numerator: BigInt,
    pub exponent: u64,
}

impl DyadicInterval {
    pub fn unit() -> Self {
        DyadicInterval {
            lo_numerator: BigInt::zero(),
            hi_numerator: BigInt::one(),
            exponent: 0,
        }
    }

    pub fn lo(&self) -> BigRational {
        BigRational::new(self.lo_numerator.clone(), BigInt::one() << self.exponent)
    }

    pub fn hi(&self) -> BigRational {
        BigRational::new(self.hi_numerator.clone(), BigInt::one() << self.exponent)
    }

    pub fn width(&self) -> BigRational {
        BigRational::new(
            &self.hi_numerator - &self.lo_numerator,
            BigInt::one() << self.exponent,
        )
    }

    /// Sub-interval picked out by the next `extra_bits` bits. Only
    /// meaningful on intervals of width `2^-k`, which is what refinement
    /// produces from the unit interval.
    pub fn refine(&self, src: &mut BitSource, extra_bits: u64) -> DyadicInterval {
        if extra_bits == 0 {
            return self.clone();
        }
        let p = src.next_bits(extra_bits);
        let width = &self.hi_numerator - &self.lo_numerator;
        let lo = (&self.lo_numerator << extra_bits) + &width * &p;
        let hi = &lo + width;
        DyadicInterval {
            lo_numerator: lo,
            hi_numerator: hi,
            exponent: self.exponent + extra_bits,
        }
    }
}

pub fn refine(src: &mut BitSource, interval: &DyadicInterval, extra_bits: u64) -> DyadicInterval {
    interval.refine(src, extra_bits)
}

/// Closed rational interval with `lo ≤ hi`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RatInterval {
    pub lo: BigRational,
    pub hi: BigRational,
}

impl RatInterval {
    pub fn new(a: BigRational, b: BigRational) -> Self {
        if a <= b {
            RatInterval { lo: a, hi: b }
        } else {
            RatInterval { lo: b, hi: a }
        }
    }

    pub fn point(x: BigRational) -> Self {
        RatInterval {
            lo: x.clone(),
            hi: x,
        }
    }

    pub fn contains(&self, x: &BigRational) -> bool {
        &self.lo <= x && x <= &self.hi
    }
}

/// `t ↦ (a·t + b)/(c·t + d)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Lft {
    pub a: BigInt,
    pub b: BigInt,
    pub c: BigInt,
    pub d: BigInt,
}

impl Lft {
    /// Builds and normalizes. Panics on a zero determinant, which no map
    /// branch or bit-consumption step can produce.
    pub fn new(a: i64, b: i64, c: i64, d: i64) -> Self {
        Self::from_big(a.into(), b.into(), c.into(), d.into())
            .expect("singular transform")
    }

    pub fn from_big(a: BigInt, b: BigInt, c: BigInt, d: BigInt) -> Result<Self, ExactRealError> {
        let mut m = Lft { a, b, c, d };
        if m.det().is_zero() {
            return Err(ExactRealError::Singular);
        }
        m.normalize();
        Ok(m)
    }

    pub fn identity() -> Self {
        Lft::new(1, 0, 0, 1)
    }

    pub fn det(&self) -> BigInt {
        &self.a * &self.d - &self.b * &self.c
    }

    /// Divides out the gcd of the entries and fixes the overall sign so that
    /// the first nonzero of `(d, c)` is positive. A transform and its negation
    /// act identically; this picks one representative.
    pub fn normalize(&mut self) {
        let g = self.a.gcd(&self.b).gcd(&self.c).gcd(&self.d);
        if !g.is_zero() && !g.is_one() {
            self.a /= &g;
            self.b /= &g;
            self.c /= &g;
            self.d /= &g;
        }
        let flip = match self.d.sign() {
            Sign::Minus => true,
            Sign::Plus => false,
            Sign::NoSign => self.c.is_negative(),
        };
        if flip {
            self.negate();
        }
    }

    /// Cheaper normalization for products of map branches and bit steps.
    /// Their determinants are `±2^k`, and any common factor of the entries
    /// squared divides the determinant, so only powers of two can be shared.
    pub(crate) fn normalize_pow2(&mut self) {
        let tz = [&self.a, &self.b, &self.c, &self.d]
            .iter()
            .filter_map(|x| x.trailing_zeros())
            .min()
            .unwrap_or(0);
        if tz > 0 {
            self.a >>= tz;
            self.b >>= tz;
            self.c >>= tz;
            self.d >>= tz;
        }
    }

    fn negate(&mut self) {
        self.a = -std::mem::take(&mut self.a);
        self.b = -std::mem::take(&mut self.b);
        self.c = -std::mem::take(&mut self.c);
        self.d = -std::mem::take(&mut self.d);
    }

    /// Matrix product `outer · inner`, i.e. `t ↦ outer(inner(t))`.
    pub fn compose(&self, inner: &Lft) -> Lft {
        let mut m = self.compose_raw(inner);
        m.normalize();
        m
    }

    pub(crate) fn compose_raw(&self, inner: &Lft) -> Lft {
        Lft {
            a: &self.a * &inner.a + &self.b * &inner.c,
            b: &self.a * &inner.b + &self.b * &inner.d,
            c: &self.c * &inner.a + &self.d * &inner.c,
            d: &self.c * &inner.b + &self.d * &inner.d,
        }
    }

    /// Image of a single rational; `None` at the pole.
    pub fn eval(&self, t: &BigRational) -> Option<BigRational> {
        let num = BigRational::from_integer(self.a.clone()) * t + BigRational::from_integer(self.b.clone());
        let den = BigRational::from_integer(self.c.clone()) * t + BigRational::from_integer(self.d.clone());
        if den.is_zero() {
            None
        } else {
            Some(num / den)
        }
    }

    /// Exact image of `[lo, hi]`. The denominator is affine in `t`, so it
    /// keeps its sign on the interval iff it has the same strict sign at
    /// both ends.
    pub fn apply(&self, iv: &RatInterval) -> Result<RatInterval, ExactRealError> {
        let den_at = |t: &BigRational| {
            BigRational::from_integer(self.c.clone()) * t + BigRational::from_integer(self.d.clone())
        };
        let dl = den_at(&iv.lo);
        let dh = den_at(&iv.hi);
        if dl.is_zero() || dh.is_zero() || dl.is_positive() != dh.is_positive() {
            return Err(ExactRealError::SignChange);
        }
        let x = self.eval(&iv.lo).ok_or(ExactRealError::SignChange)?;
        let y = self.eval(&iv.hi).ok_or(ExactRealError::SignChange)?;
        Ok(RatInterval::new(x, y))
    }

    pub fn apply_dyadic(&self, iv: &DyadicInterval) -> Result<RatInterval, ExactRealError> {
        self.apply(&RatInterval {
            lo: iv.lo(),
            hi: iv.hi(),
        })
    }

    /// Whether the transform is increasing where it is defined.
    pub fn is_increasing(&self) -> bool {
        self.det().is_positive()
    }
}

pub fn lft_apply(m: &Lft, interval: &DyadicInterval) -> Result<RatInterval, ExactRealError> {
    m.apply_dyadic(interval)
}

pub fn lft_compose(outer: &Lft, inner: &Lft) -> Lft {
    outer.compose(inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn refine_zero_bits_is_identity() {
        let mut src = BitSource::new(1);
        let iv = DyadicInterval::unit();
        assert_eq!(refine(&mut src, &iv, 0), iv);
        assert_eq!(src.bits_consumed(), 0);
    }

    #[test]
    fn refine_follows_bits() {
        let mut src = BitSource::new(3);
        let mut probe = src.clone();
        let bits: Vec<bool> = (0..3).map(|_| probe.next_bit()).collect();
        let iv = refine(&mut src, &DyadicInterval::unit(), 3);
        let k = bits.iter().fold(0i64, |acc, &b| 2 * acc + b as i64);
        assert_eq!(iv.lo(), q(k, 8));
        assert_eq!(iv.hi(), q(k + 1, 8));
    }

    #[test]
    fn refine_64_bits_width() {
        let mut src = BitSource::new(99);
        let iv = refine(&mut src, &DyadicInterval::unit(), 64);
        assert_eq!(iv.width(), BigRational::new(1.into(), BigInt::one() << 64u32));
    }

    #[test]
    fn chunked_and_single_bits_agree() {
        let mut a = BitSource::new(5);
        let mut b = BitSource::new(5);
        let chunk = a.next_bits(150);
        let mut acc = BigInt::zero();
        for _ in 0..150 {
            acc = (acc << 1u32) + BigInt::from(b.next_bit() as u8);
        }
        assert_eq!(chunk, acc);
        assert_eq!(a.next_bits_u64(13), b.next_bits_u64(13));
        assert_eq!(a.bits_consumed(), 163);
    }

    #[test]
    fn apply_examples() {
        let id = Lft::identity();
        let iv = RatInterval::new(q(1, 4), q(1, 2));
        assert_eq!(id.apply(&iv).unwrap(), iv);

        let inv = Lft::new(0, 1, -1, 1);
        let img = inv.apply(&RatInterval::new(q(1, 2), q(2, 3))).unwrap();
        assert_eq!(img, RatInterval::new(q(2, 1), q(3, 1)));

        let half = Lft::new(1, 1, 0, 2);
        let img = lft_apply(&half, &DyadicInterval::unit()).unwrap();
        assert_eq!(img, RatInterval::new(q(1, 2), q(1, 1)));
    }

    #[test]
    fn apply_orientation_swaps() {
        let recip = Lft::new(0, 1, 1, 0);
        let img = recip.apply(&RatInterval::new(q(1, 3), q(1, 2))).unwrap();
        assert_eq!(img, RatInterval::new(q(2, 1), q(3, 1)));
        assert!(!recip.is_increasing());
    }

    #[test]
    fn apply_rejects_pole() {
        let inv = Lft::new(0, 1, -1, 1);
        assert_eq!(
            inv.apply(&RatInterval::new(q(1, 2), q(3, 2))),
            Err(ExactRealError::SignChange)
        );
        assert_eq!(
            inv.apply(&RatInterval::new(q(0, 1), q(1, 1))),
            Err(ExactRealError::SignChange)
        );
    }

    #[test]
    fn compose_examples() {
        let m = Lft::new(3, 1, 2, 5);
        assert_eq!(lft_compose(&Lft::identity(), &m), m);
        assert_eq!(Lft::new(2, 4, 6, 8), Lft::new(1, 2, 3, 4));

        let outer = Lft::new(0, 1, -1, 1);
        let inner = Lft::new(1, 1, 0, 2);
        let got = lft_compose(&outer, &inner);
        assert_eq!(got, Lft::new(0, 2, -1, 1));
        for t in [q(0, 1), q(1, 2)] {
            let lhs = got.eval(&t).unwrap();
            let rhs = outer.eval(&inner.eval(&t).unwrap()).unwrap();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn singular_rejected() {
        assert_eq!(
            Lft::from_big(1.into(), 2.into(), 2.into(), 4.into()),
            Err(ExactRealError::Singular)
        );
    }

    #[test]
    fn pow2_normalization_matches_gcd() {
        let mut m = Lft {
            a: BigInt::from(12),
            b: BigInt::from(-8),
            c: BigInt::from(4),
            d: BigInt::from(0),
        };
        m.normalize_pow2();
        assert_eq!((m.a.clone(), m.b.clone(), m.c.clone(), m.d.clone()), (3.into(), (-2).into(), 1.into(), 0.into()));
    }
}
