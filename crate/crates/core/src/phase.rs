//! Exact and compensated reduction of phases modulo one.
//!
//! A point of the circle `R/Z` is held as a [`Coord`]: an exact reduced rational
//! part plus a floating offset. Products `k * coord mod 1` are formed without
//! ever materializing `k * coord` in a single double, so `n^2 t` stays accurate
//! for `n` in the tens of millions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, WeylError};

/// `v - round(v)` with ties to even; maps into `[-1/2, 1/2]` and is odd in `v`.
#[inline]
pub fn sym(v: f64) -> f64 {
    v - v.round_ties_even()
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Double-word phase accumulator: `hi` is kept reduced mod 1, `lo` collects
/// the rounding residue of every addition.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseAccumulator {
    hi: f64,
    lo: f64,
}

impl PhaseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a plain value.
    pub fn add(&mut self, v: f64) -> &mut Self {
        let (s, e) = two_sum(self.hi, v);
        self.hi = sym(s);
        self.lo += e;
        self
    }

    /// Adds `k * v` exactly: `k` is split into 32-bit limbs and each partial
    /// product is taken as an exact double-word via fused multiply-add.
    pub fn add_product(&mut self, k: u128, v: f64) -> &mut Self {
        if v == 0.0 || k == 0 {
            return self;
        }
        if k < (1u128 << 53) {
            let (p, e) = two_prod(k as f64, v);
            self.add(sym(p));
            self.add(e);
            return self;
        }
        let mut scale = v;
        let mut rest = k;
        while rest != 0 {
            let limb = (rest & 0xffff_ffff) as f64;
            if limb != 0.0 {
                let (p, e) = two_prod(limb, scale);
                self.add(sym(p));
                self.add(e);
            }
            rest >>= 32;
            scale = sym(scale * 4_294_967_296.0);
        }
        self
    }

    /// The accumulated phase, reduced into `[-1/2, 1/2]`.
    pub fn value(&self) -> f64 {
        sym(sym(self.hi) + self.lo)
    }
}

/// A point of `R/Z`: `num/den + offset`, with `num/den` reduced and `num < den`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coord {
    num: u64,
    den: u64,
    offset: f64,
}

impl Coord {
    pub const ZERO: Coord = Coord {
        num: 0,
        den: 1,
        offset: 0.0,
    };

    /// A real coordinate, reduced into `[0, 1)`.
    pub fn real(x: f64) -> Result<Coord> {
        if !x.is_finite() {
            return Err(WeylError::invalid("coordinate", format!("{x} is not finite")));
        }
        Ok(Coord {
            num: 0,
            den: 1,
            offset: reduce_unit(x),
        })
    }

    /// The exact rational `num/den` reduced mod 1.
    pub fn rational(num: i64, den: u64) -> Result<Coord> {
        Self::rational_offset(num, den, 0.0)
    }

    /// `num/den + offset`; the rational part is reduced exactly, the offset is kept as given
    /// (reduced mod 1 only when it leaves `[-1, 1)`).
    pub fn rational_offset(num: i64, den: u64, offset: f64) -> Result<Coord> {
        if den == 0 {
            return Err(WeylError::invalid("denominator", "must be positive"));
        }
        if !offset.is_finite() {
            return Err(WeylError::invalid("offset", "must be finite"));
        }
        let r = (num as i128).rem_euclid(den as i128) as u64;
        let g = gcd(r, den).max(1);
        let (num, den) = if r == 0 { (0, 1) } else { (r / g, den / g) };
        let offset = if (-1.0..1.0).contains(&offset) {
            offset
        } else {
            reduce_unit(offset)
        };
        Ok(Coord { num, den, offset })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// True when the coordinate is an exact rational (zero offset).
    pub fn is_rational(&self) -> bool {
        self.offset == 0.0
    }

    /// Nearest double in `[0, 1)`.
    pub fn value(&self) -> f64 {
        let mut acc = PhaseAccumulator::new();
        acc.add(self.num as f64 / self.den as f64);
        acc.add(self.offset);
        let v = acc.value();
        if v < 0.0 {
            reduce_unit(v + 1.0)
        } else {
            v
        }
    }

    /// `k * self` reduced into `[-1/2, 1/2]`.
    pub fn frac_mul(&self, k: u128) -> f64 {
        let r = rational_frac(k, self.num, self.den);
        if self.offset == 0.0 {
            return r;
        }
        let mut acc = PhaseAccumulator::new();
        acc.add_product(k, self.offset);
        sym(r + acc.value())
    }

    /// The coordinate of `m * self`: exact in the rational part, rounded once in the offset.
    pub fn scaled(&self, m: u64) -> Coord {
        let r = ((m as u128 % self.den as u128) * self.num as u128 % self.den as u128) as u64;
        let g = gcd(r, self.den).max(1);
        let (num, den) = if r == 0 { (0, 1) } else { (r / g, self.den / g) };
        let offset = if self.offset == 0.0 {
            0.0
        } else {
            let mut acc = PhaseAccumulator::new();
            acc.add_product(m as u128, self.offset);
            acc.value()
        };
        Coord { num, den, offset }
    }

    /// `1 - self` (the reflection `x -> -x` on the circle).
    pub fn negated(&self) -> Coord {
        let num = if self.num == 0 { 0 } else { self.den - self.num };
        Coord {
            num,
            den: self.den,
            offset: if self.offset == 0.0 { 0.0 } else { -self.offset },
        }
    }

    /// `self + a/b` (exact in the rational part).
    pub fn shifted(&self, a: u64, b: u64) -> Coord {
        let den = self.den as u128 * b as u128 / gcd(self.den, b) as u128;
        let num = (self.num as u128 * (den / self.den as u128) + a as u128 * (den / b as u128)) % den;
        let g = gcd(num as u64, den as u64).max(1) as u128;
        let (num, den) = if num == 0 { (0, 1) } else { (num / g, den / g) };
        Coord {
            num: num as u64,
            den: den as u64,
            offset: self.offset,
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.num, self.offset) {
            (0, o) if self.den == 1 => write!(f, "{o}"),
            (n, o) if o == 0.0 => write!(f, "{n}/{}", self.den),
            (n, o) => write!(f, "{n}/{}{o:+e}", self.den),
        }
    }
}

impl FromStr for Coord {
    type Err = WeylError;

    /// Accepts `a/q` (exact) or a decimal literal.
    fn from_str(s: &str) -> Result<Coord> {
        let s = s.trim();
        if let Some((a, q)) = s.split_once('/') {
            let a: i64 = a
                .trim()
                .parse()
                .map_err(|_| WeylError::invalid("coordinate", format!("bad numerator in `{s}`")))?;
            let q: u64 = q
                .trim()
                .parse()
                .map_err(|_| WeylError::invalid("coordinate", format!("bad denominator in `{s}`")))?;
            Coord::rational(a, q)
        } else {
            let v: f64 = s
                .parse()
                .map_err(|_| WeylError::invalid("coordinate", format!("`{s}` is not a number")))?;
            Coord::real(v)
        }
    }
}

impl From<Coord> for f64 {
    fn from(c: Coord) -> f64 {
        c.value()
    }
}

/// `x - floor(x)`, folded into `[0, 1)`.
pub fn reduce_unit(x: f64) -> f64 {
    let r = x - x.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `k * num / den` reduced into `[-1/2, 1/2]` using integer arithmetic.
pub(crate) fn rational_frac(k: u128, num: u64, den: u64) -> f64 {
    if num == 0 {
        return 0.0;
    }
    let d = den as u128;
    let r = (k % d) * num as u128 % d;
    let s = if 2 * r > d { r as i128 - d as i128 } else { r as i128 };
    s as f64 / den as f64
}

/// `x * 2^e` without intermediate overflow or premature underflow.
fn ldexp(mut x: f64, mut e: i32) -> f64 {
    while e < -1000 {
        x *= f64::from_bits(((1023 - 1000) as u64) << 52);
        e += 1000;
    }
    while e > 1000 {
        x *= f64::from_bits(((1023 + 1000) as u64) << 52);
        e -= 1000;
    }
    x * f64::from_bits(((1023 + e) as u64) << 52)
}

/// `k * v` reduced into `[-1/2, 1/2]` through the integer mantissa of `v`.
///
/// Independent of [`PhaseAccumulator`]: `v = m 2^e` is expanded and the product
/// reduced modulo `2^-e` in 128-bit arithmetic. Requires `k < 2^75`.
pub(crate) fn frac_mul_mantissa(k: u128, v: f64) -> f64 {
    debug_assert!(k < (1u128 << 75));
    if v == 0.0 || k == 0 {
        return 0.0;
    }
    let bits = v.to_bits();
    let negative = bits >> 63 == 1;
    let biased = ((bits >> 52) & 0x7ff) as i32;
    let frac_bits = bits & ((1u64 << 52) - 1);
    let (m, e) = if biased == 0 {
        (frac_bits, -1074)
    } else {
        (frac_bits | (1u64 << 52), biased - 1075)
    };
    if e >= 0 {
        return 0.0;
    }
    let shift = (-e) as u32;
    let p = k * m as u128;
    let r = if shift >= 128 { p } else { p & ((1u128 << shift) - 1) };
    let f = ldexp(r as f64, e);
    let f = if negative { -f } else { f };
    sym(f)
}

/// `e(phase) = exp(2 pi i phase)` for a phase in `[-1/2, 1/2]`; exact at the quarter points.
#[inline]
pub fn unit(phase: f64) -> Complex64 {
    if phase == 0.0 {
        Complex64::new(1.0, 0.0)
    } else if phase == 0.5 || phase == -0.5 {
        Complex64::new(-1.0, 0.0)
    } else if phase == 0.25 {
        Complex64::new(0.0, 1.0)
    } else if phase == -0.25 {
        Complex64::new(0.0, -1.0)
    } else {
        let (s, c) = (TAU * phase).sin_cos();
        Complex64::new(c, s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sym_is_odd_and_bounded() {
        for v in [0.0, 0.25, 0.5, 0.75, 1.5, -0.5, 3.999, -7.25] {
            let s = sym(v);
            assert!((-0.5..=0.5).contains(&s));
            assert_eq!(sym(-v), -s);
        }
    }

    #[test]
    fn rational_reduction() {
        let c = Coord::rational(-1, 3).unwrap();
        assert_eq!((c.numerator(), c.denominator()), (2, 3));
        let c = Coord::rational(6, 4).unwrap();
        assert_eq!((c.numerator(), c.denominator()), (1, 2));
        let c = Coord::rational(5, 5).unwrap();
        assert_eq!((c.numerator(), c.denominator()), (0, 1));
        assert!(Coord::rational(1, 0).is_err());
    }

    #[test]
    fn parses_rationals_and_decimals() {
        let c: Coord = "2/6".parse().unwrap();
        assert_eq!((c.numerator(), c.denominator()), (1, 3));
        assert!(c.is_rational());
        let c: Coord = "1.25".parse().unwrap();
        assert_eq!(c.value(), 0.25);
        assert!("x".parse::<Coord>().is_err());
        assert!("1/0".parse::<Coord>().is_err());
        assert!(Coord::real(f64::NAN).is_err());
    }

    #[test]
    fn large_multipliers_stay_accurate() {
        // n^2 t for n = 10^7 and t = 0.1 (not exact in binary)
        let t = Coord::real(0.1).unwrap();
        let k = 100_000_000_000_000u128;
        let a = t.frac_mul(k);
        let b = frac_mul_mantissa(k, 0.1);
        assert!((a - b).abs() < 1e-15, "{a} vs {b}");
        let k = (1u128 << 60) + 12345;
        let a = t.frac_mul(k);
        let b = frac_mul_mantissa(k, 0.1);
        assert!((a - b).abs() < 1e-14, "{a} vs {b}");
    }

    #[test]
    fn unit_exact_points() {
        assert_eq!(unit(0.5), Complex64::new(-1.0, 0.0));
        assert_eq!(unit(0.25), Complex64::new(0.0, 1.0));
        assert_eq!(unit(-0.125).conj(), unit(0.125));
    }

    #[test]
    fn shifted_and_negated() {
        let c = Coord::rational(1, 4).unwrap().shifted(1, 2);
        assert_eq!((c.numerator(), c.denominator()), (3, 4));
        let n = Coord::rational(1, 3).unwrap().negated();
        assert_eq!((n.numerator(), n.denominator()), (2, 3));
    }

    proptest! {
        #[test]
        fn accumulator_matches_mantissa_route(k in 1u64..u64::MAX, v in 0.0f64..1.0) {
            let a = Coord::real(v).unwrap().frac_mul(k as u128);
            let b = frac_mul_mantissa(k as u128, v);
            let d = sym(a - b).abs();
            prop_assert!(d < 1e-14, "k={} v={} {} vs {}", k, v, a, b);
        }

        #[test]
        fn reflection_negates_phase(k in 1u64..(1u64 << 40), num in 1u64..1_000_000) {
            let x = Coord::rational(num as i64, 1_000_003).unwrap();
            prop_assert_eq!(x.negated().frac_mul(k as u128), -x.frac_mul(k as u128));
        }
    }
}
