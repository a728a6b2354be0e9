//! Rational approximation, the large-value time classifier, totient sums and
//! generators for major-arc boxes and Jarnik witness points.

use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Result, WeylError};
use crate::eval::WeylScale;
use crate::phase::{gcd, Coord};

/// A reduced fraction `a/q` in `[0, 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Rational {
    pub a: u64,
    pub q: u64,
}

impl Rational {
    pub const ZERO: Rational = Rational { a: 0, q: 1 };

    /// `a/q` reduced mod 1.
    pub fn new(a: i64, q: u64) -> Result<Rational> {
        if q == 0 {
            return Err(WeylError::invalid("q", "must be positive"));
        }
        let r = (a as i128).rem_euclid(q as i128) as u64;
        Ok(Self::reduced(r, q))
    }

    fn reduced(a: u64, q: u64) -> Rational {
        if a == 0 {
            return Rational::ZERO;
        }
        let g = gcd(a, q);
        Rational { a: a / g, q: q / g }
    }

    pub fn is_odd(&self) -> bool {
        self.q % 2 == 1
    }

    pub fn is_reduced(&self) -> bool {
        self.q >= 1 && self.a < self.q && gcd(self.a, self.q) == 1
    }

    pub fn value(&self) -> f64 {
        self.a as f64 / self.q as f64
    }

    pub fn to_coord(&self) -> Coord {
        Coord::rational(self.a as i64, self.q).expect("reduced rational has q >= 1")
    }

    /// `|t - a/q|` measured on the circle, with one rounding.
    pub fn distance(&self, t: f64) -> f64 {
        let d = (t.mul_add(self.q as f64, -(self.a as f64)) / self.q as f64).abs();
        d.min((1.0 - d).abs())
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.a, self.q)
    }
}

/// Continued-fraction data of a real `t = [0; a_1, a_2, ...]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CFExpansion {
    pub partial_quotients: Vec<u64>,
    /// Convergents `p_k/q_k`, `k >= 1`, in increasing denominator order. The trivial
    /// zeroth convergent `0/1` appears only when `t = 0`.
    pub convergents: Vec<Rational>,
}

/// Every convergent of the exact binary value of `t` with denominator at most `q_max`.
pub fn continued_fraction(t: f64, q_max: u64) -> Result<CFExpansion> {
    if !(0.0..1.0).contains(&t) {
        return Err(WeylError::invalid("t", format!("{t} is outside [0, 1)")));
    }
    if q_max == 0 {
        return Err(WeylError::invalid("q_max", "must be at least 1"));
    }
    if t == 0.0 {
        return Ok(CFExpansion {
            partial_quotients: vec![],
            convergents: vec![Rational::ZERO],
        });
    }
    // t = num / 2^k exactly
    let bits = t.to_bits();
    let biased = ((bits >> 52) & 0x7ff) as i64;
    let (mant, exp) = if biased == 0 {
        (bits & ((1 << 52) - 1), -1074)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), biased - 1075)
    };
    let mut num = BigUint::from(mant);
    let mut den = BigUint::from(1u8) << (-exp) as usize;

    let (mut p_prev, mut q_prev) = (1u128, 0u128);
    let (mut p, mut q) = (0u128, 1u128);
    let mut out = CFExpansion {
        partial_quotients: vec![],
        convergents: vec![],
    };
    let zero = BigUint::from(0u8);
    while num != zero {
        // t_k = num/den < 1, next quotient floor(den/num)
        let a = &den / &num;
        let r = &den % &num;
        let a: u128 = match u128::try_from(&a) {
            Ok(v) if v <= q_max as u128 => v,
            _ => break,
        };
        let q_next = a * q + q_prev;
        if q_next > q_max as u128 {
            break;
        }
        let p_next = a * p + p_prev;
        (p_prev, q_prev, p, q) = (p, q, p_next, q_next);
        out.partial_quotients.push(a as u64);
        out.convergents.push(Rational {
            a: (p % q) as u64,
            q: q as u64,
        });
        den = num;
        num = r;
    }
    Ok(out)
}

/// A reduced `a/q` with `q <= big_q` and `|t - a/q| < 1/(q big_q)`: the last convergent
/// with denominator at most `big_q`, or `0/1` when the first convergent is already too deep.
pub fn dirichlet_approx(t: f64, big_q: u64) -> Result<(Rational, f64)> {
    let cf = continued_fraction(t, big_q)?;
    let r = cf.convergents.last().copied().unwrap_or(Rational::ZERO);
    Ok((r, r.distance(t)))
}

/// Euler's totient for `1..=n` by a linear sieve, with primality flags.
#[derive(Clone, Debug)]
pub struct TotientTable {
    phi: Vec<u64>,
    primes: Vec<u64>,
}

impl TotientTable {
    pub fn new(n: u64) -> TotientTable {
        let n = n as usize;
        let mut phi = vec![0u64; n + 1];
        let mut composite = vec![false; n + 1];
        let mut primes = Vec::new();
        if n >= 1 {
            phi[1] = 1;
        }
        for i in 2..=n {
            if !composite[i] {
                primes.push(i as u64);
                phi[i] = i as u64 - 1;
            }
            for &p in &primes {
                let ip = i * p as usize;
                if ip > n {
                    break;
                }
                composite[ip] = true;
                if i % p as usize == 0 {
                    phi[ip] = phi[i] * p;
                    break;
                }
                phi[ip] = phi[i] * (p - 1);
            }
        }
        TotientTable { phi, primes }
    }

    pub fn phi(&self, q: u64) -> u64 {
        self.phi[q as usize]
    }

    pub fn is_prime(&self, q: u64) -> bool {
        self.primes.binary_search(&q).is_ok()
    }
}

/// `sum_{q <= Q} phi(q)` with `phi(1) = 1`.
pub fn totient_sum(big_q: u64) -> Result<u128> {
    if big_q == 0 {
        return Err(WeylError::invalid("Q", "must be at least 1"));
    }
    let table = TotientTable::new(big_q);
    Ok((1..=big_q).map(|q| table.phi(q) as u128).sum())
}

/// Small or large denominator relative to `N^delta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Regime {
    SmallQ(f64),
    LargeQ(f64),
}

/// Dirichlet data of a time `t` at scale `(N, alpha)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophClass {
    pub approximant: Rational,
    pub distance: f64,
    /// Dyadic level with `2^m ~ N^(2 - 2 alpha)`.
    pub m: u32,
    pub regime: Regime,
    pub passes_lemma: bool,
    /// `c log(N)^2 2^m`.
    pub q_limit: f64,
    /// Other fractions that met both conditions and were rejected in favour of `approximant`.
    pub rivals: Vec<Rational>,
}

/// `round(log2(N^(2 - 2 alpha)))`, ties to even.
pub fn dyadic_level(n: u64, alpha: f64) -> u32 {
    ((2.0 - 2.0 * alpha) * (n as f64).log2()).round_ties_even().max(0.0) as u32
}

/// Classifies `t` against the conditions `1 <= q <= c log(N)^2 2^m` and
/// `|t - a/q| <= c log(N)^2 2^m / (q N^2)`.
///
/// The Dirichlet approximant at `Q = N` is preferred when it passes; otherwise the
/// closest passing fraction (relative to its window) is chosen.
pub fn classify_time(t: f64, scale: &WeylScale, delta: f64, c: f64) -> Result<DiophClass> {
    if scale.alpha < 0.5 {
        return Err(WeylError::invalid("alpha", "must be at least 1/2"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(WeylError::invalid("delta", "must lie in (0, 1)"));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(WeylError::invalid("c", "must be positive"));
    }
    if !t.is_finite() {
        return Err(WeylError::invalid("t", "must be finite"));
    }
    let t = crate::phase::reduce_unit(t);
    let n = scale.n;
    let nf = n as f64;
    let m = dyadic_level(n, scale.alpha);
    let ln = nf.ln();
    let q_limit = c * ln * ln * 2f64.powi(m as i32);
    let window = |q: u64| q_limit / (q as f64 * nf * nf);
    let passes = |r: &Rational| r.q as f64 <= q_limit.max(1.0) && r.distance(t) <= window(r.q);

    let mut passing = Vec::new();
    let q_top = q_limit.floor().max(1.0) as u64;
    for q in 1..=q_top {
        let a = (t * q as f64).round() as i64;
        for cand in [a - 1, a, a + 1] {
            let r = Rational::new(cand, q)?;
            if r.q == q && passes(&r) && !passing.contains(&r) {
                passing.push(r);
            }
        }
    }
    let (dirichlet, _) = dirichlet_approx(t, n)?;
    let chosen = if passes(&dirichlet) {
        Some(dirichlet)
    } else {
        passing.iter().copied().min_by(|a, b| {
            let ka = a.distance(t) / window(a.q);
            let kb = b.distance(t) / window(b.q);
            ka.total_cmp(&kb).then(a.q.cmp(&b.q))
        })
    };
    let approximant = chosen.unwrap_or(dirichlet);
    let rivals = passing.into_iter().filter(|r| *r != approximant).collect();
    let regime = if (approximant.q as f64) <= nf.powf(delta) {
        Regime::SmallQ(delta)
    } else {
        Regime::LargeQ(delta)
    };
    Ok(DiophClass {
        approximant,
        distance: approximant.distance(t),
        m,
        regime,
        passes_lemma: chosen.is_some(),
        q_limit,
        rivals,
    })
}

/// A box `|x - b/q| <= x_radius`, `|t - a/q| <= t_radius` on which the sum is provably large.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MajorArcBox {
    pub x_center: Rational,
    pub t_center: Rational,
    pub x_radius: f64,
    pub t_radius: f64,
}

/// All boxes `(b/q, a/q)` with `1 <= a, b < q <= q_max`, `gcd(a, q) = 1`,
/// radii `1/(100N)` and `1/(100N^2)`.
pub fn major_arc_points(n: u64, q_max: u64, odd_only: bool) -> Result<Vec<MajorArcBox>> {
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    if q_max == 0 || q_max as u128 * q_max as u128 > n as u128 {
        return Err(WeylError::invalid("q_max", format!("{q_max} exceeds sqrt(N) for N = {n}")));
    }
    let nf = n as f64;
    let mut out = Vec::new();
    for q in 2..=q_max {
        if odd_only && q % 2 == 0 {
            continue;
        }
        for a in (1..q).filter(|&a| gcd(a, q) == 1) {
            for b in 1..q {
                out.push(MajorArcBox {
                    x_center: Rational::reduced(b, q),
                    t_center: Rational { a, q },
                    x_radius: 1.0 / (100.0 * nf),
                    t_radius: 1.0 / (100.0 * nf * nf),
                });
            }
        }
    }
    Ok(out)
}

/// A point `x` within `radius = q^-(2 + beta)` of `center`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct JarnikPoint {
    pub x: f64,
    pub center: Rational,
    pub radius: f64,
}

/// For each `q` in `[lo, hi]` (odd or prime if flagged) and each `a` coprime to `q`,
/// `samples_per_q` points evenly spread across `(a/q - r, a/q + r)`.
pub fn jarnik_witnesses(
    beta: f64,
    q_range: (u64, u64),
    odd_only: bool,
    primes_only: bool,
    samples_per_q: usize,
) -> Result<Vec<JarnikPoint>> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(WeylError::invalid("beta", "must be positive"));
    }
    let (lo, hi) = q_range;
    if lo < 3 {
        return Err(WeylError::invalid("q_range", "lower end must be at least 3"));
    }
    if samples_per_q == 0 {
        return Err(WeylError::invalid("samples_per_q", "must be at least 1"));
    }
    if hi < lo {
        return Ok(vec![]);
    }
    let table = primes_only.then(|| TotientTable::new(hi));
    let mut out = Vec::new();
    for q in lo..=hi {
        if odd_only && q % 2 == 0 {
            continue;
        }
        if let Some(t) = &table {
            if !t.is_prime(q) {
                continue;
            }
        }
        let radius = (q as f64).powf(-(2.0 + beta));
        for a in (1..q).filter(|&a| gcd(a, q) == 1) {
            let center = Rational { a, q };
            for i in 0..samples_per_q {
                let f = 2.0 * (i + 1) as f64 / (samples_per_q + 1) as f64 - 1.0;
                out.push(JarnikPoint {
                    x: center.value() + f * radius,
                    center,
                    radius,
                });
            }
        }
    }
    Ok(out)
}

pub fn major_arcs_csv(boxes: &[MajorArcBox]) -> String {
    let mut s = String::from("b,a,q,x_center,t_center,x_radius,t_radius\n");
    for b in boxes {
        s.push_str(&format!(
            "{},{},{},{:e},{:e},{:e},{:e}\n",
            b.x_center.a * (b.t_center.q / b.x_center.q),
            b.t_center.a,
            b.t_center.q,
            b.x_center.value(),
            b.t_center.value(),
            b.x_radius,
            b.t_radius
        ));
    }
    s
}

pub fn jarnik_csv(points: &[JarnikPoint]) -> String {
    let mut s = String::from("a,q,center,radius,x\n");
    for p in points {
        s.push_str(&format!(
            "{},{},{:e},{:e},{:e}\n",
            p.center.a,
            p.center.q,
            p.center.value(),
            p.radius,
            p.x
        ));
    }
    s
}
