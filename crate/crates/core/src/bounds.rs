//! Empirical checks of the inequalities satisfied by `w_N`: the dispersive envelope,
//! the classical Weyl ratio, major-arc lower bounds, the restricted maximal bound,
//! domination by the completion sum, and the sharpness witnesses.
//!
//! Every check produces a [`BoundCheckRecord`] with `ratio = lhs / rhs_envelope`.
//! Constants are fitted, not asserted, except where [`crate::constants`] pins a floor.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diophant::{continued_fraction, dirichlet_approx};
use crate::error::{Result, WeylError};
use crate::eval::{
    completion_sum, eval_point, eval_point_exact, eval_progression, inverse_fft, Neumaier,
};
use crate::maximal::restricted_sup;
use crate::phase::{gcd, unit, Coord};
use crate::Complex64;

/// SHA-256 (hex) of the compact JSON encoding of `params`; field order is fixed by the
/// serializer, so equal parameters give equal hashes.
pub fn content_hash<T: Serialize>(params: &T) -> Result<String> {
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(params)?)))
}

/// One evaluated instance of an inequality.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheckRecord {
    pub x: f64,
    /// `None` when the left side is a function of `x` alone.
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs_envelope: f64,
    pub ratio: f64,
    pub params: BTreeMap<String, f64>,
    /// Set when the ratio is numerically unstable or a pinned floor is missed.
    pub flagged: bool,
}

impl BoundCheckRecord {
    fn new(x: f64, t: Option<f64>, lhs: f64, rhs: f64) -> Self {
        BoundCheckRecord {
            x,
            t,
            lhs,
            rhs_envelope: rhs,
            ratio: lhs / rhs,
            params: BTreeMap::new(),
            flagged: false,
        }
    }

    fn with(mut self, key: &str, v: f64) -> Self {
        self.params.insert(key.to_string(), v);
        self
    }
}

/// CSV with fixed columns followed by the union of parameter names.
pub fn records_csv(records: &[BoundCheckRecord]) -> String {
    let mut keys: Vec<&String> = records.iter().flat_map(|r| r.params.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = String::from("x,t,lhs,rhs,ratio,flagged");
    for k in &keys {
        out.push(',');
        out.push_str(k);
    }
    out.push('\n');
    for r in records {
        let t = r.t.map(|t| format!("{t:.17e}")).unwrap_or_default();
        out.push_str(&format!(
            "{:.17e},{},{:.17e},{:.17e},{:.17e},{}",
            r.x, t, r.lhs, r.rhs_envelope, r.ratio, r.flagged
        ));
        for k in &keys {
            out.push(',');
            if let Some(v) = r.params.get(*k) {
                out.push_str(&format!("{v:.17e}"));
            }
        }
        out.push('\n');
    }
    out
}

/// Distribution of ratios over a sweep. `fitted_constant` is the sweep maximum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioSummary {
    pub max_ratio: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub sample_count: usize,
    pub fitted_constant: f64,
    pub seed: Option<u64>,
}

/// Nearest-rank quantiles of the finite ratios.
pub fn summarize(ratios: &[f64], seed: Option<u64>) -> Result<RatioSummary> {
    let mut v: Vec<f64> = ratios.iter().copied().filter(|r| r.is_finite()).collect();
    if v.is_empty() {
        return Err(WeylError::InsufficientData("no finite ratios to summarize".into()));
    }
    v.sort_by(f64::total_cmp);
    let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
    let max = *v.last().unwrap();
    Ok(RatioSummary {
        max_ratio: max,
        p50: rank(0.5),
        p90: rank(0.9),
        p99: rank(0.99),
        sample_count: v.len(),
        fitted_constant: max,
        seed,
    })
}

/// How the denominator `1 + N |t - a/q|^(1/2)` of the dispersive envelope is grouped.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grouping {
    /// `1 + N * |t - a/q|^(1/2)`.
    #[default]
    Literal,
    /// `1 + (N * |t - a/q|)^(1/2)`.
    Alternate,
}

/// `|w_N(x,t)|` against `log N * N / (sqrt(q) (1 + N |t - a/q|^(1/2)))`, with `a/q`
/// the Dirichlet approximant of `t` at level `N`.
pub fn bourgain_envelope(n: u64, x: f64, t: f64, grouping: Grouping) -> Result<BoundCheckRecord> {
    if n < 2 {
        return Err(WeylError::invalid("N", "must be at least 2 (the envelope carries log N)"));
    }
    let t_red = t.rem_euclid(1.0);
    let t_red = if t_red >= 1.0 { 0.0 } else { t_red };
    let (r, d) = dirichlet_approx(t_red, n)?;
    let nf = n as f64;
    let decay = match grouping {
        Grouping::Literal => 1.0 + nf * d.sqrt(),
        Grouping::Alternate => 1.0 + (nf * d).sqrt(),
    };
    let rhs = nf.ln() * nf / ((r.q as f64).sqrt() * decay);
    let lhs = eval_point(n, x, t)?.norm();
    Ok(BoundCheckRecord::new(x, Some(t), lhs, rhs)
        .with("N", nf)
        .with("a", r.a as f64)
        .with("q", r.q as f64)
        .with("distance", d))
}

/// Uniform random points in the unit square, drawn sequentially from one seeded stream.
pub fn random_points(samples: usize, seed: u64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..samples).map(|_| (rng.gen::<f64>(), rng.gen::<f64>())).collect()
}

/// [`bourgain_envelope`] over `samples` random points.
pub fn bourgain_sweep(
    n: u64,
    samples: usize,
    seed: u64,
    grouping: Grouping,
) -> Result<(Vec<BoundCheckRecord>, RatioSummary)> {
    let records = random_points(samples, seed)
        .into_par_iter()
        .map(|(x, t)| bourgain_envelope(n, x, t, grouping))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records.iter().map(|r| r.ratio).collect::<Vec<_>>(), Some(seed))?;
    Ok((records, summary))
}

/// `|v_q| / (sqrt(q log max(q,2)) |w_q|)` where `w_q = sum_{l=0}^{N/q} e(lqx + l^2q^2t)`
/// and `v_q = (sum_{r=1}^q e(rx + r^2 t)) w_q`.
///
/// The record is flagged when `|w_q| < 1e-9 N/q`. The params also carry `|w_N|` and
/// the decomposition error `|w_N - v_q|`.
pub fn classical_weyl_ratio(n: u64, q: u64, a: u64, x: f64, t: f64) -> Result<BoundCheckRecord> {
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    if q == 0 || q > n {
        return Err(WeylError::invalid("q", format!("{q} must lie in 1..=N")));
    }
    if gcd(a % q, q) != 1 {
        return Err(WeylError::invalid("a", format!("gcd({a}, {q}) must be 1")));
    }
    let qf = q as f64;
    let d = {
        let d = (t - a as f64 / qf).rem_euclid(1.0);
        d.min(1.0 - d)
    };
    if d >= 1.0 / (qf * qf) {
        return Err(WeylError::invalid("t", format!("|t - {a}/{q}| = {d:e} is not below 1/q^2")));
    }
    let head = eval_point(q, x, t)?;
    let k = n / q;
    let w_q = Complex64::new(1.0, 0.0) + if k > 0 { eval_progression(q, k, x, t)? } else { Complex64::new(0.0, 0.0) };
    let v_q = head * w_q;
    let w_n = eval_point(n, x, t)?;
    let rhs = (qf * qf.max(2.0).ln()).sqrt() * w_q.norm();
    let mut rec = BoundCheckRecord::new(x, Some(t), v_q.norm(), rhs)
        .with("N", n as f64)
        .with("q", qf)
        .with("a", a as f64)
        .with("w_q", w_q.norm())
        .with("w_N", w_n.norm())
        .with("E_q", (w_n - v_q).norm());
    if w_q.norm() < 1e-9 * n as f64 / qf {
        rec.flagged = true;
    }
    Ok(rec)
}

/// `|w_N(b/q + x_offset, a/q + t_offset)|` against `N/sqrt(q)` near an odd major arc.
///
/// Requires `q` odd, `1 <= a, b < q`, `gcd(a,q) = 1`, `q^2 <= N`, `|x_offset| <= 1/(100N)`
/// and `|t_offset| <= 1/(100N^2)`. The rational parts are exact.
pub fn major_arc_lower(n: u64, q: u64, a: u64, b: u64, x_offset: f64, t_offset: f64) -> Result<BoundCheckRecord> {
    if q % 2 == 0 {
        return Err(WeylError::invalid("q", format!("{q} must be odd")));
    }
    if !(1..q).contains(&a) || gcd(a, q) != 1 {
        return Err(WeylError::invalid("a", format!("{a} must be a unit in 1..{q}")));
    }
    if !(1..q).contains(&b) {
        return Err(WeylError::invalid("b", format!("{b} must lie in 1..{q}")));
    }
    if (q as u128) * (q as u128) > n as u128 {
        return Err(WeylError::invalid("q", format!("q^2 = {} exceeds N = {n}", q * q)));
    }
    let nf = n as f64;
    if !(x_offset.abs() <= 1.0 / (100.0 * nf)) {
        return Err(WeylError::invalid("x_offset", format!("|{x_offset:e}| exceeds 1/(100N)")));
    }
    if !(t_offset.abs() <= 1.0 / (100.0 * nf * nf)) {
        return Err(WeylError::invalid("t_offset", format!("|{t_offset:e}| exceeds 1/(100N^2)")));
    }
    let x = Coord::rational_offset(b as i64, q, x_offset)?;
    let t = Coord::rational_offset(a as i64, q, t_offset)?;
    let lhs = eval_point_exact(n, &x, &t)?.norm();
    let rhs = nf / (q as f64).sqrt();
    let mut rec = BoundCheckRecord::new(x.value(), Some(t.value()), lhs, rhs)
        .with("N", nf)
        .with("q", q as f64)
        .with("a", a as f64)
        .with("b", b as f64)
        .with("x_offset", x_offset)
        .with("t_offset", t_offset);
    rec.flagged = rec.ratio < crate::constants::MAJOR_ARC_FLOOR;
    Ok(rec)
}

/// [`major_arc_lower`] for every `N` in `ns`, odd `3 <= q <= min(q_max, sqrt N)`, every
/// unit `a`, every `b`, with offsets at `0` and at both ends of the admissible box.
pub fn major_arc_sweep(ns: &[u64], q_max: u64) -> Result<Vec<BoundCheckRecord>> {
    let mut cases = Vec::new();
    for &n in ns {
        let nf = n as f64;
        let xo = 1.0 / (100.0 * nf);
        let to = 1.0 / (100.0 * nf * nf);
        for q in (3..=q_max).step_by(2).filter(|q| q * q <= n) {
            for a in (1..q).filter(|&a| gcd(a, q) == 1) {
                for b in 1..q {
                    for dx in [-xo, 0.0, xo] {
                        for dt in [-to, 0.0, to] {
                            cases.push((n, q, a, b, dx, dt));
                        }
                    }
                }
            }
        }
    }
    cases
        .into_par_iter()
        .map(|(n, q, a, b, dx, dt)| major_arc_lower(n, q, a, b, dx, dt))
        .collect()
}

/// Restricted maximal norm against `N^(1/2) max(1/N, eta)^(1/4) ||f||_2` with `||f||_2 = sqrt N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MvReport {
    pub n: u64,
    pub eta: f64,
    pub x_samples: usize,
    /// `(t0, ratio)` per draw.
    pub draws: Vec<(f64, f64)>,
    pub summary: RatioSummary,
}

/// For `draws` random `t0`, the `L^4` norm over `x_j = j / x_samples` of
/// `sup_{t0 <= t <= t0 + eta} |w_N(x_j, t)|`, divided by `N max(1/N, eta)^(1/4)`.
pub fn mv_local_check(n: u64, eta: f64, x_samples: usize, draws: usize, seed: u64) -> Result<MvReport> {
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(WeylError::invalid("eta", format!("{eta} must lie in (0, 1]")));
    }
    if x_samples == 0 {
        return Err(WeylError::invalid("x_samples", "must be at least 1"));
    }
    if draws == 0 {
        return Err(WeylError::invalid("draws", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<f64> = (0..draws).map(|_| rng.gen::<f64>() * (1.0 - eta)).collect();
    let nf = n as f64;
    let envelope = nf.sqrt() * (1.0 / nf).max(eta).powf(0.25) * nf.sqrt();
    let mut out = Vec::with_capacity(draws);
    for t0 in starts {
        let hi = (t0 + eta).min(1.0);
        let sups = (0..x_samples)
            .into_par_iter()
            .map(|j| {
                restricted_sup(n, j as f64 / x_samples as f64, (t0, hi), crate::constants::SUP_TOLERANCE)
                    .map(|s| s.sup)
            })
            .collect::<Result<Vec<f64>>>()?;
        let mut acc = Neumaier::default();
        for s in &sups {
            acc.add(s.powi(4));
        }
        let l4 = (acc.value() / x_samples as f64).powf(0.25);
        out.push((t0, l4 / envelope));
    }
    let summary = summarize(&out.iter().map(|d| d.1).collect::<Vec<_>>(), Some(seed))?;
    Ok(MvReport {
        n,
        eta,
        x_samples,
        draws: out,
        summary,
    })
}

/// `|w_N(x,t)| / S_M(x,t)` at random points whose `x` keeps a distance greater than
/// `1/(4M^2)` from the lattice `h/M`. Rejected draws are counted in each record's
/// `rejected_before` parameter.
pub fn completion_check(n: u64, m: u64, samples: usize, seed: u64) -> Result<(Vec<BoundCheckRecord>, RatioSummary)> {
    if n == 0 || n > m {
        return Err(WeylError::invalid("N", format!("{n} must lie in 1..=M = {m}")));
    }
    let mf = m as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(samples);
    while points.len() < samples {
        let mut rejected = 0u32;
        let (x, t) = loop {
            let (x, t) = (rng.gen::<f64>(), rng.gen::<f64>());
            let off = (x * mf - (x * mf).round()).abs() / mf;
            if off > 1.0 / (4.0 * mf * mf) {
                break (x, t);
            }
            rejected += 1;
        };
        points.push((x, t, rejected));
    }
    let records = points
        .into_iter()
        .map(|(x, t, rejected)| {
            let lhs = eval_point(n, x, t)?.norm();
            let rhs = completion_sum(m, x, t)?;
            Ok(BoundCheckRecord::new(x, Some(t), lhs, rhs)
                .with("N", n as f64)
                .with("M", mf)
                .with("rejected_before", rejected as f64))
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records.iter().map(|r| r.ratio).collect::<Vec<_>>(), Some(seed))?;
    Ok((records, summary))
}

/// Lower-bounds `sup_t |w_N(x,t)|` on 11 points of `[0, 1e-6/N]` by evaluating at
/// `t = 0` and `t = 1e-7/N^2`; `lhs` is the smallest witnessed value, `rhs = N`.
///
/// `min_real` is the smallest `Re w_N(x, 1e-7/N^2) / N` over the same points. The
/// record is flagged when the ratio falls below [`crate::constants::SHARPNESS_RATIO`].
pub fn sharpness_witness(n: u64) -> Result<BoundCheckRecord> {
    if n < 10 {
        return Err(WeylError::invalid("N", format!("{n} must be at least 10")));
    }
    let nf = n as f64;
    let t1 = 1e-7 / (nf * nf);
    let mut worst = f64::INFINITY;
    let mut worst_x = 0.0;
    let mut min_real = f64::INFINITY;
    for i in 0..=10 {
        let x = i as f64 * 1e-7 / nf;
        let w0 = eval_point(n, x, 0.0)?;
        let w1 = eval_point(n, x, t1)?;
        min_real = min_real.min(w1.re / nf);
        let v = w0.norm().max(w1.norm());
        if v < worst {
            worst = v;
            worst_x = x;
        }
    }
    let mut rec = BoundCheckRecord::new(worst_x, None, worst, nf)
        .with("N", nf)
        .with("min_real", min_real);
    rec.flagged = rec.ratio < crate::constants::SHARPNESS_RATIO;
    Ok(rec)
}

/// Exact rational check of `2/(2+beta) = 4(1-alpha)` for `beta = (4 alpha - 3)/(2(1-alpha))`,
/// `alpha = num/den`. Returns `beta` as a reduced fraction alongside the verdict.
pub fn exponent_identity(num: u64, den: u64) -> Result<((i128, i128), bool)> {
    if den == 0 || 4 * num <= 3 * den || num >= den {
        return Err(WeylError::invalid("alpha", format!("{num}/{den} must lie in (3/4, 1)")));
    }
    let (r, s) = (num as i128, den as i128);
    let (bn, bd) = (4 * r - 3 * s, 2 * (s - r));
    // 2/(2+beta) = 2 bd / (2 bd + bn), compared with 4 (s - r) / s.
    let holds = 2 * bd * s == 4 * (s - r) * (2 * bd + bn);
    let g = gcd_i128(bn, bd);
    Ok(((bn / g, bd / g), holds))
}

fn gcd_i128(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// `alpha` as a fraction with denominator at most `10^6`, if it is one up to `1e-12`.
pub fn alpha_fraction(alpha: f64) -> Result<(u64, u64)> {
    if !(alpha > 0.75 && alpha < 1.0) {
        return Err(WeylError::invalid("alpha", format!("{alpha} must lie in (3/4, 1)")));
    }
    continued_fraction(alpha, 1_000_000)?
        .convergents
        .into_iter()
        .find(|r| (r.value() - alpha).abs() <= 1e-12)
        .map(|r| (r.a, r.q))
        .ok_or_else(|| WeylError::invalid("alpha", format!("{alpha} has no fraction with denominator <= 10^6")))
}

/// The selection `100 N_q < q^(1/(2(1-alpha))) < 100 (N_q + 1)`, decided in integers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NqSandwich {
    pub q: u64,
    pub alpha: (u64, u64),
    pub n_q: BigUint,
    pub lower_holds: bool,
    pub upper_holds: bool,
}

/// With `alpha = r/s` the sandwich reads `(100 N_q)^k < q^s < (100 (N_q+1))^k`, `k = 2(s-r)`.
pub fn nq_sandwich(num: u64, den: u64, q: u64) -> Result<NqSandwich> {
    if den == 0 || 4 * num <= 3 * den || num >= den {
        return Err(WeylError::invalid("alpha", format!("{num}/{den} must lie in (3/4, 1)")));
    }
    if q < 3 || q % 2 == 0 {
        return Err(WeylError::invalid("q", format!("{q} must be odd and at least 3")));
    }
    let k = u32::try_from(2 * (den - num)).map_err(|_| WeylError::invalid("alpha", "denominator too large"))?;
    let s = u32::try_from(den).map_err(|_| WeylError::invalid("alpha", "denominator too large"))?;
    let power = BigUint::from(q).pow(s);
    let n_q = power.nth_root(k) / 100u32;
    let lower = (&n_q * 100u32).pow(k);
    let upper = ((&n_q + 1u32) * 100u32).pow(k);
    Ok(NqSandwich {
        q,
        alpha: (num, den),
        lower_holds: lower < power,
        upper_holds: power < upper,
        n_q,
    })
}

/// Largest `N_q` evaluated by [`jarnik_containment`].
pub const JARNIK_MAX_N: u64 = 1 << 34;

/// `|w_{N_q}(b/q, a/q)| >= N_q^(alpha - delta)` at the best major-arc witness.
///
/// `N_q` comes from [`nq_sandwich`]; `q^2 < N_q` is required. Candidate pairs use the
/// decomposition `w_{N_q} = L G(a,b;q) + P_r(a,b)` with `N_q = Lq + r`, scanned over all
/// `b` by DFT for the first `a_candidates` units `a`. The winner is re-evaluated directly
/// and that value is the record's `lhs`; `rhs = N_q^(alpha - delta)`.
pub fn jarnik_containment(alpha: f64, q: u64, delta: f64, a_candidates: usize) -> Result<BoundCheckRecord> {
    if !(delta > 0.0 && delta < alpha) {
        return Err(WeylError::invalid("delta", format!("{delta} must lie in (0, alpha)")));
    }
    let (r, s) = alpha_fraction(alpha)?;
    let sw = nq_sandwich(r, s, q)?;
    if !(sw.lower_holds && sw.upper_holds) {
        return Err(WeylError::Format(format!("N_q sandwich fails for q = {q}")));
    }
    let e = s as f64 / (2.0 * (s - r) as f64);
    let threshold = 100f64.powf(1.0 / (e - 2.0));
    if BigUint::from(q).pow(2) >= sw.n_q {
        return Err(WeylError::invalid(
            "q",
            format!("q = {q} needs q^2 < N_q, i.e. q > 100^(1/({e} - 2)) = {threshold:.6e}"),
        ));
    }
    let n_q = u64::try_from(&sw.n_q)
        .ok()
        .filter(|&v| v <= JARNIK_MAX_N)
        .ok_or(WeylError::TooLarge {
            evaluations: u128::try_from(&sw.n_q).unwrap_or(u128::MAX),
            limit: JARNIK_MAX_N as u128,
        })?;
    let (l, rem) = (n_q / q, n_q % q);
    let units: Vec<u64> = (1..q).filter(|&a| gcd(a, q) == 1).take(a_candidates.max(1)).collect();
    let best = units
        .par_iter()
        .map(|&a| {
            let mut full: Vec<Complex64> = (0..q)
                .map(|n| unit(((a as u128 * n as u128 * n as u128) % q as u128) as f64 / q as f64))
                .collect();
            let mut part: Vec<Complex64> = full
                .iter()
                .enumerate()
                .map(|(n, &c)| if n >= 1 && n as u64 <= rem { c } else { Complex64::new(0.0, 0.0) })
                .collect();
            inverse_fft(&mut full);
            inverse_fft(&mut part);
            (1..q as usize)
                .map(|b| ((full[b] * l as f64 + part[b]).norm(), a, b as u64))
                .fold((f64::NEG_INFINITY, a, 1), |acc, v| if v.0 > acc.0 { v } else { acc })
        })
        .reduce(|| (f64::NEG_INFINITY, 0, 0), |p, v| if v.0 > p.0 { v } else { p });
    let (predicted, a, b) = best;
    let x = Coord::rational(b as i64, q)?;
    let t = Coord::rational(a as i64, q)?;
    let lhs = eval_point_exact(n_q, &x, &t)?.norm();
    let nf = n_q as f64;
    let mut rec = BoundCheckRecord::new(x.value(), Some(t.value()), lhs, nf.powf(alpha - delta))
        .with("alpha", alpha)
        .with("delta", delta)
        .with("q", q as f64)
        .with("a", a as f64)
        .with("b", b as f64)
        .with("N_q", nf)
        .with("predicted", predicted)
        .with("gauss_scale", nf / (q as f64).sqrt());
    rec.flagged = rec.ratio < 1.0;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval_naive;

    #[test]
    fn envelope_at_zero_time() {
        for n in [2u64, 17, 300] {
            let r = bourgain_envelope(n, 0.37, 0.0, Grouping::Literal).unwrap();
            let nf = n as f64;
            assert!((r.rhs_envelope - nf * nf.ln()).abs() < 1e-9 * nf);
            assert!(r.ratio <= 1.0 / nf.ln() + 1e-12);
        }
        assert!(bourgain_envelope(1, 0.0, 0.0, Grouping::Literal).is_err());
    }

    #[test]
    fn envelope_third() {
        let r = bourgain_envelope(256, 0.0, 1.0 / 3.0, Grouping::Literal).unwrap();
        assert_eq!(r.params["q"], 3.0);
        let lhs = eval_naive(256, 0.0, 1.0 / 3.0).unwrap().norm();
        assert!((r.lhs - lhs).abs() < 1e-9);
        let rhs = 256f64.ln() * 256.0 / 3f64.sqrt() / (1.0 + 256.0 * r.params["distance"].sqrt());
        assert!((r.rhs_envelope - rhs).abs() < 1e-9);
    }

    #[test]
    fn groupings_differ_off_rationals() {
        let a = bourgain_envelope(100, 0.1, 0.2345, Grouping::Literal).unwrap();
        let b = bourgain_envelope(100, 0.1, 0.2345, Grouping::Alternate).unwrap();
        assert_eq!(a.lhs, b.lhs);
        assert!(a.rhs_envelope < b.rhs_envelope);
    }

    #[test]
    fn summary_quantiles_ordered() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let s = summarize(&v, Some(3)).unwrap();
        assert_eq!((s.p50, s.p90, s.p99, s.max_ratio), (50.0, 90.0, 99.0, 100.0));
        assert_eq!(s.fitted_constant, s.max_ratio);
        assert!(summarize(&[f64::NAN], None).is_err());
    }

    #[test]
    fn weyl_ratio_q1_single_class() {
        let r = classical_weyl_ratio(50, 1, 0, 0.3, 0.41).unwrap();
        // v_1 = e(x + t) w_1 and w_1 = w_50 + 1.
        assert!((r.lhs - r.params["w_q"]).abs() < 1e-9);
        assert!((r.ratio - 1.0 / 2f64.ln().sqrt()).abs() < 1e-9);
    }

    #[test]
    fn weyl_ratio_validates() {
        assert!(classical_weyl_ratio(240, 3, 3, 0.2, 0.0).is_err());
        assert!(classical_weyl_ratio(240, 3, 1, 0.2, 0.5).is_err());
        let r = classical_weyl_ratio(240, 3, 1, 0.2, 1.0 / 3.0 + 1e-7).unwrap();
        assert!(r.ratio.is_finite());
    }

    #[test]
    fn major_arc_gauss_block() {
        let r = major_arc_lower(300, 5, 1, 1, 0.0, 0.0).unwrap();
        assert!((r.lhs - 300.0 / 5f64.sqrt()).abs() < 1e-8 * 300.0, "{}", r.lhs);
        assert!(major_arc_lower(300, 4, 1, 1, 0.0, 0.0).is_err());
        assert!(major_arc_lower(300, 5, 1, 1, 1.0, 0.0).is_err());
        assert!(major_arc_lower(20, 5, 1, 1, 0.0, 0.0).is_err());
    }

    #[test]
    fn major_arc_shifted() {
        let r = major_arc_lower(301, 7, 3, 2, 1.0 / (200.0 * 301.0), 0.0).unwrap();
        assert!(r.ratio >= 0.1, "{}", r.ratio);
    }

    #[test]
    fn sharpness_holds() {
        for n in [10u64, 256, 1000] {
            let r = sharpness_witness(n).unwrap();
            assert!(!r.flagged && r.ratio >= 0.9);
            assert!(r.params["min_real"] >= 0.99);
        }
        assert!(sharpness_witness(9).is_err());
    }

    #[test]
    fn exponent_identity_at_four_fifths() {
        let (beta, ok) = exponent_identity(4, 5).unwrap();
        assert_eq!(beta, (1, 2));
        assert!(ok);
        assert!(exponent_identity(3, 4).is_err());
    }

    #[test]
    fn sandwich_and_threshold() {
        let s = nq_sandwich(4, 5, 10007).unwrap();
        assert!(s.lower_holds && s.upper_holds);
        assert_eq!(s.n_q, BigUint::from(100_175_091u64));
        match jarnik_containment(0.8, 101, 0.05, 4) {
            Err(WeylError::InvalidArgument { param, reason }) => {
                assert_eq!(param, "q");
                assert!(reason.contains("1.000000e4"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn completion_sampler_avoids_lattice() {
        let (recs, s) = completion_check(16, 32, 50, 9).unwrap();
        assert_eq!(s.sample_count, 50);
        for r in &recs {
            let off = (r.x * 32.0 - (r.x * 32.0).round()).abs() / 32.0;
            assert!(off > 1.0 / (4.0 * 32.0 * 32.0));
        }
        let (again, s2) = completion_check(16, 32, 50, 9).unwrap();
        assert_eq!(recs, again);
        assert_eq!(s, s2);
    }
}
