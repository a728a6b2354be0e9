//! Evaluation of `w_N(x,t) = sum_{n=1}^N e(nx + n^2 t)` on points, grids and progressions.

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Result, WeylError};
use crate::phase::{gcd, rational_frac, sym, unit, Coord, PhaseAccumulator};

/// A value of a Weyl sum. `norm()` is the modulus.
pub type ComplexAmplitude = Complex64;

/// Steps between exact re-anchoring of the recurrence.
pub const BLOCK: u64 = 1024;

/// Largest common denominator served by the residue-histogram path.
const TABLE_MAX: u64 = 1 << 20;

/// Default scale slack.
pub const DEFAULT_ETA: f64 = 1e-3;

/// Sum length and large-value exponent, plus the slack `eta` used for rectangle scales.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylScale {
    pub n: u64,
    pub alpha: f64,
    pub eta: f64,
}

impl WeylScale {
    pub fn new(n: u64, alpha: f64, eta: f64) -> Result<Self> {
        if n == 0 {
            return Err(WeylError::invalid("N", "must be at least 1"));
        }
        if !(0.5..=1.0).contains(&alpha) {
            return Err(WeylError::invalid("alpha", format!("{alpha} is outside [1/2, 1]")));
        }
        if !(eta > 0.0 && eta < 0.01) {
            return Err(WeylError::invalid("eta", format!("{eta} is outside (0, 0.01)")));
        }
        Ok(WeylScale { n, alpha, eta })
    }

    pub fn with_default_eta(n: u64, alpha: f64) -> Result<Self> {
        Self::new(n, alpha, DEFAULT_ETA)
    }

    /// `N^alpha`.
    pub fn threshold(&self) -> f64 {
        (self.n as f64).powf(self.alpha)
    }
}

/// Uniform nodes `origin + j * spacing`, `j < count`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: f64,
    pub count: usize,
    pub spacing: f64,
}

impl GridSpec {
    pub fn new(origin: f64, count: usize, spacing: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&origin) {
            return Err(WeylError::invalid("origin", "must lie in [0, 1)"));
        }
        if count == 0 {
            return Err(WeylError::invalid("count", "must be positive"));
        }
        if !(spacing > 0.0) || count as f64 * spacing > 1.0 + spacing {
            return Err(WeylError::invalid("spacing", "grid must fit in one period"));
        }
        Ok(GridSpec {
            origin,
            count,
            spacing,
        })
    }

    /// The nodes `j/m`, `j < m`.
    pub fn uniform(m: usize) -> Self {
        GridSpec {
            origin: 0.0,
            count: m,
            spacing: 1.0 / m as f64,
        }
    }

    pub fn node(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.spacing
    }
}

fn check_n(n: u64) -> Result<()> {
    if n == 0 {
        Err(WeylError::invalid("N", "must be at least 1"))
    } else {
        Ok(())
    }
}

/// `w_N(x, t)` for real `x, t` (reduced mod 1).
pub fn eval_point(n: u64, x: f64, t: f64) -> Result<ComplexAmplitude> {
    check_n(n)?;
    Ok(weyl_sum(1, n, &Coord::real(x)?, &Coord::real(t)?))
}

/// `w_N(x, t)` for exact coordinates.
pub fn eval_point_exact(n: u64, x: &Coord, t: &Coord) -> Result<ComplexAmplitude> {
    check_n(n)?;
    Ok(weyl_sum(1, n, x, t))
}

/// `sum_{l=1}^k e(lqx + l^2 q^2 t)`: the Weyl sum over the progression `q, 2q, ..., kq`.
pub fn eval_progression(q: u64, k: u64, x: f64, t: f64) -> Result<ComplexAmplitude> {
    eval_progression_exact(q, k, &Coord::real(x)?, &Coord::real(t)?)
}

pub fn eval_progression_exact(q: u64, k: u64, x: &Coord, t: &Coord) -> Result<ComplexAmplitude> {
    if q == 0 {
        return Err(WeylError::invalid("q", "must be at least 1"));
    }
    if k == 0 {
        return Err(WeylError::invalid("k", "must be at least 1"));
    }
    if (q as u128) * (k as u128) > (1u128 << 42) {
        return Err(WeylError::invalid("k", format!("progression end {q}*{k} exceeds 2^42")));
    }
    Ok(weyl_sum(q, k, x, t))
}

/// `sum_{l=1}^count e(l s x + l^2 s^2 t)`.
pub(crate) fn weyl_sum(step: u64, count: u64, x: &Coord, t: &Coord) -> Complex64 {
    if let Some(v) = sum_residues(step, count, x, t) {
        return v;
    }
    sum_recurrence(step, count, x, t)
}

#[inline]
pub(crate) fn phase_at(x: &Coord, kx: u128, t: &Coord, kt: u128) -> f64 {
    sym(x.frac_mul(kx) + t.frac_mul(kt))
}

/// Constant second-difference recurrence: the term ratio is multiplied by `e(2 s^2 t)`
/// each step. Term and ratio are re-anchored exactly every [`BLOCK`] terms.
fn sum_recurrence(step: u64, count: u64, x: &Coord, t: &Coord) -> Complex64 {
    let s = step as u128;
    let s2 = s * s;
    let d = unit(t.frac_mul(2 * s2));
    let block = |b: u64| -> Complex64 {
        let l0 = (b * BLOCK + 1) as u128;
        let len = BLOCK.min(count - b * BLOCK);
        let mut term = unit(phase_at(x, l0 * s, t, l0 * l0 * s2));
        let mut ratio = unit(phase_at(x, s, t, (2 * l0 + 1) * s2));
        let mut acc = Complex64::new(0.0, 0.0);
        for _ in 0..len {
            acc += term;
            term *= ratio;
            ratio *= d;
        }
        acc
    };
    let blocks = count.div_ceil(BLOCK);
    let partial: Vec<Complex64> = if blocks > 64 {
        (0..blocks).into_par_iter().map(block).collect()
    } else {
        (0..blocks).map(block).collect()
    };
    pairwise_sum(&partial)
}

pub(crate) fn pairwise_sum(v: &[Complex64]) -> Complex64 {
    match v.len() {
        0 => Complex64::new(0.0, 0.0),
        1 => v[0],
        n => {
            let (a, b) = v.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

/// Exact path for rational `x, t`: histogram the residues of the phase numerators
/// modulo the common denominator, then sum the table once.
fn sum_residues(step: u64, count: u64, x: &Coord, t: &Coord) -> Option<Complex64> {
    if !(x.is_rational() && t.is_rational()) {
        return None;
    }
    let (dx, dt) = (x.denominator(), t.denominator());
    let l = (dx as u128) * (dt as u128) / gcd(dx, dt) as u128;
    if l > TABLE_MAX as u128 || l as u64 > count.max(1) {
        return None;
    }
    let l = l as u64;
    let xn = x.numerator() * (l / dx) % l;
    let tn = t.numerator() * (l / dt) % l;
    let s = step % l;
    let s2 = s * s % l;
    // index_{j} = (j s xn + j^2 s^2 tn) mod l; first difference starts at j = 1
    let mut idx = (s * xn + s2 * tn) % l;
    let mut diff = (s * xn + 3 * s2 % l * tn) % l;
    let dd = 2 * s2 % l * tn % l;
    let mut hist = vec![0u64; l as usize];
    for _ in 0..count {
        hist[idx as usize] += 1;
        idx += diff;
        if idx >= l {
            idx -= l;
        }
        diff += dd;
        if diff >= l {
            diff -= l;
        }
    }
    let mut re = Neumaier::default();
    let mut im = Neumaier::default();
    for (j, &c) in hist.iter().enumerate() {
        if c != 0 {
            let e = unit(rational_frac(j as u128, 1, l));
            re.add(c as f64 * e.re);
            im.add(c as f64 * e.im);
        }
    }
    Some(Complex64::new(re.value(), im.value()))
}

/// Compensated (Kahan-Babuska-Neumaier) summation.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    pub(crate) fn add(&mut self, v: f64) {
        let s = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - s) + v;
        } else {
            self.comp += (v - s) + self.sum;
        }
        self.sum = s;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Per-term reference evaluator: every phase is reduced through the integer mantissa
/// of its coordinate and summed with compensation. Slow; used as an oracle.
pub fn eval_naive(n: u64, x: f64, t: f64) -> Result<ComplexAmplitude> {
    check_n(n)?;
    eval_naive_exact(n, &Coord::real(x)?, &Coord::real(t)?)
}

pub fn eval_naive_exact(n: u64, x: &Coord, t: &Coord) -> Result<ComplexAmplitude> {
    check_n(n)?;
    let reduce = |c: &Coord, k: u128| {
        rational_frac(k, c.numerator(), c.denominator()) + crate::phase::frac_mul_mantissa(k, c.offset())
    };
    let mut re = Neumaier::default();
    let mut im = Neumaier::default();
    for m in 1..=n as u128 {
        let ph = reduce(x, m) + reduce(t, m * m);
        let ph = ph - ph.round();
        let (s, c) = (std::f64::consts::TAU * ph).sin_cos();
        re.add(c);
        im.add(s);
    }
    Ok(Complex64::new(re.value(), im.value()))
}

fn planner() -> &'static Mutex<(FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>)> {
    static P: OnceLock<Mutex<(FftPlanner<f64>, HashMap<usize, Arc<dyn Fft<f64>>>)>> = OnceLock::new();
    P.get_or_init(|| Mutex::new((FftPlanner::new(), HashMap::new())))
}

/// Cached unnormalized inverse plan (`e^{+2 pi i jn/M}`).
pub(crate) fn inverse_plan(len: usize) -> Arc<dyn Fft<f64>> {
    let mut guard = planner().lock().unwrap_or_else(|p| p.into_inner());
    let (planner, cache) = &mut *guard;
    cache
        .entry(len)
        .or_insert_with(|| planner.plan_fft_inverse(len))
        .clone()
}

pub(crate) fn inverse_fft(buf: &mut [Complex64]) {
    inverse_plan(buf.len()).process(buf);
}

/// `w_N(j/M, t)` for `j < M`, as one size-`M` DFT of `c_n = e(n^2 t)`.
pub fn eval_x_grid(n: u64, t: f64, m: usize) -> Result<Vec<ComplexAmplitude>> {
    eval_x_grid_exact(n, &Coord::real(t)?, m)
}

pub fn eval_x_grid_exact(n: u64, t: &Coord, m: usize) -> Result<Vec<ComplexAmplitude>> {
    check_n(n)?;
    if (m as u64) <= n {
        return Err(WeylError::invalid("m", format!("{m} must exceed N = {n}")));
    }
    Ok(x_grid_folded(n, t, m))
}

/// Like [`eval_x_grid_exact`] but any `m >= 1`: frequencies are folded mod `m`,
/// giving `w_N(j/m, t)` exactly since `e(jn/m)` is `m`-periodic in `n`.
pub(crate) fn x_grid_folded(n: u64, t: &Coord, m: usize) -> Vec<Complex64> {
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for k in 1..=n as u128 {
        buf[(k % m as u128) as usize] += unit(t.frac_mul(k * k));
    }
    inverse_fft(&mut buf);
    buf
}

/// `w_N(x, k/K)` for `k < K`, as one size-`K` DFT with `e(nx)` at bin `n^2`.
pub fn eval_t_grid(n: u64, x: f64, k: usize) -> Result<Vec<ComplexAmplitude>> {
    eval_t_grid_exact(n, &Coord::real(x)?, k)
}

pub fn eval_t_grid_exact(n: u64, x: &Coord, k: usize) -> Result<Vec<ComplexAmplitude>> {
    check_n(n)?;
    if (k as u128) <= (n as u128) * (n as u128) {
        return Err(WeylError::invalid("k", format!("{k} must exceed N^2 = {}", n as u128 * n as u128)));
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    for j in 1..=n as u128 {
        buf[(j * j) as usize] = unit(x.frac_mul(j));
    }
    inverse_fft(&mut buf);
    Ok(buf)
}

/// `S_M(x,t) = sum_{h=1}^M (1/h) |w_M(x + h/M, t)|`.
///
/// On the grid `x = j/M` this is one size-`M` DFT; elsewhere `M` point evaluations.
pub fn completion_sum(m: u64, x: f64, t: f64) -> Result<f64> {
    completion_sum_exact(m, &Coord::real(x)?, &Coord::real(t)?)
}

pub fn completion_sum_exact(m: u64, x: &Coord, t: &Coord) -> Result<f64> {
    if m == 0 {
        return Err(WeylError::invalid("M", "must be at least 1"));
    }
    let on_grid = x.is_rational() && m % x.denominator() == 0;
    let mut acc = Neumaier::default();
    if on_grid {
        let j = x.numerator() * (m / x.denominator());
        let grid = x_grid_folded(m, t, m as usize);
        for h in 1..=m {
            acc.add(grid[((j + h) % m) as usize].norm() / h as f64);
        }
    } else {
        let values: Vec<f64> = (1..=m)
            .into_par_iter()
            .map(|h| weyl_sum(1, m, &x.shifted(h % m, m), t).norm() / h as f64)
            .collect();
        for v in values {
            acc.add(v);
        }
    }
    Ok(acc.value())
}

/// Exact phase `k*x + k^2*t` reduced into `[-1/2, 1/2]`, exposed for callers that
/// build their own coefficient vectors.
pub fn quadratic_phase(k: u64, x: &Coord, t: &Coord) -> f64 {
    let k = k as u128;
    let mut acc = PhaseAccumulator::new();
    acc.add(x.frac_mul(k));
    acc.add(t.frac_mul(k * k));
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn trivial_values() {
        assert_eq!(eval_point(5, 0.0, 0.0).unwrap(), Complex64::new(5.0, 0.0));
        assert!(eval_point(4, 0.5, 0.0).unwrap().norm() < 1e-14);
        assert!(close(eval_point(3, 0.0, 0.5).unwrap(), Complex64::new(-1.0, 0.0), 1e-14));
        assert!(eval_point(0, 0.0, 0.0).is_err());
        assert!(eval_point(3, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn gauss_block_modulus() {
        let x = Coord::rational(1, 3).unwrap();
        let v = eval_point_exact(12, &x, &x).unwrap();
        assert!((v.norm() - 12.0 / 3f64.sqrt()).abs() < 1e-12);
        let naive = eval_naive_exact(12, &x, &x).unwrap();
        assert!(close(v, naive, 1e-12));
    }

    #[test]
    fn recurrence_matches_naive_across_blocks() {
        for &(n, x, t) in &[(3000u64, 0.123456789, 0.987654321), (1025, 0.3, 0.7), (1, 0.2, 0.4)] {
            let a = eval_point(n, x, t).unwrap();
            let b = eval_naive(n, x, t).unwrap();
            assert!(close(a, b, 1e-10 * n as f64), "{n}: {a} vs {b}");
        }
    }

    #[test]
    fn residue_path_matches_recurrence() {
        let x = Coord::rational(2, 7).unwrap();
        let t = Coord::rational(3, 11).unwrap();
        let exact = weyl_sum(1, 500, &x, &t);
        let rec = sum_recurrence(1, 500, &x, &t);
        assert!(close(exact, rec, 1e-9));
        assert!(close(exact, eval_naive_exact(500, &x, &t).unwrap(), 1e-12));
        let exact = weyl_sum(3, 200, &x, &t);
        let rec = sum_recurrence(3, 200, &x, &t);
        assert!(close(exact, rec, 1e-9));
    }

    #[test]
    fn x_grid_examples() {
        let g = eval_x_grid(4, 0.0, 8).unwrap();
        assert!(close(g[0], Complex64::new(4.0, 0.0), 1e-14));
        assert!(g[4].norm() < 1e-14);
        assert!(eval_x_grid(4, 0.0, 4).is_err());
    }

    #[test]
    fn t_grid_examples() {
        let g = eval_t_grid(3, 0.0, 16).unwrap();
        assert!(close(g[8], Complex64::new(-1.0, 0.0), 1e-14));
        let g = eval_t_grid(2, 0.0, 8).unwrap();
        assert!(close(g[0], Complex64::new(2.0, 0.0), 1e-14));
        assert!(eval_t_grid(3, 0.0, 9).is_err());
    }

    #[test]
    fn progression_reduces_to_point() {
        assert_eq!(eval_progression(1, 5, 0.0, 0.0).unwrap(), Complex64::new(5.0, 0.0));
        assert!(eval_progression(0, 5, 0.0, 0.0).is_err());
        assert!(eval_progression(3, 0, 0.0, 0.0).is_err());
    }

    #[test]
    fn completion_at_origin_is_one() {
        for m in [1u64, 2, 7, 16] {
            assert!((completion_sum(m, 0.0, 0.0).unwrap() - 1.0).abs() < 1e-12);
        }
        assert!(completion_sum(0, 0.0, 0.0).is_err());
    }

    #[test]
    fn grid_spec_validation() {
        assert!(GridSpec::new(0.0, 4, 0.25).is_ok());
        assert!(GridSpec::new(0.0, 8, 0.25).is_err());
        assert!(GridSpec::new(1.0, 1, 0.25).is_err());
        assert_eq!(GridSpec::uniform(4).node(2), 0.5);
    }

    #[test]
    fn scale_validation() {
        assert!(WeylScale::new(0, 0.8, 1e-3).is_err());
        assert!(WeylScale::new(10, 0.4, 1e-3).is_err());
        assert!(WeylScale::new(10, 0.8, 0.02).is_err());
        assert_eq!(WeylScale::with_default_eta(16, 0.5).unwrap().threshold(), 4.0);
    }
}
