//! Certified suprema of `|w_N(x, .)|` over time, and maximal-function profiles.
//!
//! `p(t) = |w_N(x,t)|^2` is a real trigonometric polynomial of degree `D = N^2 - 1`,
//! so Bernstein's inequality gives `|p''| <= (2 pi D)^2 sup p`. On a grid of spacing
//! `h` the sup therefore exceeds the grid maximum `g` by at most a factor `1/(1 - rho)`,
//! `rho = (2 pi D h)^2 / 8`, and on a cell `[a, b]` the function stays below
//! `max(p(a), p(b)) + B (b - a)^2 / 8` with `B` the curvature bound. Cells whose bound
//! reaches above the best value found are bisected until the gap closes.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use crate::error::{Result, WeylError};
use crate::eval::{eval_t_grid_exact, inverse_plan, weyl_sum, GridSpec};
use crate::phase::{rational_frac, unit, Coord};

/// Extra point evaluations allowed per supremum.
pub const REFINE_BUDGET: u64 = 1_000_000;

/// Default cap on evaluations implied by a maximal grid.
pub const DEFAULT_GUARD: u128 = 1 << 34;

/// Intervals narrower than this multiple of `1/(8N^2)` are treated as points.
const DEGENERATE_SLACK: f64 = 1e-9;

/// Largest coarse t-grid used for a single x.
const MAX_T_GRID: usize = 1 << 27;

/// How far a reported supremum can sit below the true one, and how that was established.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolutionCertificate {
    /// Coarse grid spacing in `t`.
    pub t_spacing: f64,
    /// Bound on `|d/dt w_N|`: `min(2 pi sum n^2, 2 pi N^2 S)` with `S` the certified sup bound.
    pub lipschitz_bound: f64,
    /// Bound on `|d^2/dt^2 |w_N|^2|`.
    pub curvature_bound: f64,
    /// Reported sup is at least the true sup minus this.
    pub max_undershoot: f64,
    /// The undershoot the refinement aimed for, `tolerance * N^(3/4)`.
    pub target: f64,
    /// True when `max_undershoot <= target` was reached.
    pub refined: bool,
    /// Point evaluations spent in refinement.
    pub evaluations: u64,
}

/// A certified supremum in `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupResult {
    pub sup: f64,
    pub t_star: f64,
    pub certificate: ResolutionCertificate,
}

#[derive(Clone, Copy, Debug)]
struct Cell {
    bound: f64,
    lo: f64,
    hi: f64,
    p_lo: f64,
    p_hi: f64,
}

impl PartialEq for Cell {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Cell {}
impl PartialOrd for Cell {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Cell {
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.lo.total_cmp(&self.lo))
    }
}

struct Refiner<'a> {
    n: u64,
    x: &'a Coord,
    curvature: f64,
    p_err: f64,
    target: f64,
    budget: u64,
}

struct Refined {
    best: f64,
    t_best: f64,
    undershoot: f64,
    evaluations: u64,
}

impl Refiner<'_> {
    fn bound(&self, lo: f64, hi: f64, p_lo: f64, p_hi: f64) -> f64 {
        let w = hi - lo;
        p_lo.max(p_hi) + self.curvature * w * w / 8.0 + self.p_err
    }

    fn eval(&self, t: f64) -> f64 {
        let tc = Coord::real(t).expect("finite time");
        weyl_sum(1, self.n, self.x, &tc).norm()
    }

    /// Bisects the cells with the highest bound until the gap between the best
    /// evaluated value and every remaining bound is within `target`.
    fn run(&self, cells: impl IntoIterator<Item = (f64, f64, f64, f64)>, best: f64, t_best: f64) -> Result<Refined> {
        let (mut best, mut t_best) = (best, t_best);
        let mut heap = BinaryHeap::new();
        let mut dropped = 0.0f64;
        let keep = |b: f64, best: f64| b.sqrt() - best > self.target;
        for (lo, hi, p_lo, p_hi) in cells {
            let b = self.bound(lo, hi, p_lo, p_hi);
            if keep(b, best) {
                heap.push(Cell {
                    bound: b,
                    lo,
                    hi,
                    p_lo,
                    p_hi,
                });
            } else {
                dropped = dropped.max(b);
            }
        }
        let mut evaluations = 0u64;
        while let Some(cell) = heap.pop() {
            if !keep(cell.bound, best) {
                dropped = dropped.max(cell.bound);
                break;
            }
            let mid = 0.5 * (cell.lo + cell.hi);
            if !(mid > cell.lo && mid < cell.hi) {
                // cannot split further in double precision
                dropped = dropped.max(cell.bound);
                continue;
            }
            if evaluations >= self.budget {
                heap.push(cell);
                let top = heap.peek().map_or(0.0, |c| c.bound).max(dropped);
                return Err(WeylError::BudgetExhausted {
                    budget: self.budget as usize,
                    undershoot: (top.sqrt() - best).max(0.0),
                    target: self.target,
                });
            }
            let v = self.eval(mid);
            evaluations += 1;
            if v > best {
                best = v;
                t_best = mid;
            }
            let pm = v * v;
            for (lo, hi, a, b) in [(cell.lo, mid, cell.p_lo, pm), (mid, cell.hi, pm, cell.p_hi)] {
                let bound = self.bound(lo, hi, a, b);
                if keep(bound, best) {
                    heap.push(Cell {
                        bound,
                        lo,
                        hi,
                        p_lo: a,
                        p_hi: b,
                    });
                } else {
                    dropped = dropped.max(bound);
                }
            }
        }
        let top = heap.peek().map_or(0.0, |c| c.bound).max(dropped);
        Ok(Refined {
            best,
            t_best: crate::phase::reduce_unit(t_best),
            undershoot: (top.sqrt() - best).max(0.0),
            evaluations,
        })
    }
}

fn check_tolerance(tolerance: f64) -> Result<()> {
    if !(tolerance > 0.0 && tolerance <= 1.0) {
        return Err(WeylError::invalid("tolerance", format!("{tolerance} is outside (0, 1]")));
    }
    Ok(())
}

/// `2 pi sum_{n<=N} n^2`.
pub fn lipschitz_bound(n: u64) -> f64 {
    let n = n as f64;
    2.0 * PI * n * (n + 1.0) * (2.0 * n + 1.0) / 6.0
}

fn degree(n: u64) -> f64 {
    (n as f64) * (n as f64) - 1.0
}

/// `(2 pi D h)^2 / 8` for grid spacing `h`.
fn rho(n: u64, h: f64) -> f64 {
    let d = 2.0 * PI * degree(n) * h;
    d * d / 8.0
}

/// Absolute error allowance for `|w|^2` read off an FFT of size `k`.
fn fft_p_error(n: u64, k: usize) -> f64 {
    let nf = n as f64;
    let dw = 1e-13 * nf * (k as f64).log2().max(1.0);
    2.0 * nf * dw + dw * dw
}

/// Smallest power of two at least `factor * N^2`.
pub fn coarse_size(n: u64, factor: u64) -> usize {
    ((factor as u128 * n as u128 * n as u128).max(2) as usize).next_power_of_two()
}

/// `sup_{t} |w_N(x,t)|` up to `tolerance * N^(3/4)`.
pub fn sup_over_t(n: u64, x: f64, tolerance: f64) -> Result<SupResult> {
    sup_over_t_exact(n, &Coord::real(x)?, tolerance)
}

pub fn sup_over_t_exact(n: u64, x: &Coord, tolerance: f64) -> Result<SupResult> {
    sup_over_t_with(n, x, tolerance, 8)
}

pub(crate) fn sup_over_t_with(n: u64, x: &Coord, tolerance: f64, k_factor: u64) -> Result<SupResult> {
    check_tolerance(tolerance)?;
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    let k = coarse_size(n, k_factor);
    if k > MAX_T_GRID {
        return Err(WeylError::TooLarge {
            evaluations: k as u128,
            limit: MAX_T_GRID as u128,
        });
    }
    let grid = eval_t_grid_exact(n, x, k)?;
    let p: Vec<f64> = grid.iter().map(|v| v.norm_sqr()).collect();
    drop(grid);
    let (arg, &g) = p
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
        .expect("non-empty grid");
    let h = 1.0 / k as f64;
    let r = rho(n, h);
    let p_err = fft_p_error(n, k);
    let s_up = (n as f64).min(((g + p_err) / (1.0 - r)).sqrt());
    let curvature = (2.0 * PI * degree(n)).powi(2) * s_up * s_up;
    let target = tolerance * (n as f64).powf(0.75);
    let refiner = Refiner {
        n,
        x,
        curvature,
        p_err,
        target,
        budget: REFINE_BUDGET,
    };
    let t0 = arg as f64 * h;
    let best = refiner.eval(t0);
    let threshold = (best + target).powi(2) - curvature * h * h / 8.0 - p_err;
    let cells = (0..k).filter_map(|j| {
        let (a, b) = (p[j], p[(j + 1) % k]);
        (a.max(b) > threshold).then(|| (j as f64 * h, (j + 1) as f64 * h, a, b))
    });
    let dropped = p_dropped_max(&p, threshold) + curvature * h * h / 8.0 + p_err;
    let out = refiner.run(cells, best, t0)?;
    let undershoot = out.undershoot.max((dropped.sqrt() - out.best).max(0.0));
    Ok(SupResult {
        sup: out.best,
        t_star: out.t_best,
        certificate: ResolutionCertificate {
            t_spacing: h,
            lipschitz_bound: lipschitz_bound(n).min(2.0 * PI * n as f64 * n as f64 * s_up),
            curvature_bound: curvature,
            max_undershoot: undershoot,
            target,
            refined: undershoot <= target,
            evaluations: out.evaluations + 1,
        },
    })
}

/// Largest cell endpoint maximum that is not above `threshold`.
fn p_dropped_max(p: &[f64], threshold: f64) -> f64 {
    let k = p.len();
    (0..k)
        .map(|j| p[j].max(p[(j + 1) % k]))
        .filter(|&m| m <= threshold)
        .fold(0.0, f64::max)
}

/// `sup_{lo <= t <= hi} |w_N(x,t)|` with the same certificate contract as [`sup_over_t`].
///
/// Intervals narrower than `1e-9/(8N^2)` return the midpoint value with a Lipschitz radius.
pub fn restricted_sup(n: u64, x: f64, interval: (f64, f64), tolerance: f64) -> Result<SupResult> {
    restricted_sup_exact(n, &Coord::real(x)?, interval, tolerance)
}

pub fn restricted_sup_exact(n: u64, x: &Coord, interval: (f64, f64), tolerance: f64) -> Result<SupResult> {
    check_tolerance(tolerance)?;
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi && hi <= 1.0) {
        return Err(WeylError::invalid("t_interval", format!("({lo}, {hi}) is not inside [0, 1]")));
    }
    let nf = n as f64;
    let target = tolerance * nf.powf(0.75);
    let base_h = 1.0 / (8.0 * nf * nf);
    if hi - lo < DEGENERATE_SLACK * base_h {
        let mid = 0.5 * (lo + hi);
        let v = weyl_sum(1, n, x, &Coord::real(mid)?).norm();
        let undershoot = lipschitz_bound(n) * (hi - lo) / 2.0;
        return Ok(SupResult {
            sup: v,
            t_star: mid,
            certificate: ResolutionCertificate {
                t_spacing: hi - lo,
                lipschitz_bound: lipschitz_bound(n),
                curvature_bound: 0.0,
                max_undershoot: undershoot,
                target,
                refined: undershoot <= target,
                evaluations: 1,
            },
        });
    }

    // Long windows read the coarse nodes off one t-FFT, which also yields a global sup
    // bound; short windows evaluate their nodes directly against the trivial bound N.
    let use_fft = hi - lo > 8.0 / nf && coarse_size(n, 8) <= MAX_T_GRID;
    let mut nodes: Vec<(f64, f64)> = Vec::new();
    let (s_up, p_err, h);
    if use_fft {
        let k = coarse_size(n, 8);
        let grid = eval_t_grid_exact(n, x, k)?;
        let g = grid.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
        h = 1.0 / k as f64;
        p_err = fft_p_error(n, k);
        s_up = nf.min(((g + p_err) / (1.0 - rho(n, h))).sqrt());
        let first = (lo * k as f64).ceil() as usize;
        let last = ((hi * k as f64).floor() as usize).min(k);
        nodes.push((lo, f64::NAN));
        for j in first..=last {
            nodes.push((j as f64 * h, grid[j % k].norm_sqr()));
        }
        nodes.push((hi, f64::NAN));
    } else {
        let count = ((hi - lo) / base_h).ceil().max(1.0) as usize;
        h = (hi - lo) / count as f64;
        p_err = 0.0;
        s_up = nf;
        for i in 0..=count {
            let t = if i == count { hi } else { lo + i as f64 * h };
            nodes.push((t, f64::NAN));
        }
    }
    let refiner = Refiner {
        n,
        x,
        curvature: (2.0 * PI * degree(n)).powi(2) * s_up * s_up,
        p_err,
        target,
        budget: REFINE_BUDGET,
    };
    let mut evaluations = 0u64;
    for node in nodes.iter_mut() {
        if node.1.is_nan() {
            node.1 = refiner.eval(node.0).powi(2);
            evaluations += 1;
        }
    }
    nodes.dedup_by(|a, b| a.0 == b.0);
    let (t0, p0) = nodes
        .iter()
        .copied()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least two nodes");
    let best = refiner.eval(t0);
    evaluations += 1;
    debug_assert!((best * best - p0).abs() <= p_err + 1e-6 * p0.max(1.0));
    let cells: Vec<_> = nodes.windows(2).map(|w| (w[0].0, w[1].0, w[0].1, w[1].1)).collect();
    let out = refiner.run(cells, best, t0)?;
    Ok(SupResult {
        sup: out.best,
        t_star: out.t_best,
        certificate: ResolutionCertificate {
            t_spacing: h,
            lipschitz_bound: lipschitz_bound(n).min(2.0 * PI * nf * nf * s_up),
            curvature_bound: refiner.curvature,
            max_undershoot: out.undershoot,
            target,
            refined: out.undershoot <= target,
            evaluations: evaluations + out.evaluations,
        },
    })
}

/// Knobs for [`maximal_grid_with`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxGridOptions {
    /// Base x-grid has at least `density * N` nodes.
    pub density: u64,
    /// Coarse t-grid has at least `k_factor * N^2` nodes.
    pub k_factor: u64,
    /// Rounds of local x-bisection where the profile exceeds `N^(3/4)`.
    pub refine_levels: u32,
    /// Cap on the scan's `x`-nodes times `t`-nodes.
    pub guard: u128,
}

impl Default for MaxGridOptions {
    fn default() -> Self {
        MaxGridOptions {
            density: 4,
            k_factor: 8,
            refine_levels: 1,
            guard: DEFAULT_GUARD,
        }
    }
}

/// Per-x maximal values on an (adaptively refined) grid of `[0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxProfile {
    pub n: u64,
    pub tolerance: f64,
    /// The uniform base grid before refinement.
    pub base: GridSpec,
    /// Sorted nodes in `[0, 1)`.
    pub x_nodes: Vec<f64>,
    /// Quadrature weight of each node: half the gap to each neighbour on the circle.
    pub cell_widths: Vec<f64>,
    pub sup_values: Vec<f64>,
    pub argmax_times: Vec<f64>,
    /// Per-node undershoot bound.
    pub undershoots: Vec<f64>,
    /// Aggregate certificate: worst undershoot, total evaluations.
    pub certificate: ResolutionCertificate,
}

impl MaxProfile {
    pub fn len(&self) -> usize {
        self.x_nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x_nodes.is_empty()
    }

    /// CSV with columns `x,sup,t_star,cell_width`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,sup,t_star,cell_width\n");
        for i in 0..self.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e}\n",
                self.x_nodes[i], self.sup_values[i], self.argmax_times[i], self.cell_widths[i]
            ));
        }
        s
    }

    /// Builds a profile from raw per-node data, computing the cell widths.
    pub fn from_parts(
        n: u64,
        tolerance: f64,
        base: GridSpec,
        mut rows: Vec<(f64, f64, f64, f64)>,
        certificate: ResolutionCertificate,
    ) -> MaxProfile {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let xs: Vec<f64> = rows.iter().map(|r| r.0).collect();
        MaxProfile {
            n,
            tolerance,
            base,
            cell_widths: circle_weights(&xs),
            x_nodes: xs,
            sup_values: rows.iter().map(|r| r.1).collect(),
            argmax_times: rows.iter().map(|r| r.2).collect(),
            undershoots: rows.iter().map(|r| r.3).collect(),
            certificate,
        }
    }
}

/// Half the distance to each neighbour on the circle; sums to 1.
pub(crate) fn circle_weights(xs: &[f64]) -> Vec<f64> {
    let m = xs.len();
    match m {
        0 => vec![],
        1 => vec![1.0],
        _ => (0..m)
            .map(|i| {
                let prev = if i == 0 { xs[m - 1] - 1.0 } else { xs[i - 1] };
                let next = if i + 1 == m { xs[0] + 1.0 } else { xs[i + 1] };
                0.5 * (next - prev)
            })
            .collect(),
    }
}

/// Maximal profile with default options.
pub fn maximal_grid(n: u64, m: usize, tolerance: f64) -> Result<MaxProfile> {
    maximal_grid_with(n, m, tolerance, &MaxGridOptions::default())
}

#[derive(Clone, Copy)]
struct ScanCell {
    row: u64,
    p_lo: f64,
    p_hi: f64,
}

struct ScanPart {
    max_p: Vec<f64>,
    arg_row: Vec<u64>,
    cells: Vec<Vec<ScanCell>>,
}

/// A uniform x-grid of `size` nodes `(c + shift)/size`, `shift` either 0 or 1/2.
/// Both are closed under `x -> x + 1/2` and `x -> -x` when `size` is a multiple of 4.
#[derive(Clone, Copy, Debug)]
struct ScanGrid {
    size: usize,
    half_shift: bool,
}

impl ScanGrid {
    fn coord(&self, c: usize) -> Result<Coord> {
        if self.half_shift {
            Coord::rational(2 * c as i64 + 1, 2 * self.size as u64)
        } else {
            Coord::rational(c as i64, self.size as u64)
        }
    }

    /// Columns holding `x`, `x + 1/2`, `-x` and `-x - 1/2`.
    fn partners(&self, c: usize) -> [(usize, Fold); 4] {
        let (m, half) = (self.size, self.size / 2);
        let s = self.half_shift as usize;
        [
            (c, Fold::Same),
            ((c + half) % m, Fold::Half),
            ((2 * m - c - s) % m, Fold::Reflect),
            ((half + 2 * m - c - s) % m, Fold::HalfReflect),
        ]
    }
}

/// Rows `r0..=r1` of the table `|w_N(x_c, r/k)|^2`, one FFT per row.
/// Keeps per-column maxima and the cells that can still hold a near-maximal value.
fn scan_rows(n: u64, grid: ScanGrid, k: usize, r0: u64, r1: u64, theta: f64) -> ScanPart {
    let mb = grid.size;
    let plan = inverse_plan(mb);
    let zero = Complex64::new(0.0, 0.0);
    let mut scratch = vec![zero; plan.get_inplace_scratch_len()];
    let mut buf = vec![zero; mb];
    let ku = k as u128;
    let step: Vec<Complex64> = (1..=n as u128).map(|j| unit(rational_frac(j * j, 1, k as u64))).collect();
    let shift: Vec<Complex64> = (1..=n as u128)
        .map(|j| unit(rational_frac(j, grid.half_shift as u64, 2 * mb as u64)))
        .collect();
    let mut coef = vec![zero; n as usize];
    let mut prev = vec![0.0f64; mb];
    let mut cur = vec![0.0f64; mb];
    let mut part = ScanPart {
        max_p: vec![f64::NEG_INFINITY; mb],
        arg_row: vec![0; mb],
        cells: vec![Vec::new(); mb],
    };
    for r in r0..=r1 {
        if (r - r0) % 1024 == 0 {
            for (i, c) in coef.iter_mut().enumerate() {
                let j = i as u128 + 1;
                *c = unit(rational_frac((j * j % ku) * r as u128, 1, k as u64));
            }
        } else {
            for (c, s) in coef.iter_mut().zip(&step) {
                *c *= s;
            }
        }
        buf.fill(zero);
        for (i, (c, s)) in coef.iter().zip(&shift).enumerate() {
            buf[(i + 1) % mb] += if grid.half_shift { c * s } else { *c };
        }
        plan.process_with_scratch(&mut buf, &mut scratch);
        for (p, v) in cur.iter_mut().zip(&buf) {
            *p = v.norm_sqr();
        }
        for c in 0..mb {
            if cur[c] > part.max_p[c] {
                part.max_p[c] = cur[c];
                part.arg_row[c] = r;
            }
            if r > r0 {
                let hi = prev[c].max(cur[c]);
                if hi > theta * part.max_p[c] {
                    let list = &mut part.cells[c];
                    list.push(ScanCell {
                        row: r - 1,
                        p_lo: prev[c],
                        p_hi: cur[c],
                    });
                    if list.len() >= 256 && list.len().is_power_of_two() {
                        let floor = theta * part.max_p[c];
                        list.retain(|s| s.p_lo.max(s.p_hi) > floor);
                    }
                }
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    for c in 0..mb {
        let floor = theta * part.max_p[c];
        part.cells[c].retain(|s| s.p_lo.max(s.p_hi) > floor);
    }
    part
}

/// Number of independent row chunks in a scan; fixed so output does not depend on thread count.
const SCAN_CHUNKS: u64 = 16;

/// One certified profile row: `(x, sup, t_star, undershoot, evaluations, curvature)`.
type Row = (f64, f64, f64, f64, u64, f64);

/// Scans `t in [0, 1/4]` for every column of `grid` and assembles certified suprema
/// for the columns in `wanted` (all when `None`).
fn scan_profile(
    n: u64,
    grid: ScanGrid,
    k: usize,
    tolerance: f64,
    wanted: Option<&[usize]>,
) -> Result<Vec<Row>> {
    let mb = grid.size;
    let rows = (k / 4) as u64;
    let h = 1.0 / k as f64;
    let r = rho(n, h);
    let theta = (1.0 - 2.0 * r) / (1.0 - r);
    let p_err = fft_p_error(n, mb);

    let chunks = SCAN_CHUNKS.min(rows);
    let bounds: Vec<(u64, u64)> = (0..chunks)
        .map(|i| (i * rows / chunks, (i + 1) * rows / chunks))
        .collect();
    let parts: Vec<ScanPart> = bounds
        .par_iter()
        .map(|&(a, b)| scan_rows(n, grid, k, a, b, theta))
        .collect();
    let mut max_p = vec![f64::NEG_INFINITY; mb];
    let mut arg_row = vec![0u64; mb];
    let mut cells: Vec<Vec<ScanCell>> = vec![Vec::new(); mb];
    for part in parts {
        for c in 0..mb {
            if part.max_p[c] > max_p[c] {
                max_p[c] = part.max_p[c];
                arg_row[c] = part.arg_row[c];
            }
            cells[c].extend_from_slice(&part.cells[c]);
        }
    }

    let nf = n as f64;
    let target = tolerance * nf.powf(0.75);
    let all: Vec<usize>;
    let wanted = match wanted {
        Some(w) => w,
        None => {
            all = (0..mb).collect();
            &all
        }
    };
    wanted
        .par_iter()
        .map(|&j| {
            let partners = grid.partners(j);
            let (col, fold) = partners
                .iter()
                .copied()
                .max_by(|a, b| max_p[a.0].total_cmp(&max_p[b.0]))
                .expect("four partners");
            let g = max_p[col];
            let s_up = nf.min(((g + p_err) / (1.0 - r)).sqrt());
            let curvature = (2.0 * PI * degree(n)).powi(2) * s_up * s_up;
            let x = grid.coord(j)?;
            let refiner = Refiner {
                n,
                x: &x,
                curvature,
                p_err,
                target,
                budget: REFINE_BUDGET,
            };
            let t0 = fold.point(arg_row[col] as f64 * h);
            let best = refiner.eval(t0);
            let mapped = partners.iter().flat_map(|&(c, f)| {
                cells[c].iter().map(move |s| {
                    let (lo, hi) = (s.row as f64 * h, (s.row + 1) as f64 * h);
                    f.cell(lo, hi, s.p_lo, s.p_hi)
                })
            });
            let out = refiner.run(mapped, best, t0)?;
            // cells dropped during the scan sit below theta * g, hence below the bound's reach
            let floor = (theta * g + curvature * h * h / 8.0 + p_err).sqrt() - out.best;
            let undershoot = out.undershoot.max(floor.max(0.0));
            Ok((x.value(), out.best, out.t_best, undershoot, out.evaluations + 1, curvature))
        })
        .collect()
}

/// Maximal profile over `x = j/M_b`, `M_b = max(M, density N)` rounded up to a multiple of 4.
///
/// Uses the symmetries `|w(x, t + 1/2)| = |w(x + 1/2, t)|` and `|w(-x, -t)| = |w(x, t)|`:
/// only `t in [0, 1/4]` is scanned, and each `x` collects its full circle from four columns.
/// Each refinement round bisects the cells where the profile exceeds `N^(3/4)`; the new
/// nodes come from a scan of the half-shifted grid when they are numerous, otherwise
/// from [`sup_over_t`] one at a time.
pub fn maximal_grid_with(n: u64, m: usize, tolerance: f64, opts: &MaxGridOptions) -> Result<MaxProfile> {
    check_tolerance(tolerance)?;
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    if (m as u64) < n {
        return Err(WeylError::invalid("M", format!("{m} is below N = {n}")));
    }
    if opts.density == 0 || opts.k_factor == 0 {
        return Err(WeylError::invalid("density", "density and k_factor must be positive"));
    }
    let mb = (m as u64).max(opts.density * n).next_multiple_of(4) as usize;
    let k = coarse_size(n, opts.k_factor).max(8);
    let work = mb as u128 * (k / 4) as u128;
    if work > opts.guard {
        return Err(WeylError::TooLarge {
            evaluations: work,
            limit: opts.guard,
        });
    }
    let base = ScanGrid {
        size: mb,
        half_shift: false,
    };
    let mut rows_vec = scan_profile(n, base, k, tolerance, None)?;

    let nf = n as f64;
    let threshold = nf.powf(0.75);
    let floor_spacing = 1.0 / (8.0 * nf * nf);
    let mut spacing = 1.0 / mb as f64;
    for level in 1..=opts.refine_levels {
        if spacing <= 2.0 * floor_spacing {
            break;
        }
        rows_vec.sort_by(|a, b| a.0.total_cmp(&b.0));
        let len = rows_vec.len();
        let fine = mb << (level - 1);
        // new nodes are (2c + 1) / (2 fine); c indexes the shifted grid of size `fine`
        let mids: Vec<usize> = (0..len)
            .filter_map(|i| {
                let a = rows_vec[i];
                let b = rows_vec[(i + 1) % len];
                let next = if i + 1 == len { b.0 + 1.0 } else { b.0 };
                let w = next - a.0;
                let is_finest = (w - spacing).abs() < 0.25 * spacing;
                (is_finest && a.1.max(b.1) > threshold).then(|| (a.0 * fine as f64).round() as usize % fine)
            })
            .collect();
        spacing *= 0.5;
        if mids.is_empty() {
            break;
        }
        let shifted = ScanGrid {
            size: fine,
            half_shift: true,
        };
        let scan_work = fine as u128 * (k / 4) as u128;
        let extra = if mids.len() * 8 > fine && scan_work <= opts.guard {
            scan_profile(n, shifted, k, tolerance, Some(&mids))?
        } else {
            mids.par_iter()
                .map(|&c| {
                    let x = shifted.coord(c)?;
                    let s = sup_over_t_with(n, &x, tolerance, opts.k_factor)?;
                    let c = s.certificate;
                    Ok((x.value(), s.sup, s.t_star, c.max_undershoot, c.evaluations, c.curvature_bound))
                })
                .collect::<Result<Vec<Row>>>()?
        };
        rows_vec.extend(extra);
    }

    let mut evaluations = 0u64;
    let mut curvature_max = 0.0f64;
    let mut max_undershoot = 0.0f64;
    for r in &rows_vec {
        max_undershoot = max_undershoot.max(r.3);
        evaluations += r.4;
        curvature_max = curvature_max.max(r.5);
    }
    let target = tolerance * nf.powf(0.75);
    let certificate = ResolutionCertificate {
        t_spacing: 1.0 / k as f64,
        lipschitz_bound: lipschitz_bound(n),
        curvature_bound: curvature_max,
        max_undershoot,
        target,
        refined: max_undershoot <= target,
        evaluations,
    };
    let rows = rows_vec.into_iter().map(|r| (r.0, r.1, r.2, r.3)).collect();
    Ok(MaxProfile::from_parts(n, tolerance, GridSpec::uniform(mb), rows, certificate))
}

/// How a scanned column at time `s in [0, 1/4]` maps onto the circle of the node being assembled.
#[derive(Clone, Copy, Debug)]
enum Fold {
    /// same node, `t = s`
    Same,
    /// node `x + 1/2`, `t = s + 1/2`
    Half,
    /// node `-x`, `t = -s`
    Reflect,
    /// node `-x - 1/2`, `t = 1/2 - s`
    HalfReflect,
}

impl Fold {
    fn point(self, s: f64) -> f64 {
        let t = match self {
            Fold::Same => s,
            Fold::Half => s + 0.5,
            Fold::Reflect => 1.0 - s,
            Fold::HalfReflect => 0.5 - s,
        };
        crate::phase::reduce_unit(t)
    }

    fn cell(self, lo: f64, hi: f64, p_lo: f64, p_hi: f64) -> (f64, f64, f64, f64) {
        match self {
            Fold::Same => (lo, hi, p_lo, p_hi),
            Fold::Half => (lo + 0.5, hi + 0.5, p_lo, p_hi),
            Fold::Reflect => (1.0 - hi, 1.0 - lo, p_hi, p_lo),
            Fold::HalfReflect => (0.5 - hi, 0.5 - lo, p_hi, p_lo),
        }
    }
}

/// `(sum_j w_j v_j^p)^(1/p)` with the profile's cell widths as weights.
pub fn lp_norm(profile: &MaxProfile, p: f64) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(WeylError::invalid("p", format!("{p} must be at least 1")));
    }
    if profile.is_empty() {
        return Err(WeylError::invalid("profile", "is empty"));
    }
    let mut acc = crate::eval::Neumaier::default();
    for (w, v) in profile.cell_widths.iter().zip(&profile.sup_values) {
        acc.add(w * v.powf(p));
    }
    Ok(acc.value().powf(1.0 / p))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::eval_point;

    #[test]
    fn sup_at_origin_is_n() {
        for n in [1u64, 5, 16, 40] {
            let s = sup_over_t(n, 0.0, 1e-2).unwrap();
            assert!((s.sup - n as f64).abs() < 1e-9, "{n}: {}", s.sup);
            assert!(s.certificate.refined);
        }
    }

    #[test]
    fn sup_dominates_rational_time() {
        let s = sup_over_t(100, 1.0 / 3.0, 1e-2).unwrap();
        let w = eval_point(100, 1.0 / 3.0, 1.0 / 3.0).unwrap().norm();
        assert!(s.sup >= w - s.certificate.max_undershoot);
        assert!(s.certificate.max_undershoot <= 1e-2 * 100f64.powf(0.75));
    }

    #[test]
    fn restricted_window_at_origin() {
        let n = 50u64;
        let s = restricted_sup(n, 0.0, (0.0, 1e-6 / (n * n) as f64), 1e-2).unwrap();
        assert!((s.sup - n as f64).abs() < 1e-6);
        let d = restricted_sup(n, 0.3, (0.2, 0.2), 1e-2).unwrap();
        let w = eval_point(n, 0.3, 0.2).unwrap().norm();
        assert!((d.sup - w).abs() < 1e-12);
        assert!(restricted_sup(n, 0.3, (0.3, 0.2), 1e-2).is_err());
    }

    #[test]
    fn profile_basics() {
        let p = maximal_grid(16, 16, 1e-2).unwrap();
        assert!((p.sup_values[0] - 16.0).abs() < 1e-9);
        let total: f64 = p.cell_widths.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(maximal_grid(16, 8, 1e-2).is_err());
        let opts = MaxGridOptions {
            guard: 10,
            ..Default::default()
        };
        assert!(matches!(
            maximal_grid_with(16, 16, 1e-2, &opts),
            Err(WeylError::TooLarge { .. })
        ));
    }

    #[test]
    fn grid_matches_single_sup() {
        let n = 24u64;
        let opts = MaxGridOptions {
            refine_levels: 0,
            ..Default::default()
        };
        let p = maximal_grid_with(n, 96, 1e-2, &opts).unwrap();
        for j in [0usize, 1, 7, 23, 48, 50, 95] {
            let s = sup_over_t(n, p.x_nodes[j], 1e-2).unwrap();
            let slack = p.undershoots[j] + s.certificate.max_undershoot + 1e-9;
            assert!((s.sup - p.sup_values[j]).abs() <= slack, "j={j}: {} vs {}", s.sup, p.sup_values[j]);
            let w = eval_point(n, p.x_nodes[j], p.argmax_times[j]).unwrap().norm();
            assert!((w - p.sup_values[j]).abs() < 1e-9);
        }
    }

    #[test]
    fn lp_norm_of_constant_profile() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        let rows = xs.iter().map(|&x| (x, 3.0, 0.0, 0.0)).collect();
        let cert = ResolutionCertificate {
            t_spacing: 0.0,
            lipschitz_bound: 0.0,
            curvature_bound: 0.0,
            max_undershoot: 0.0,
            target: 0.0,
            refined: true,
            evaluations: 0,
        };
        let p = MaxProfile::from_parts(4, 1e-2, GridSpec::uniform(10), rows, cert);
        for q in [1.0, 2.0, 4.0, 6.0] {
            assert!((lp_norm(&p, q).unwrap() - 3.0).abs() < 1e-12);
        }
        assert!(lp_norm(&p, 0.5).is_err());
    }

    #[test]
    fn circle_weights_sum_to_one() {
        let w = circle_weights(&[0.0, 0.1, 0.5, 0.75]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((w[0] - 0.5 * (0.1 + 0.25)).abs() < 1e-15);
    }
}
