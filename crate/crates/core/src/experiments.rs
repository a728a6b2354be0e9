//! Scaling campaigns: log-log fits of maximal norms, level-set measures, rectangle
//! counts and progression norms, refined Strichartz integrals over rectangle unions,
//! and box counts of finite-`N` level-set unions.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::content_hash;
use crate::error::{Result, WeylError};
use crate::eval::{eval_point, eval_progression, Neumaier, WeylScale};
use crate::io::atomic_write;
use crate::maximal::{lp_norm, maximal_grid_with, MaxGridOptions, MaxProfile};
use crate::structures::{
    build_collection, level_set, verify_one_dimensional, OneDimCollection, Rect, Witness,
};

/// A least-squares fit of `log value` against `log N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub points: Vec<(u64, f64)>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl ScalingFit {
    /// `exp(intercept) N^slope`.
    pub fn predict(&self, n: f64) -> f64 {
        (self.intercept + self.slope * n.ln()).exp()
    }
}

/// Ordinary least squares on `(ln N, ln value)`. Needs three or more points with
/// strictly increasing `N` and positive values.
pub fn fit_exponent(points: &[(u64, f64)]) -> Result<ScalingFit> {
    if points.len() < 3 {
        return Err(WeylError::InsufficientData(format!(
            "a fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if points.windows(2).any(|w| w[0].0 >= w[1].0) || points[0].0 == 0 {
        return Err(WeylError::invalid("points", "N must be positive and strictly increasing"));
    }
    if let Some(p) = points.iter().find(|p| !(p.1 > 0.0 && p.1.is_finite())) {
        return Err(WeylError::invalid("points", format!("value {} at N = {} is not positive", p.1, p.0)));
    }
    let xs: Vec<f64> = points.iter().map(|p| (p.0 as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 1e-300 {
        1.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        points: points.to_vec(),
        slope,
        intercept,
        r_squared,
    })
}

/// Parameters of a campaign. Grid knobs mirror [`MaxGridOptions`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignConfig {
    pub n_list: Vec<u64>,
    pub alpha_list: Vec<f64>,
    pub tolerance: f64,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub density: u64,
    pub k_factor: u64,
    pub refine_levels: u32,
    /// Level-set threshold constants swept in reports.
    pub c_list: Vec<f64>,
    /// Moduli for the fixed-`N` progression fit.
    pub q_list: Vec<u64>,
    /// The fixed `N` of the progression fit; `0` means the largest entry of `n_list`.
    pub progression_n: u64,
    /// Absolute slack added to every slope comparison.
    pub slope_slack: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            n_list: vec![64, 128, 256, 512],
            alpha_list: vec![0.8, 0.85, 0.9],
            tolerance: crate::constants::SUP_TOLERANCE,
            seed: 1,
            output_dir: PathBuf::from("campaign"),
            density: 4,
            k_factor: 8,
            refine_levels: 1,
            c_list: vec![0.5, 1.0, 2.0],
            q_list: vec![2, 4, 8],
            progression_n: 0,
            slope_slack: 0.3,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_list.is_empty() {
            return Err(WeylError::invalid("n_list", "must not be empty"));
        }
        if let Some(n) = self.n_list.iter().find(|&&n| n < 16) {
            return Err(WeylError::invalid("n_list", format!("N = {n} is below 16")));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(WeylError::invalid("n_list", "must be strictly increasing"));
        }
        if !(self.tolerance > 0.0 && self.tolerance <= 1.0) {
            return Err(WeylError::invalid("tolerance", format!("{} is outside (0, 1]", self.tolerance)));
        }
        if let Some(a) = self.alpha_list.iter().find(|&&a| !(a > 0.75 && a <= 1.0)) {
            return Err(WeylError::invalid("alpha_list", format!("alpha = {a} is outside (3/4, 1]")));
        }
        if let Some(c) = self.c_list.iter().find(|&&c| !(c > 0.0 && c.is_finite())) {
            return Err(WeylError::invalid("c_list", format!("c = {c} must be positive")));
        }
        if self.q_list.contains(&0) {
            return Err(WeylError::invalid("q_list", "moduli must be positive"));
        }
        if self.density == 0 || self.k_factor == 0 {
            return Err(WeylError::invalid("density", "density and k_factor must be positive"));
        }
        if !(self.slope_slack >= 0.0 && self.slope_slack.is_finite()) {
            return Err(WeylError::invalid("slope_slack", "must be non-negative"));
        }
        Ok(())
    }

    pub fn grid_options(&self) -> MaxGridOptions {
        MaxGridOptions {
            density: self.density,
            k_factor: self.k_factor,
            refine_levels: self.refine_levels,
            ..MaxGridOptions::default()
        }
    }

    pub fn progression_size(&self) -> u64 {
        if self.progression_n == 0 {
            *self.n_list.last().unwrap_or(&0)
        } else {
            self.progression_n
        }
    }

    /// Parses a JSON object or `key = value` lines (`#` starts a comment; list values are
    /// comma separated). Missing keys take their defaults.
    pub fn parse(text: &str) -> Result<CampaignConfig> {
        let cfg: CampaignConfig = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            let mut map = serde_json::Map::new();
            for (lineno, raw) in text.lines().enumerate() {
                let line = raw.split('#').next().unwrap_or("").trim();
                if line.is_empty() {
                    continue;
                }
                let (key, value) = line
                    .split_once('=')
                    .ok_or_else(|| WeylError::Format(format!("line {}: expected key = value", lineno + 1)))?;
                let (key, value) = (key.trim(), value.trim());
                map.insert(key.to_string(), Self::value_for(key, value, lineno + 1)?);
            }
            serde_json::from_value(serde_json::Value::Object(map))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies one `key=value` override on top of this config.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let mut v = serde_json::to_value(&*self)?;
        v[key] = Self::value_for(key, value, 0)?;
        *self = serde_json::from_value(v)?;
        Ok(())
    }

    fn value_for(key: &str, value: &str, line: usize) -> Result<serde_json::Value> {
        let num = |s: &str| -> Result<serde_json::Value> {
            serde_json::from_str::<serde_json::Value>(s.trim())
                .ok()
                .filter(|v| v.is_number())
                .ok_or_else(|| WeylError::Format(format!("line {line}: `{key}` expects numbers, got `{s}`")))
        };
        Ok(if key == "output_dir" {
            serde_json::Value::String(value.to_string())
        } else if key.ends_with("_list") {
            serde_json::Value::Array(value.split(',').filter(|s| !s.trim().is_empty()).map(num).collect::<Result<_>>()?)
        } else {
            num(value)?
        })
    }

    /// SHA-256 of the canonical JSON of every parameter except the output directory.
    pub fn param_hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("output_dir");
        }
        content_hash(&v).expect("json value serializes")
    }
}

type CacheKey = (u64, u64, u64, u32, u64);

/// Maximal profiles shared between experiments, optionally mirrored on disk as JSON.
#[derive(Default)]
pub struct ProfileCache {
    map: Mutex<HashMap<CacheKey, Arc<MaxProfile>>>,
    dir: Option<PathBuf>,
}

impl ProfileCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// A cache that also reads and writes `profile_*.json` files under `dir`.
    pub fn persistent(dir: impl Into<PathBuf>) -> Self {
        ProfileCache {
            map: Mutex::default(),
            dir: Some(dir.into()),
        }
    }

    fn file_name(key: &CacheKey) -> String {
        format!(
            "profile_n{}_d{}_k{}_r{}_tol{:016x}.json",
            key.0, key.1, key.2, key.3, key.4
        )
    }

    /// The profile of `w_N` with base grid `N` and the given options, computed at most once.
    pub fn profile(&self, n: u64, tolerance: f64, opts: &MaxGridOptions) -> Result<Arc<MaxProfile>> {
        let key = (n, opts.density, opts.k_factor, opts.refine_levels, tolerance.to_bits());
        if let Some(p) = self.map.lock().expect("cache lock").get(&key) {
            return Ok(p.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(Self::file_name(&key)));
        let loaded = match &path {
            Some(p) if p.exists() => Some(serde_json::from_slice::<MaxProfile>(&std::fs::read(p)?)?),
            _ => None,
        };
        let profile = match loaded {
            Some(p) => p,
            None => {
                log::info!("computing maximal profile for N = {n}");
                let p = maximal_grid_with(n, n as usize, tolerance, opts)?;
                if let Some(path) = &path {
                    atomic_write(path, &serde_json::to_vec(&p)?)?;
                }
                p
            }
        };
        let arc = Arc::new(profile);
        Ok(self
            .map
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(arc)
            .clone())
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Fits of `||sup_t |w_N|||_p` for `p = 2, 4, 6`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormScaling {
    pub l2: ScalingFit,
    pub l4: ScalingFit,
    pub l6: ScalingFit,
    /// Largest certified undershoot per `N`.
    pub undershoots: Vec<(u64, f64)>,
}

pub fn maximal_norm_scaling(config: &CampaignConfig, cache: &ProfileCache) -> Result<NormScaling> {
    config.validate()?;
    let opts = config.grid_options();
    let mut pts = [vec![], vec![], vec![]];
    let mut undershoots = vec![];
    for &n in &config.n_list {
        let prof = cache.profile(n, config.tolerance, &opts)?;
        for (slot, p) in pts.iter_mut().zip([2.0, 4.0, 6.0]) {
            slot.push((n, lp_norm(&prof, p)?));
        }
        undershoots.push((n, prof.certificate.max_undershoot));
    }
    Ok(NormScaling {
        l2: fit_exponent(&pts[0])?,
        l4: fit_exponent(&pts[1])?,
        l6: fit_exponent(&pts[2])?,
        undershoots,
    })
}

/// Level-set measures per `N` and their fit over the non-empty ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetScaling {
    pub alpha: f64,
    pub c: f64,
    pub measures: Vec<(u64, f64)>,
    /// `N` values left out of the fit because the level set was empty.
    pub dropped: Vec<u64>,
    pub fit: ScalingFit,
}

pub fn levelset_scaling(config: &CampaignConfig, cache: &ProfileCache, alpha: f64, c: f64) -> Result<LevelSetScaling> {
    config.validate()?;
    if !(alpha > 0.75 && alpha <= 1.0) {
        return Err(WeylError::invalid("alpha", format!("{alpha} is outside (3/4, 1]")));
    }
    let opts = config.grid_options();
    let mut measures = vec![];
    let mut dropped = vec![];
    for &n in &config.n_list {
        let prof = cache.profile(n, config.tolerance, &opts)?;
        let m = level_set(&prof, alpha, c)?.total_measure;
        measures.push((n, m));
        if m <= 0.0 {
            log::warn!("level set at N = {n}, alpha = {alpha}, c = {c} is empty; dropped from the fit");
            dropped.push(n);
        }
    }
    let fit = fit_exponent(&measures.iter().copied().filter(|p| p.1 > 0.0).collect::<Vec<_>>())?;
    Ok(LevelSetScaling {
        alpha,
        c,
        measures,
        dropped,
        fit,
    })
}

/// Fit of the rectangle count `#X` of [`build_collection`] against `N`.
pub fn rect_count_scaling(config: &CampaignConfig, cache: &ProfileCache, alpha: f64) -> Result<(Vec<(u64, f64)>, ScalingFit)> {
    config.validate()?;
    if !(alpha > 0.75 && alpha <= 1.0) {
        return Err(WeylError::invalid("alpha", format!("{alpha} is outside (3/4, 1]")));
    }
    let opts = config.grid_options();
    let mut counts = vec![];
    for &n in &config.n_list {
        let prof = cache.profile(n, config.tolerance, &opts)?;
        counts.push((n, build_collection(&prof, alpha)?.rects.len() as f64));
    }
    for (n, c) in &counts {
        if *c == 0.0 {
            log::warn!("no rectangles at N = {n}, alpha = {alpha}; dropped from the fit");
        }
    }
    let fit = fit_exponent(&counts.iter().copied().filter(|p| p.1 > 0.0).collect::<Vec<_>>())?;
    Ok((counts, fit))
}

/// Progressions with fewer terms than this are left out of the fits.
pub const MIN_PROGRESSION_TERMS: u64 = 16;

/// `||sup_t |sum_{l=1}^{k} e(lqx + l^2q^2t)|||_4` with `k = floor(N/q)`.
///
/// `(x, t) -> (qx, q^2 t)` preserves Lebesgue measure on the torus, so this is the norm
/// of the scale-`k` maximal profile.
pub fn progression_norm(n: u64, q: u64, config: &CampaignConfig, cache: &ProfileCache) -> Result<f64> {
    if q == 0 {
        return Err(WeylError::invalid("q", "must be at least 1"));
    }
    let k = n / q;
    if k < MIN_PROGRESSION_TERMS {
        return Err(WeylError::InsufficientData(format!("N/q = {k} is below {MIN_PROGRESSION_TERMS}")));
    }
    let prof = cache.profile(k, config.tolerance, &config.grid_options())?;
    lp_norm(&prof, 4.0)
}

/// The same norm by brute force: `sup` over `t_samples` equally spaced times of the
/// progression sum itself, at `x_samples` equally spaced `x`.
pub fn progression_norm_direct(n: u64, q: u64, x_samples: usize, t_samples: usize) -> Result<f64> {
    if q == 0 || n / q == 0 {
        return Err(WeylError::invalid("q", format!("{q} must lie in 1..=N")));
    }
    if x_samples == 0 || t_samples == 0 {
        return Err(WeylError::invalid("x_samples", "sample counts must be positive"));
    }
    let k = n / q;
    let sups = (0..x_samples)
        .into_par_iter()
        .map(|i| {
            let x = i as f64 / x_samples as f64;
            (0..t_samples).try_fold(0.0f64, |m, j| {
                Ok(m.max(eval_progression(q, k, x, j as f64 / t_samples as f64)?.norm()))
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut acc = Neumaier::default();
    for s in sups {
        acc.add(s.powi(4));
    }
    Ok((acc.value() / x_samples as f64).powf(0.25))
}

/// Fit of the progression norm in `N` at fixed `q`, over `n_list` entries with `N/q >= 16`.
pub fn progression_scaling(config: &CampaignConfig, cache: &ProfileCache, q: u64) -> Result<ScalingFit> {
    config.validate()?;
    let mut pts = vec![];
    for &n in &config.n_list {
        if n / q.max(1) < MIN_PROGRESSION_TERMS {
            log::warn!("N = {n}, q = {q}: fewer than {MIN_PROGRESSION_TERMS} terms, dropped");
            continue;
        }
        pts.push((n, progression_norm(n, q, config, cache)?));
    }
    fit_exponent(&pts)
}

/// Fit of the progression norm in `q` at fixed `N`; the abscissa of each point is `q`.
pub fn progression_q_scaling(config: &CampaignConfig, cache: &ProfileCache, n: u64) -> Result<ScalingFit> {
    config.validate()?;
    let mut qs = config.q_list.clone();
    qs.sort_unstable();
    qs.dedup();
    let mut pts = vec![];
    for q in qs {
        if n / q < MIN_PROGRESSION_TERMS {
            log::warn!("N = {n}, q = {q}: fewer than {MIN_PROGRESSION_TERMS} terms, dropped");
            continue;
        }
        pts.push((q, progression_norm(n, q, config, cache)?));
    }
    fit_exponent(&pts)
}

const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

fn gl8_box(n: u64, (x0, x1): (f64, f64), (t0, t1): (f64, f64)) -> Result<f64> {
    let (hx, cx) = (0.5 * (x1 - x0), 0.5 * (x1 + x0));
    let (ht, ct) = (0.5 * (t1 - t0), 0.5 * (t1 + t0));
    let mut acc = Neumaier::default();
    for (u, wu) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
        for (v, wv) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
            let w = eval_point(n, cx + hx * u, ct + ht * v)?.norm_sqr();
            acc.add(wu * wv * w * w);
        }
    }
    Ok(acc.value() * hx * ht)
}

/// `((integral over the union of the rectangles of |w_N|^4))^(1/4)` against `N^(1/4)`.
///
/// The union is split into disjoint boxes along the x-breakpoints and merged t-intervals;
/// each box gets an 8x8 Gauss-Legendre rule. Rectangles must be at most `2/N` wide and
/// `2/N^2` tall and the collection one-dimensional.
pub fn refined_strichartz_check(n: u64, coll: &OneDimCollection) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(WeylError::invalid("N", "must be at least 1"));
    }
    let nf = n as f64;
    let check = verify_one_dimensional(coll);
    if !check.ok {
        return Err(WeylError::invalid(
            "collection",
            format!("x-projections cover {:?} three or more times", check.witness),
        ));
    }
    for r in &coll.rects {
        if !(r.width() >= 0.0 && r.height() >= 0.0) || r.width() > 2.0 / nf || r.height() > 2.0 / (nf * nf) {
            return Err(WeylError::invalid(
                "collection",
                format!("rectangle {:?} x {:?} is not at scale (N, 1)", r.x_interval, r.t_interval),
            ));
        }
    }
    let mut xs: Vec<f64> = coll.rects.iter().flat_map(|r| [r.x_interval.0, r.x_interval.1]).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut boxes = vec![];
    for w in xs.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut ts: Vec<(f64, f64)> = coll
            .rects
            .iter()
            .filter(|r| r.x_interval.0 <= a && b <= r.x_interval.1)
            .map(|r| r.t_interval)
            .collect();
        ts.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut merged: Vec<(f64, f64)> = vec![];
        for iv in ts {
            match merged.last_mut() {
                Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
                _ => merged.push(iv),
            }
        }
        boxes.extend(merged.into_iter().map(|t| ((a, b), t)));
    }
    let parts = boxes
        .into_par_iter()
        .map(|(x, t)| gl8_box(n, x, t))
        .collect::<Result<Vec<f64>>>()?;
    let mut acc = Neumaier::default();
    for p in parts {
        acc.add(p);
    }
    Ok((acc.value().max(0.0).powf(0.25), nf.powf(0.25)))
}

/// `count` disjoint tiles `[i/N, (i+1)/N] x [j/N^2, (j+1)/N^2]` at random positions.
pub fn random_unit_scale_collection(n: u64, count: usize, seed: u64) -> Result<OneDimCollection> {
    if count as u64 > n {
        return Err(WeylError::invalid("count", format!("{count} exceeds N = {n}")));
    }
    let scale = WeylScale::with_default_eta(n, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nf = n as f64;
    let mut cols: Vec<usize> = sample(&mut rng, n as usize, count).into_vec();
    cols.sort_unstable();
    let rects = cols
        .into_iter()
        .map(|i| {
            let j = rng.gen_range(0..n * n) as f64;
            let x = (i as f64 / nf, (i + 1) as f64 / nf);
            let t = (j / (nf * nf), (j + 1.0) / (nf * nf));
            Rect {
                x_interval: x,
                t_interval: t,
                scale,
                witness: Witness {
                    x: x.0,
                    t: t.0,
                    value: 0.0,
                },
            }
        })
        .collect();
    Ok(OneDimCollection { rects, scale })
}

/// Dyadic box counts of a union of level sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCountTable {
    pub alpha: f64,
    pub c: f64,
    pub n_list: Vec<u64>,
    /// `(scale, count)` with `scale = 2^-j`, coarse to fine.
    pub rows: Vec<(f64, u64)>,
    /// Slope of `log count` against `log(1/scale)`; a heuristic only.
    pub slope: Option<f64>,
}

/// Number of intervals `[i 2^-j, (i+1) 2^-j)` meeting the union of the level sets
/// `{sup >= c N^alpha}` over the given profiles, for `2^-j` from `1/2` down to about
/// `N_max^(-2+alpha)`.
pub fn finite_o_alpha_profile(profiles: &[&MaxProfile], alpha: f64, c: f64) -> Result<BoxCountTable> {
    if !(0.75..=1.0).contains(&alpha) {
        return Err(WeylError::invalid("alpha", format!("{alpha} is outside [3/4, 1]")));
    }
    let n_max = profiles
        .iter()
        .map(|p| p.n)
        .max()
        .ok_or_else(|| WeylError::InsufficientData("no profiles".into()))?;
    let mut intervals = vec![];
    for p in profiles {
        for (lo, hi) in level_set(p, alpha, c)?.intervals {
            if hi > 1.0 {
                intervals.push((lo, 1.0));
                intervals.push((0.0, hi - 1.0));
            } else {
                intervals.push((lo, hi));
            }
        }
    }
    let finest = ((n_max as f64).powf(2.0 - alpha).log2().round() as u32).max(1);
    let mut rows = vec![];
    for j in 1..=finest {
        let cells = 1u64 << j;
        let s = cells as f64;
        let mut hit: Vec<u64> = intervals
            .iter()
            .flat_map(|&(lo, hi)| {
                let a = (lo * s).floor() as u64;
                // open right end: a cell starting exactly at hi is not met
                let b = ((hi * s).ceil() as u64).saturating_sub(1).max(a);
                (a..=b.min(cells - 1)).collect::<Vec<_>>()
            })
            .collect();
        hit.sort_unstable();
        hit.dedup();
        rows.push((1.0 / s, hit.len() as u64));
    }
    let pts: Vec<(u64, f64)> = rows
        .iter()
        .filter(|r| r.1 > 0)
        .map(|r| ((1.0 / r.0) as u64, r.1 as f64))
        .collect();
    let slope = fit_exponent(&pts).ok().map(|f| f.slope);
    let mut n_list: Vec<u64> = profiles.iter().map(|p| p.n).collect();
    n_list.sort_unstable();
    Ok(BoxCountTable {
        alpha,
        c,
        n_list,
        rows,
        slope,
    })
}

/// A fitted slope next to the exponent it is compared with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeCheck {
    pub slope: f64,
    pub r_squared: f64,
    pub reference: f64,
    /// `slope <= reference + slack` (two-sided for the maximal norm).
    pub within_slack: bool,
}

/// Everything a campaign writes to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub seed: u64,
    pub param_hash: String,
    pub config: CampaignConfig,
    pub maximal_norm: NormScaling,
    pub maximal_norm_check: SlopeCheck,
    pub levelsets: Vec<LevelSetScaling>,
    pub levelset_checks: BTreeMap<String, SlopeCheck>,
    pub rect_counts: BTreeMap<String, ScalingFit>,
    pub progression_in_q: Option<ScalingFit>,
    /// `(N, lhs, envelope)` on a random collection of `N` unit-scale tiles.
    pub strichartz: Vec<(u64, f64, f64)>,
    pub box_counts: Vec<BoxCountTable>,
    pub skipped: Vec<String>,
}

fn key(alpha: f64, c: f64) -> String {
    format!("alpha={alpha},c={c}")
}

/// Runs every experiment of `config`, writes the reports into `config.output_dir` and
/// returns the summary. Identical configs give byte-identical files.
pub fn run_campaign(config: &CampaignConfig, cache: &ProfileCache) -> Result<CampaignSummary> {
    config.validate()?;
    let mut skipped = vec![];
    let maximal_norm = maximal_norm_scaling(config, cache)?;
    let maximal_norm_check = SlopeCheck {
        slope: maximal_norm.l4.slope,
        r_squared: maximal_norm.l4.r_squared,
        reference: 0.75,
        within_slack: (maximal_norm.l4.slope - 0.75).abs() <= config.slope_slack,
    };

    let mut levelsets = vec![];
    let mut levelset_checks = BTreeMap::new();
    let mut rect_counts = BTreeMap::new();
    for &alpha in &config.alpha_list {
        for &c in &config.c_list {
            match levelset_scaling(config, cache, alpha, c) {
                Ok(ls) => {
                    let reference = 3.0 - 4.0 * alpha;
                    levelset_checks.insert(
                        key(alpha, c),
                        SlopeCheck {
                            slope: ls.fit.slope,
                            r_squared: ls.fit.r_squared,
                            reference,
                            within_slack: ls.fit.slope <= reference + config.slope_slack,
                        },
                    );
                    levelsets.push(ls);
                }
                Err(e @ WeylError::InsufficientData(_)) | Err(e @ WeylError::InvalidArgument { .. }) => {
                    skipped.push(format!("levelset {}: {e}", key(alpha, c)))
                }
                Err(e) => return Err(e),
            }
        }
        match rect_count_scaling(config, cache, alpha) {
            Ok((_, fit)) => {
                rect_counts.insert(format!("alpha={alpha}"), fit);
            }
            Err(e @ WeylError::InsufficientData(_)) => skipped.push(format!("rect counts alpha={alpha}: {e}")),
            Err(e) => return Err(e),
        }
    }

    let progression_in_q = if config.q_list.is_empty() {
        None
    } else {
        match progression_q_scaling(config, cache, config.progression_size()) {
            Ok(f) => Some(f),
            Err(e @ WeylError::InsufficientData(_)) => {
                skipped.push(format!("progression in q: {e}"));
                None
            }
            Err(e) => return Err(e),
        }
    };

    let mut strichartz = vec![];
    for (i, &n) in config.n_list.iter().enumerate() {
        let coll = random_unit_scale_collection(n, n as usize, config.seed.wrapping_add(i as u64))?;
        let (lhs, env) = refined_strichartz_check(n, &coll)?;
        strichartz.push((n, lhs, env));
    }

    let profiles = config
        .n_list
        .iter()
        .map(|&n| cache.profile(n, config.tolerance, &config.grid_options()))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&MaxProfile> = profiles.iter().map(|p| p.as_ref()).collect();
    let mut box_counts = vec![];
    for &alpha in &config.alpha_list {
        match finite_o_alpha_profile(&refs, alpha, 1.0) {
            Ok(t) => box_counts.push(t),
            Err(e @ WeylError::InvalidArgument { .. }) => skipped.push(format!("box counts alpha={alpha}: {e}")),
            Err(e) => return Err(e),
        }
    }

    let summary = CampaignSummary {
        seed: config.seed,
        param_hash: config.param_hash(),
        config: config.clone(),
        maximal_norm,
        maximal_norm_check,
        levelsets,
        levelset_checks,
        rect_counts,
        progression_in_q,
        strichartz,
        box_counts,
        skipped,
    };
    write_reports(&summary, &profiles, &config.output_dir)?;
    Ok(summary)
}

fn write_reports(s: &CampaignSummary, profiles: &[Arc<MaxProfile>], dir: &Path) -> Result<()> {
    let mut plot = String::from("series,x,y\n");
    let mut norms = String::from("n,l2,l4,l6,max_undershoot\n");
    for (i, &(n, l4)) in s.maximal_norm.l4.points.iter().enumerate() {
        let (l2, l6) = (s.maximal_norm.l2.points[i].1, s.maximal_norm.l6.points[i].1);
        norms.push_str(&format!("{n},{l2:e},{l4:e},{l6:e},{:e}\n", s.maximal_norm.undershoots[i].1));
        plot.push_str(&format!("maximal_l4,{n},{l4:e}\n"));
    }
    let mut levels = String::from("n,alpha,c,measure\n");
    for ls in &s.levelsets {
        for &(n, m) in &ls.measures {
            levels.push_str(&format!("{n},{},{},{m:e}\n", ls.alpha, ls.c));
            if m > 0.0 {
                plot.push_str(&format!("levelset_{},{n},{m:e}\n", key(ls.alpha, ls.c)));
            }
        }
    }
    let mut counts = String::from("n,alpha,count\n");
    for (k, fit) in &s.rect_counts {
        for &(n, c) in &fit.points {
            counts.push_str(&format!("{n},{},{c}\n", k.trim_start_matches("alpha=")));
            plot.push_str(&format!("rects_{k},{n},{c}\n"));
        }
    }
    let mut prog = String::from("n,q,norm\n");
    if let Some(f) = &s.progression_in_q {
        for &(q, v) in &f.points {
            prog.push_str(&format!("{},{q},{v:e}\n", s.config.progression_size()));
            plot.push_str(&format!("progression_q,{q},{v:e}\n"));
        }
    }
    let mut stri = String::from("n,lhs,envelope\n");
    for &(n, l, e) in &s.strichartz {
        stri.push_str(&format!("{n},{l:e},{e:e}\n"));
        plot.push_str(&format!("strichartz,{n},{l:e}\n"));
    }
    let mut boxes = String::from("alpha,scale,count\n");
    for t in &s.box_counts {
        for &(sc, c) in &t.rows {
            boxes.push_str(&format!("{},{sc:e},{c}\n", t.alpha));
            plot.push_str(&format!("boxes_alpha={},{:e},{c}\n", t.alpha, 1.0 / sc));
        }
    }
    atomic_write(&dir.join("summary.json"), serde_json::to_string_pretty(s)?.as_bytes())?;
    atomic_write(&dir.join("maximal_norm.csv"), norms.as_bytes())?;
    atomic_write(&dir.join("levelset.csv"), levels.as_bytes())?;
    atomic_write(&dir.join("rect_counts.csv"), counts.as_bytes())?;
    atomic_write(&dir.join("progression.csv"), prog.as_bytes())?;
    atomic_write(&dir.join("strichartz.csv"), stri.as_bytes())?;
    atomic_write(&dir.join("box_counts.csv"), boxes.as_bytes())?;
    atomic_write(&dir.join("plot.csv"), plot.as_bytes())?;
    for p in profiles {
        atomic_write(&dir.join(format!("profile_{}.csv", p.n)), p.to_csv().as_bytes())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_power_law() {
        let pts: Vec<(u64, f64)> = [64u64, 128, 256].iter().map(|&n| (n, (n as f64).powf(0.75))).collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        let flat = fit_exponent(&[(1, 2.0), (2, 2.0), (3, 2.0)]).unwrap();
        assert!(flat.slope.abs() < 1e-15);
    }

    #[test]
    fn fit_with_log_factor() {
        let pts: Vec<(u64, f64)> = (6..=12)
            .map(|j| {
                let n = 1u64 << j;
                (n, 3.0 * (n as f64).powf(0.75) * (n as f64).ln())
            })
            .collect();
        let f = fit_exponent(&pts).unwrap();
        // the log factor adds the least-squares slope of ln ln N against ln N
        let xs: Vec<f64> = pts.iter().map(|p| (p.0 as f64).ln()).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = xs.iter().map(|x| x.ln()).sum::<f64>() / xs.len() as f64;
        let extra = xs.iter().map(|x| (x - mx) * (x.ln() - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((f.slope - 0.75 - extra).abs() < 1e-12, "{}", f.slope);
        assert!(f.slope > 0.75);
    }

    #[test]
    fn fit_rejects_bad_points() {
        assert!(fit_exponent(&[(1, 1.0), (2, 1.0)]).is_err());
        assert!(fit_exponent(&[(1, 1.0), (2, 0.0), (3, 1.0)]).is_err());
        assert!(fit_exponent(&[(2, 1.0), (2, 1.0), (3, 1.0)]).is_err());
    }

    #[test]
    fn config_key_value_and_json_agree() {
        let kv = "n_list = 16, 32, 64\nalpha_list=0.8\n# comment\nseed = 7\noutput_dir = out/x\n";
        let a = CampaignConfig::parse(kv).unwrap();
        let b = CampaignConfig::parse(r#"{"n_list":[16,32,64],"alpha_list":[0.8],"seed":7,"output_dir":"out/x"}"#).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.param_hash(), b.param_hash());
        let mut c = a.clone();
        c.set("seed", "8").unwrap();
        assert_ne!(a.param_hash(), c.param_hash());
        c.set("output_dir", "elsewhere").unwrap();
        c.set("seed", "7").unwrap();
        assert_eq!(a.param_hash(), c.param_hash());
        assert!(CampaignConfig::parse("n_list = 8, 32, 64").is_err());
        assert!(CampaignConfig::parse("bogus = 1").is_err());
        assert!(CampaignConfig::parse("tolerance = 2").is_err());
    }

    #[test]
    fn strichartz_sharp_cell() {
        let n = 64u64;
        let nf = n as f64;
        let scale = WeylScale::with_default_eta(n, 1.0).unwrap();
        let rect = Rect {
            x_interval: (0.0, 1e-6 / nf),
            t_interval: (0.0, 1e-6 / (nf * nf)),
            scale,
            witness: Witness { x: 0.0, t: 0.0, value: nf },
        };
        let coll = OneDimCollection { rects: vec![rect], scale };
        let (lhs, env) = refined_strichartz_check(n, &coll).unwrap();
        assert!((lhs / (1e-3 * env) - 1.0).abs() < 1e-3, "{lhs}");
        let empty = OneDimCollection { rects: vec![], scale };
        assert_eq!(refined_strichartz_check(n, &empty).unwrap().0, 0.0);
    }

    #[test]
    fn strichartz_rejects_triple_cover() {
        let coll = random_unit_scale_collection(32, 1, 3).unwrap();
        let mut rects = coll.rects.clone();
        rects.push(rects[0]);
        rects.push(rects[0]);
        let bad = OneDimCollection { rects, scale: coll.scale };
        assert!(refined_strichartz_check(32, &bad).is_err());
    }

    #[test]
    fn strichartz_union_not_double_counted() {
        let coll = random_unit_scale_collection(32, 32, 11).unwrap();
        // every fourth column, so doubled tiles never touch a neighbour
        let spaced: Vec<Rect> = coll.rects.iter().step_by(4).copied().collect();
        let coll = OneDimCollection { rects: spaced, scale: coll.scale };
        let (single, _) = refined_strichartz_check(32, &coll).unwrap();
        let mut rects = coll.rects.clone();
        rects.extend(coll.rects.iter().copied());
        let doubled = OneDimCollection { rects, scale: coll.scale };
        let (again, _) = refined_strichartz_check(32, &doubled).unwrap();
        assert!((single - again).abs() <= 1e-12 * single);
    }
}
