//! Rectangles at scale `(N, alpha)`, one-dimensional collections, their partition by
//! approximating denominator, and level-set covers of a maximal profile.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::diophant::{classify_time, DiophClass, Rational};
use crate::error::{Result, WeylError};
use crate::eval::WeylScale;
use crate::maximal::MaxProfile;

/// The point where a rectangle's large value was certified.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: f64,
    pub t: f64,
    pub value: f64,
}

/// An axis-parallel rectangle `I x J` in `[0, 1]^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_interval: (f64, f64),
    pub t_interval: (f64, f64),
    pub scale: WeylScale,
    pub witness: Witness,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x_interval.1 - self.x_interval.0
    }

    pub fn height(&self) -> f64 {
        self.t_interval.1 - self.t_interval.0
    }
}

/// Nearest power of two to `v` (in log scale).
fn dyadic(v: f64) -> f64 {
    2f64.powi(v.log2().round() as i32)
}

/// Tile dimensions `(~N^(-2+alpha-eta), ~N^(-4+2alpha-2eta))`, both exact powers of two.
pub fn tile_dims(scale: &WeylScale) -> (f64, f64) {
    let n = scale.n as f64;
    let e = -2.0 + scale.alpha - scale.eta;
    (dyadic(n.powf(e)), dyadic(n.powf(2.0 * e)))
}

/// Rectangles whose x-projections cover no point more than twice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneDimCollection {
    pub rects: Vec<Rect>,
    pub scale: WeylScale,
}

/// One rectangle per dyadic x-tile holding a profile node with `sup >= N^alpha`; the
/// witness is the tile's best node and the t-tile is the one containing its argmax time.
pub fn build_collection(profile: &MaxProfile, alpha: f64) -> Result<OneDimCollection> {
    let scale = WeylScale::with_default_eta(profile.n.max(1), alpha)?;
    let (w, h) = tile_dims(&scale);
    let threshold = scale.threshold() * (1.0 - 1e-12);
    let mut tiles: BTreeMap<u64, Witness> = BTreeMap::new();
    for i in 0..profile.len() {
        let v = profile.sup_values[i];
        if v < threshold {
            continue;
        }
        let x = profile.x_nodes[i];
        let tile = (x / w).floor() as u64;
        let cand = Witness {
            x,
            t: profile.argmax_times[i],
            value: v,
        };
        tiles
            .entry(tile)
            .and_modify(|best| {
                if cand.value > best.value {
                    *best = cand;
                }
            })
            .or_insert(cand);
    }
    let rects = tiles
        .into_iter()
        .map(|(i, wit)| {
            let x_lo = i as f64 * w;
            let t_lo = (wit.t / h).floor() * h;
            Rect {
                x_interval: (x_lo, (x_lo + w).min(1.0)),
                t_interval: (t_lo, (t_lo + h).min(1.0)),
                scale,
                witness: wit,
            }
        })
        .collect();
    Ok(OneDimCollection { rects, scale })
}

/// Outcome of the at-most-two-overlaps check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OneDimCheck {
    pub ok: bool,
    /// A point covered by three or more x-projections.
    pub witness: Option<f64>,
}

/// Sweep over closed x-projections; reports the first point covered at least three times
/// (the midpoint of the first such stretch).
pub fn verify_one_dimensional(coll: &OneDimCollection) -> OneDimCheck {
    let mut events: Vec<(f64, i32)> = Vec::with_capacity(2 * coll.rects.len());
    for r in &coll.rects {
        events.push((r.x_interval.0, 1));
        events.push((r.x_interval.1, -1));
    }
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
    let mut open = 0i32;
    let mut i = 0;
    while i < events.len() {
        let x = events[i].0;
        let mut starts = 0;
        let mut ends = 0;
        while i < events.len() && events[i].0 == x {
            if events[i].1 > 0 {
                starts += 1;
            } else {
                ends += 1;
            }
            i += 1;
        }
        let at_point = open + starts;
        open += starts - ends;
        if at_point >= 3 {
            let next = events.get(i).map_or(x, |e| e.0);
            let witness = if open >= 3 { 0.5 * (x + next) } else { x };
            return OneDimCheck {
                ok: false,
                witness: Some(witness),
            };
        }
    }
    OneDimCheck {
        ok: true,
        witness: None,
    }
}

/// Rectangles grouped by the denominator of their witness time's approximant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QPartition {
    pub classes: BTreeMap<u64, Vec<Rect>>,
    pub unassigned: Vec<Rect>,
    /// The classification behind each input rectangle, in input order.
    pub classifications: Vec<DiophClass>,
}

impl QPartition {
    /// Rectangles for which a second fraction also met both conditions.
    pub fn contested(&self) -> usize {
        self.classifications.iter().filter(|c| !c.rivals.is_empty()).count()
    }
}

/// Assigns each rectangle to `X_q` via its witness time; failures go to `unassigned`.
pub fn partition_by_q(coll: &OneDimCollection, delta: f64, c: f64) -> Result<QPartition> {
    let mut classes: BTreeMap<u64, Vec<Rect>> = BTreeMap::new();
    let mut unassigned = Vec::new();
    let mut classifications = Vec::with_capacity(coll.rects.len());
    for r in &coll.rects {
        let cls = classify_time(r.witness.t, &r.scale, delta, c)?;
        if cls.passes_lemma {
            classes.entry(cls.approximant.q).or_default().push(*r);
        } else {
            unassigned.push(*r);
        }
        classifications.push(cls);
    }
    Ok(QPartition {
        classes,
        unassigned,
        classifications,
    })
}

/// `#X` against `N^(5(1 - alpha) + eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountBound {
    pub count: usize,
    pub bound: f64,
    pub ratio: f64,
}

pub fn count_vs_bound(coll: &OneDimCollection, epsilon: f64) -> Result<CountBound> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(WeylError::invalid("epsilon", "must be non-negative"));
    }
    let n = coll.scale.n as f64;
    let bound = n.powf(5.0 * (1.0 - coll.scale.alpha) + epsilon);
    let count = coll.rects.len();
    Ok(CountBound {
        count,
        bound,
        ratio: count as f64 / bound,
    })
}

/// Cover of `{x : sup_t |w_N(x,t)| >= c N^alpha}` by merged profile cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetReport {
    pub alpha: f64,
    pub n: u64,
    pub threshold_constant: f64,
    /// Disjoint intervals; one crossing `x = 0` is reported with `hi > 1`.
    pub intervals: Vec<(f64, f64)>,
    pub total_measure: f64,
}

impl LevelSetReport {
    /// CSV with columns `lo,hi,width`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("lo,hi,width\n");
        for (lo, hi) in &self.intervals {
            s.push_str(&format!("{lo:e},{hi:e},{:e}\n", hi - lo));
        }
        s
    }
}

/// Merges the cells (half-way to each neighbour) of every node whose certified sup
/// reaches `c N^alpha`.
pub fn level_set(profile: &MaxProfile, alpha: f64, c: f64) -> Result<LevelSetReport> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(WeylError::invalid("alpha", format!("{alpha} is outside [0, 1]")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(WeylError::invalid("c", "must be positive"));
    }
    let nf = profile.n as f64;
    let threshold = c * nf.powf(alpha);
    if profile.certificate.max_undershoot > threshold / 4.0 {
        return Err(WeylError::invalid(
            "profile",
            format!(
                "undershoot {:.3e} exceeds a quarter of the threshold {threshold:.3e}",
                profile.certificate.max_undershoot
            ),
        ));
    }
    let m = profile.len();
    let above: Vec<bool> = profile.sup_values.iter().map(|&v| v >= threshold).collect();
    let cell = |i: usize| -> (f64, f64) {
        let x = profile.x_nodes[i];
        let prev = if i == 0 { profile.x_nodes[m - 1] - 1.0 } else { profile.x_nodes[i - 1] };
        let next = if i + 1 == m { profile.x_nodes[0] + 1.0 } else { profile.x_nodes[i + 1] };
        (0.5 * (prev + x), 0.5 * (x + next))
    };
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    if m > 0 && above.iter().all(|&a| a) {
        intervals.push((0.0, 1.0));
    } else if m > 0 {
        // start the walk just after a node below threshold so no run is split at the seam
        let start = above.iter().position(|&a| !a).expect("some node below");
        let mut current: Option<(f64, f64)> = None;
        for step in 1..=m {
            let i = (start + step) % m;
            let wrapped = start + step >= m;
            if above[i] {
                let (mut lo, mut hi) = cell(i);
                if wrapped {
                    lo += 1.0;
                    hi += 1.0;
                }
                current = Some(match current {
                    Some((a, _)) => (a, hi),
                    None => (lo, hi),
                });
            } else if let Some(iv) = current.take() {
                intervals.push(iv);
            }
        }
        if let Some(iv) = current {
            intervals.push(iv);
        }
        for iv in intervals.iter_mut() {
            if iv.0 >= 1.0 {
                iv.0 -= 1.0;
                iv.1 -= 1.0;
            }
            if iv.0 < 0.0 {
                iv.0 += 1.0;
                iv.1 += 1.0;
            }
        }
        intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    let total_measure = intervals.iter().map(|(a, b)| b - a).sum();
    Ok(LevelSetReport {
        alpha,
        n: profile.n,
        threshold_constant: c,
        intervals,
        total_measure,
    })
}

/// Rectangles whose witness time has approximant `a/q`.
pub fn rects_with_approximant<'a>(part: &'a QPartition, coll: &'a OneDimCollection, r: Rational) -> Vec<&'a Rect> {
    coll.rects
        .iter()
        .zip(&part.classifications)
        .filter(|(_, c)| c.passes_lemma && c.approximant == r)
        .map(|(rect, _)| rect)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::GridSpec;
    use crate::maximal::{MaxProfile, ResolutionCertificate};

    fn cert() -> ResolutionCertificate {
        ResolutionCertificate {
            t_spacing: 0.0,
            lipschitz_bound: 0.0,
            curvature_bound: 0.0,
            max_undershoot: 0.0,
            target: 0.0,
            refined: true,
            evaluations: 0,
        }
    }

    fn profile(n: u64, values: &[f64]) -> MaxProfile {
        let m = values.len();
        let rows = values
            .iter()
            .enumerate()
            .map(|(i, &v)| (i as f64 / m as f64, v, 0.25, 0.0))
            .collect();
        MaxProfile::from_parts(n, 1e-2, GridSpec::uniform(m), rows, cert())
    }

    fn rect(scale: WeylScale, lo: f64, hi: f64, t: f64) -> Rect {
        Rect {
            x_interval: (lo, hi),
            t_interval: (t, t + 1e-6),
            scale,
            witness: Witness { x: lo, t, value: 1.0 },
        }
    }

    #[test]
    fn tiles_are_dyadic_and_close() {
        let s = WeylScale::with_default_eta(256, 0.75).unwrap();
        let (w, h) = tile_dims(&s);
        let ew = 256f64.powf(-2.0 + 0.75 - 1e-3);
        assert!(w / ew < 2.0 && ew / w < 2.0);
        assert_eq!(w.log2().fract(), 0.0);
        assert_eq!(h.log2().fract(), 0.0);
    }

    #[test]
    fn sweep_examples() {
        let s = WeylScale::with_default_eta(64, 0.9).unwrap();
        let empty = OneDimCollection { rects: vec![], scale: s };
        assert!(verify_one_dimensional(&empty).ok);
        let three = OneDimCollection {
            rects: vec![rect(s, 0.1, 0.2, 0.0); 3],
            scale: s,
        };
        let chk = verify_one_dimensional(&three);
        assert!(!chk.ok);
        assert!((chk.witness.unwrap() - 0.15).abs() < 1e-15);
        let touching = OneDimCollection {
            rects: vec![rect(s, 0.1, 0.2, 0.0), rect(s, 0.2, 0.3, 0.0)],
            scale: s,
        };
        assert!(verify_one_dimensional(&touching).ok);
        let point = OneDimCollection {
            rects: vec![rect(s, 0.1, 0.2, 0.0), rect(s, 0.2, 0.3, 0.0), rect(s, 0.2, 0.25, 0.0)],
            scale: s,
        };
        let chk = verify_one_dimensional(&point);
        assert_eq!(chk.witness, Some(0.2));
    }

    #[test]
    fn partition_examples() {
        let s = WeylScale::with_default_eta(256, 0.75).unwrap();
        let coll = OneDimCollection {
            rects: vec![rect(s, 0.0, 0.01, 0.0), rect(s, 0.5, 0.51, 0.5 + 1e-9)],
            scale: s,
        };
        let p = partition_by_q(&coll, 0.05, 1.0).unwrap();
        assert_eq!(p.classes[&1].len(), 1);
        assert_eq!(p.classes[&2].len(), 1);
        assert!(p.unassigned.is_empty());
        let golden = OneDimCollection {
            rects: vec![rect(s, 0.0, 0.01, (5f64.sqrt() - 1.0) / 2.0)],
            scale: WeylScale::with_default_eta(256, 1.0).unwrap(),
        };
        let mut g = golden.clone();
        g.rects[0].scale = golden.scale;
        let p = partition_by_q(&g, 0.05, 1.0).unwrap();
        assert_eq!(p.unassigned.len(), 1);
    }

    #[test]
    fn collection_from_profile() {
        let p = profile(64, &[64.0, 10.0, 30.0, 12.0, 9.0, 8.0, 40.0, 63.0]);
        let c = build_collection(&p, 1.0).unwrap();
        assert_eq!(c.rects.len(), 1);
        assert!(c.rects[0].x_interval.0 <= 0.0 && c.rects[0].x_interval.1 > 0.0);
        let c = build_collection(&p, 0.8).unwrap();
        assert_eq!(c.rects.len(), 4);
        assert!(verify_one_dimensional(&c).ok);
        assert_eq!(count_vs_bound(&c, 0.0).unwrap().count, 4);
    }

    #[test]
    fn level_set_merges_across_zero() {
        let p = profile(16, &[16.0, 1.0, 1.0, 9.0, 9.0, 1.0, 1.0, 15.0]);
        let r = level_set(&p, 0.75, 1.0).unwrap();
        assert_eq!(r.intervals.len(), 2);
        assert!((r.total_measure - 0.5).abs() < 1e-12);
        assert!(r.intervals.iter().any(|&(lo, hi)| lo < 1.0 && hi > 1.0));
        let r1 = level_set(&p, 1.0, 1.0).unwrap();
        assert!((r1.total_measure - 0.125).abs() < 1e-12);
        let all = profile(4, &[4.0; 4]);
        assert_eq!(level_set(&all, 0.5, 1.0).unwrap().intervals, vec![(0.0, 1.0)]);
    }
}
