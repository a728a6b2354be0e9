use weyl_core::maximal::{maximal_grid_with, MaxGridOptions};
use weyl_core::structures::{build_collection, count_vs_bound, level_set, partition_by_q, verify_one_dimensional};

fn profile(n: u64) -> weyl_core::MaxProfile {
    let opts = MaxGridOptions {
        density: 1,
        refine_levels: 0,
        ..MaxGridOptions::default()
    };
    maximal_grid_with(n, n as usize, 0.05, &opts).unwrap()
}

#[test]
fn threshold_three_quarters_covers_a_sizable_set() {
    for n in [64u64, 256] {
        let m = level_set(&profile(n), 0.75, 1.0).unwrap().total_measure;
        assert!(m >= 0.1, "N={n}: measure {m}");
    }
}

#[test]
fn collection_round_trip() {
    let prof = profile(96);
    let coll = build_collection(&prof, 0.8).unwrap();
    assert!(!coll.rects.is_empty());
    assert!(verify_one_dimensional(&coll).ok);
    let part = partition_by_q(&coll, 0.05, 1.0).unwrap();
    let assigned: usize = part.classes.values().map(Vec::len).sum();
    assert_eq!(assigned + part.unassigned.len(), coll.rects.len());
    let count = count_vs_bound(&coll, 0.1).unwrap();
    assert_eq!(count.count, coll.rects.len());
    assert!((count.ratio - count.count as f64 / count.bound).abs() < 1e-12);
}
