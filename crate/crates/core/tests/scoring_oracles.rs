mod common;

use graphkb::score::{select_patterns, PatternStats, DEFAULT_THRESHOLD};
use graphkb::PatternKey;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

fn build(f: &StatsFixture) -> PatternStats {
    let mut stats = PatternStats::new(f.sizes.clone());
    for ((r, key), &c) in &f.counts {
        stats
            .record(r, key.parse::<PatternKey>().unwrap(), f.lengths[key], c)
            .unwrap();
    }
    stats
}

#[test]
fn two_relation_scenario() {
    let a = chain_pattern("r1", &[], "x").canonicalize();
    let b = chain_pattern("r1", &["w"], "y").canonicalize();
    let mut stats = PatternStats::new([("r1".to_string(), 4), ("r2".to_string(), 9)].into());
    stats.record("r1", a.clone(), 1, 2).unwrap();
    stats.record("r2", a.clone(), 1, 3).unwrap();
    stats.record("r1", b.clone(), 2, 2).unwrap();
    assert!((stats.uniqueness(&a, "r1") - 0.5).abs() < 1e-9);
    let scored = stats.plausibility("r1");
    let p = |k: &PatternKey| scored.iter().find(|s| &s.key == k).unwrap().plausibility;
    assert!((p(&a) - 0.2).abs() < 1e-9);
    assert!((p(&b) - 0.8).abs() < 1e-9);
}

#[test]
fn randomized_fixtures_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..100 {
        let f = random_stats_fixture(&mut rng);
        let stats = build(&f);
        for r in f.sizes.keys() {
            let expect = f.oracle(r);
            let scored = stats.plausibility(r);
            assert_eq!(scored.len(), expect.len());
            let total: f64 = scored.iter().map(|s| s.plausibility).sum();
            assert!((total - 1.0).abs() < 1e-9);
            for s in &scored {
                assert!((s.plausibility - expect[s.key.as_str()]).abs() < 1e-12);
            }
            let selected = select_patterns(&scored, DEFAULT_THRESHOLD);
            let kept: Vec<&str> = selected.iter().map(|s| s.key.as_str()).collect();
            let mut want: Vec<(&String, f64)> = expect
                .iter()
                .filter(|(_, &p)| p > 0.05)
                .map(|(k, &p)| (k, p))
                .collect();
            want.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(y.0)));
            assert_eq!(
                kept,
                want.iter().map(|(k, _)| k.as_str()).collect::<Vec<_>>()
            );
        }
    }
}

#[test]
fn threshold_is_strict() {
    let a = chain_pattern("R", &[], "x").canonicalize();
    let mut stats = PatternStats::new([("R".to_string(), 1)].into());
    stats.record("R", a, 1, 1).unwrap();
    let scored = stats.plausibility("R");
    assert_eq!(select_patterns(&scored, 1.0).len(), 0);
    assert_eq!(select_patterns(&scored, 0.999).len(), 1);
}

proptest! {
    #[test]
    fn merge_matches_single_stream(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_stats_fixture(&mut rng);
        let whole = build(&f);
        let mut left = PatternStats::new(f.sizes.clone());
        let mut right = PatternStats::new(f.sizes.clone());
        for (i, ((r, key), &c)) in f.counts.iter().enumerate() {
            let target = if i % 2 == 0 { &mut left } else { &mut right };
            target.record(r, key.parse().unwrap(), f.lengths[key], c).unwrap();
        }
        right.merge(left).unwrap();
        for r in f.sizes.keys() {
            prop_assert_eq!(right.plausibility(r), whole.plausibility(r));
        }
    }

    #[test]
    fn uniqueness_is_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_stats_fixture(&mut rng);
        let stats = build(&f);
        for (r, key) in f.counts.keys() {
            let u = stats.uniqueness(&key.parse().unwrap(), r);
            prop_assert!(u > 0.0 && u <= 1.0);
            let shared = f.counts.keys().any(|(r2, k2)| k2 == key && r2 != r);
            prop_assert_eq!(u == 1.0, !shared);
        }
    }
}
