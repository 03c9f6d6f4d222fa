use super::*;
use crate::types::Objective;
use proptest::prelude::*;
use rand::Rng;

fn pts(n: usize, seed: u64) -> Vec<WeightedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = (i % 3) as f64 * 20.0;
            WeightedPoint::unit(i as u64, vec![c + rng.random::<f64>(), rng.random::<f64>()])
        })
        .collect()
}

fn params(k: usize) -> CostParams {
    CostParams::new(k, Objective::KMeans, 0.2).with_seed(5)
}

fn build(n: usize, k: usize) -> MrTree {
    MrTree::build(
        pts(n, 1),
        &params(k),
        &CoresetConfig::default(),
        &Metric::euclidean(2),
    )
    .unwrap()
}

#[test]
fn few_points_make_one_leaf() {
    let t = build(3, 3);
    assert_eq!(t.height(), 0);
    assert_eq!(t.leaf_count(), 1);
    assert_eq!(t.root_coreset(), Coreset::from_points(&pts(3, 1)));
}

#[test]
fn four_full_leaves_make_height_two() {
    let t = build(12, 3);
    assert_eq!(t.leaf_count(), 4);
    assert_eq!(t.height(), 2);
    assert_eq!(t.epochs().len(), 3);
    t.check_invariants().unwrap();
}

#[test]
fn height_is_log_of_leaf_count() {
    for (n, k) in [(100, 2), (1000, 5), (37, 4)] {
        let t = build(n, k);
        let leaves = n.div_ceil(k);
        assert_eq!(t.leaf_count(), leaves);
        assert_eq!(
            t.height(),
            leaves.next_power_of_two().trailing_zeros() as usize
        );
        t.check_invariants().unwrap();
    }
}

#[test]
fn level_epsilon_splits_over_height() {
    let t = build(1000, 5);
    // band top 2000 → 400 leaves → height bound 9
    assert!((t.level_epsilon() - 0.2 / 18.0).abs() < 1e-15);
}

#[test]
fn spare_capacity_insert_sends_one_entry_per_level() {
    let mut t = build(11, 3);
    t.insert(WeightedPoint::unit(100, vec![1.0, 1.0])).unwrap();
    let s = t.stats();
    let emitted: Vec<u64> = s.levels.iter().map(|l| l.flow.emitted).collect();
    assert_eq!(emitted, vec![1, 1, 0]);
    assert_eq!(t.restarts(), 0);
    t.check_invariants().unwrap();
}

#[test]
fn budget_overflow_restarts_once() {
    let k = 3;
    let mut t = build(2 * k, k);
    assert_eq!(t.height(), 1);
    for step in 0..=k as u64 {
        if step % 2 == 0 {
            t.delete(PointId(step)).unwrap();
        } else {
            t.insert(WeightedPoint::unit(50 + step, vec![2.0, 2.0]))
                .unwrap();
        }
    }
    assert_eq!(t.restarts(), 1);
    assert_eq!(t.rebuilds(), 0);
    let events = t.drain_events();
    assert_eq!(
        events,
        vec![TreeEvent::EpochRestart {
            level: 1,
            input_size: 2 * k
        }]
    );
    t.check_invariants().unwrap();
}

#[test]
fn deleting_last_point_empties_tree() {
    let mut t = build(1, 2);
    t.delete(PointId(0)).unwrap();
    assert!(t.is_empty());
    assert!(t.root_coreset().is_empty());
    assert_eq!(t.delete(PointId(0)), Err(Error::UnknownId(PointId(0))));
}

#[test]
fn empty_tree_grows_by_insertion() {
    let mut t = MrTree::build(
        Vec::new(),
        &params(2),
        &CoresetConfig::default(),
        &Metric::euclidean(2),
    )
    .unwrap();
    assert!(t.root_coreset().is_empty());
    for p in pts(40, 3) {
        t.insert(p).unwrap();
        t.check_invariants().unwrap();
    }
    assert_eq!(t.len(), 40);
    assert!(t.rebuilds() > 0);
    assert_eq!(t.live_points(), pts(40, 3));
}

#[test]
fn singleton_root_coreset() {
    let t = build(1, 4);
    let c = t.root_coreset();
    assert_eq!(c.len(), 1);
    assert_eq!(c.entries[0].weight(), 1.0);
}

#[test]
fn duplicate_insert_rejected() {
    let mut t = build(10, 2);
    assert_eq!(
        t.insert(WeightedPoint::unit(3, vec![0.0, 0.0])),
        Err(Error::DuplicateId(PointId(3)))
    );
}

#[test]
fn rebuild_preserves_dataset() {
    let mut t = build(300, 4);
    for id in 0..50u64 {
        t.delete(PointId(id * 3)).unwrap();
    }
    let before = t.live_points();
    t.rebuild().unwrap();
    assert_eq!(t.live_points(), before);
    t.check_invariants().unwrap();
}

#[test]
fn band_exit_triggers_rebuild() {
    let mut t = build(20, 2);
    assert_eq!(t.band(), (10, 40));
    for id in 0..10u64 {
        t.delete(PointId(id)).unwrap();
    }
    assert_eq!(t.rebuilds(), 0);
    t.delete(PointId(10)).unwrap();
    assert_eq!(t.rebuilds(), 1);
    assert_eq!(t.band(), (5, 18));
}

#[test]
fn diff_ignores_provenance() {
    let p = pts(3, 2);
    let a = Coreset::from_points(&p);
    let b = Coreset::from_entries(
        p.iter()
            .map(|x| CoresetEntry::new(x.clone(), Provenance::Small))
            .collect(),
    );
    assert!(coreset_diff(&a, &b).is_empty());
    let mut c = b.clone();
    c.entries[1].point.weight = 2.0;
    let d = coreset_diff(&a, &c);
    assert_eq!(d.deleted, vec![p[1].id]);
    assert_eq!(d.inserted.len(), 1);
}

#[test]
fn stats_serialize() {
    let t = build(200, 3);
    let v: serde_json::Value = serde_json::from_str(&t.stats_json()).unwrap();
    assert_eq!(v["live"], 200);
    assert_eq!(v["levels"].as_array().unwrap().len(), t.height() + 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_updates_keep_invariants(
        n in 0usize..120,
        k in 1usize..6,
        ops in prop::collection::vec((any::<bool>(), any::<u32>()), 0..80),
        sampled in any::<bool>(),
    ) {
        let config = if sampled {
            CoresetConfig { strict: false, ..CoresetConfig::calibrated(4, 8) }
        } else {
            CoresetConfig::default()
        };
        let mut t = MrTree::build(pts(n, 9), &params(k), &config, &Metric::euclidean(2)).unwrap();
        let mut model: BTreeSet<PointId> = (0..n as u64).map(PointId).collect();
        let mut next = 10_000u64;
        for (ins, r) in ops {
            if ins || model.is_empty() {
                next += 1;
                t.insert(WeightedPoint::unit(next, vec![(r % 50) as f64, (r % 3) as f64])).unwrap();
                model.insert(PointId(next));
            } else {
                let id = *model.iter().nth(r as usize % model.len()).unwrap();
                t.delete(id).unwrap();
                model.remove(&id);
            }
            let check = t.check_invariants();
            prop_assert!(check.is_ok(), "{:?}", check);
        }
        let ids: BTreeSet<PointId> = t.live_points().iter().map(|p| p.id).collect();
        prop_assert_eq!(ids, model);
    }
}
