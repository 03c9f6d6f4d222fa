use super::*;
use crate::coreset::Coreset;
use crate::types::{point_cost, set_cost, Location};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn blobs(n: usize, centers: &[(f64, f64)], spread: f64, seed: u64) -> Vec<WeightedPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread).unwrap();
    (0..n)
        .map(|i| {
            let (cx, cy) = centers[i % centers.len()];
            WeightedPoint::unit(
                i as u64,
                vec![cx + noise.sample(&mut rng), cy + noise.sample(&mut rng)],
            )
        })
        .collect()
}

fn open(points: Vec<WeightedPoint>, k: usize, config: &CoresetConfig, seed: u64) -> EpochState {
    let params = CostParams::new(k, Objective::KMeans, 0.2);
    let mut ids = SyntheticIds::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    EpochState::init(
        points,
        &params,
        config,
        &Metric::euclidean(2),
        &mut ids,
        &mut rng,
    )
    .unwrap()
}

fn loose(sample: usize, cutoff: usize) -> CoresetConfig {
    CoresetConfig {
        strict: false,
        ..CoresetConfig::calibrated(sample, cutoff)
    }
}

#[test]
fn weight_classes() {
    assert_eq!(weight_class(1.0), 0);
    assert_eq!(weight_class(1.999), 0);
    assert_eq!(weight_class(2.0), 1);
    assert_eq!(weight_class(1024.0), 10);
    assert_eq!(weight_class(1023.9), 9);
}

#[test]
fn ring_indices() {
    assert_eq!(ring_index(1.0, 1.0), 1);
    assert_eq!(ring_index(1.99, 1.0), 1);
    assert_eq!(ring_index(2.0, 1.0), 2);
    assert_eq!(ring_index(7.9, 1.0), 3);
    assert_eq!(ring_index(8.0, 1.0), 4);
}

#[test]
fn default_sizes_keep_everything_at_small_n() {
    let pts = blobs(400, &[(0.0, 0.0), (50.0, 0.0)], 1.0, 1);
    let e = open(pts.clone(), 2, &CoresetConfig::default(), 7);
    e.check_invariants().unwrap();
    assert_eq!(e.init_report().large_groups(), 0);
    // every non-close point is stored verbatim, so the coreset cost is exact
    // on any center set
    let centers = [
        Location::coords(vec![3.0, 1.0]),
        Location::coords(vec![40.0, -2.0]),
    ];
    let c = e.extract();
    let exact = set_cost(&pts, &centers, &Metric::euclidean(2), Objective::KMeans).unwrap();
    let approx = c
        .cost(&centers, &Metric::euclidean(2), Objective::KMeans)
        .unwrap();
    assert!((approx - exact).abs() <= 0.2 * exact, "{approx} vs {exact}");
    assert!((c.total_weight() - 400.0).abs() < 1e-9);
}

#[test]
fn expensive_points_are_the_top_k() {
    let mut pts = blobs(200, &[(0.0, 0.0)], 1.0, 2);
    pts.push(WeightedPoint::unit(1000, vec![500.0, 500.0]));
    let e = open(pts.clone(), 1, &CoresetConfig::default(), 3);
    let sol = e.solution();
    let mut costs: Vec<(f64, PointId)> = pts
        .iter()
        .map(|p| {
            let (c, _) =
                point_cost(p, &sol.centers, &Metric::euclidean(2), Objective::KMeans).unwrap();
            (c, p.id)
        })
        .collect();
    costs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let top: BTreeSet<PointId> = costs.iter().take(1).map(|c| c.1).collect();
    assert_eq!(e.expensive(), &top);
}

#[test]
fn delta_is_mean_cost_without_expensive_points() {
    let pts = blobs(300, &[(0.0, 0.0), (20.0, 20.0)], 2.0, 4);
    let e = open(pts.clone(), 2, &CoresetConfig::default(), 5);
    let sol = e.solution();
    let rest: Vec<f64> = pts
        .iter()
        .filter(|p| !e.expensive().contains(&p.id))
        .map(|p| {
            point_cost(p, &sol.centers, &Metric::euclidean(2), Objective::KMeans)
                .unwrap()
                .0
        })
        .collect();
    let mean = rest.iter().sum::<f64>() / rest.len() as f64;
    assert!((e.delta() - mean).abs() <= 1e-9 * mean);
}

#[test]
fn close_centers_carry_ring_weight() {
    let pts = blobs(500, &[(0.0, 0.0), (30.0, 0.0)], 1.0, 6);
    let e = open(pts, 2, &CoresetConfig::default(), 8);
    let c = e.extract();
    for (i, members) in e.close_members().iter().enumerate() {
        let entry = c
            .entries
            .iter()
            .find(|x| x.provenance == Provenance::CloseCenter(i));
        match entry {
            None => assert!(members.is_empty()),
            Some(x) => {
                assert_eq!(x.weight(), members.len() as f64);
                assert_eq!(x.point.loc, e.solution().centers[i]);
            }
        }
    }
}

#[test]
fn budget_exhaustion_needs_new_epoch() {
    let pts = blobs(100, &[(0.0, 0.0)], 1.0, 9);
    let mut e = open(pts, 2, &CoresetConfig::default(), 1);
    e.delete(PointId(0)).unwrap();
    e.insert(WeightedPoint::unit(500, vec![1.0, 1.0])).unwrap();
    let before = e.extract();
    assert_eq!(e.delete(PointId(1)), Err(Error::NeedsNewEpoch));
    assert_eq!(
        e.insert(WeightedPoint::unit(501, vec![0.0, 0.0])),
        Err(Error::NeedsNewEpoch)
    );
    assert_eq!(e.extract(), before);
    assert!(e.contains(PointId(1)));
}

#[test]
fn unknown_and_duplicate_ids_are_rejected() {
    let pts = blobs(50, &[(0.0, 0.0)], 1.0, 10);
    let mut e = open(pts, 3, &CoresetConfig::default(), 1);
    assert_eq!(e.delete(PointId(999)), Err(Error::UnknownId(PointId(999))));
    assert_eq!(
        e.insert(WeightedPoint::unit(3, vec![0.0, 0.0])),
        Err(Error::DuplicateId(PointId(3)))
    );
    assert_eq!(e.budget_used(), 0);
}

#[test]
fn insertion_enters_coreset_verbatim() {
    let pts = blobs(80, &[(0.0, 0.0)], 1.0, 11);
    let mut e = open(pts, 2, &CoresetConfig::default(), 2);
    let p = WeightedPoint::new(700, vec![4.0, 4.0], 3.0);
    let d = e.insert(p.clone()).unwrap();
    assert!(d.deleted.is_empty());
    assert_eq!(d.inserted, vec![CoresetEntry::new(p, Provenance::Inserted)]);
    let d = e.delete(PointId(700)).unwrap();
    assert_eq!(d.deleted, vec![PointId(700)]);
    assert!(d.inserted.is_empty());
    assert!(e.inserted().is_empty());
    assert!(e.deleted().is_empty());
}

#[test]
fn apply_checks_budget_before_touching_state() {
    let pts = blobs(80, &[(0.0, 0.0)], 1.0, 12);
    let mut e = open(pts, 2, &CoresetConfig::default(), 2);
    let delta = CoresetDelta {
        deleted: vec![PointId(1), PointId(2)],
        inserted: vec![CoresetEntry::new(
            WeightedPoint::unit(900, vec![0.0, 0.0]),
            Provenance::Leaf,
        )],
    };
    assert_eq!(e.apply(&delta), Err(Error::NeedsNewEpoch));
    assert_eq!(e.budget_used(), 0);
    assert_eq!(e.len(), 80);
}

#[test]
fn apply_allows_reinserting_a_deleted_id() {
    let pts = blobs(80, &[(0.0, 0.0)], 1.0, 13);
    let mut e = open(pts, 4, &CoresetConfig::default(), 2);
    let delta = CoresetDelta {
        deleted: vec![PointId(5)],
        inserted: vec![CoresetEntry::new(
            WeightedPoint::new(5, vec![9.0, 9.0], 2.0),
            Provenance::Small,
        )],
    };
    e.apply(&delta).unwrap();
    e.check_invariants().unwrap();
    assert_eq!(e.budget_used(), 2);
    assert!(e.inserted().contains(&PointId(5)));
}

#[test]
fn sampled_weights_scale_to_group_mass() {
    let pts = blobs(3000, &[(0.0, 0.0), (40.0, 0.0)], 1.0, 14);
    let e = open(pts, 2, &loose(60, 100), 15);
    e.check_invariants().unwrap();
    let keys = e.large_group_keys();
    assert!(!keys.is_empty());
    let c = e.extract();
    for gk in keys {
        let members = e.group_members(gk).unwrap();
        let mass: f64 = members.iter().map(|p| p.weight).sum();
        let sampled: Vec<&CoresetEntry> = c
            .entries
            .iter()
            .filter(|x| {
                x.provenance
                    == Provenance::Sampled {
                        j: gk.j,
                        b: gk.b,
                        w: gk.w,
                    }
            })
            .collect();
        assert_eq!(sampled.len(), 60.min(members.len()));
        // unit weights: the sample's weight equals the group size exactly
        let w: f64 = sampled.iter().map(|x| x.weight()).sum();
        assert!((w - mass).abs() < 1e-6 * mass);
    }
}

#[test]
fn property_report_agrees_with_checker() {
    let pts = blobs(3000, &[(0.0, 0.0), (40.0, 0.0), (0.0, 40.0)], 1.5, 16);
    let e = open(pts, 3, &loose(40, 80), 17);
    let report = e.init_report();
    let metric = Metric::euclidean(2);
    for gk in e.large_group_keys() {
        let norm = 2f64.powi(gk.w as i32);
        let members: Vec<WeightedPoint> = e
            .group_members(gk)
            .unwrap()
            .iter()
            .map(|p| p.with_weight(p.weight / norm))
            .collect();
        let r = check_property(&members, &e.solution().centers, &metric, Objective::KMeans);
        let summary = report.groups.iter().find(|g| g.key == gk).unwrap();
        assert_eq!(
            summary.property_holds, r.holds,
            "{gk:?}: {:?}",
            r.violations
        );
    }
}

#[test]
fn shrinking_ring_moves_down_three_levels() {
    let pts = blobs(4000, &[(0.0, 0.0), (60.0, 0.0)], 1.0, 18);
    let mut e = open(pts, 40, &loose(10, 16), 19);
    let (rk, b, members) = e
        .rings()
        .into_iter()
        .filter(|(_, b, m)| *b >= 3 && m.len() - (1 << (b - 3)) <= 40)
        .max_by_key(|(_, b, _)| *b)
        .expect("a ring that can shrink within budget");
    let target = 1usize << (b - 3);
    for id in &members[..members.len() - target] {
        e.delete(*id).unwrap();
        e.check_invariants().unwrap();
    }
    assert_eq!(e.churn().ring_moves, 1);
    let dst = GroupKey {
        j: rk.j,
        b: b - 3,
        w: rk.w,
    };
    match e.rings().into_iter().find(|(k, _, _)| *k == rk) {
        Some((_, nb, left)) => {
            assert_eq!(nb, b - 3);
            assert_eq!(left.len(), target);
            assert!(e.large_group_keys().contains(&dst));
        }
        None => assert!(!e.large_group_keys().contains(&dst)),
    }
}

#[test]
fn deltas_replay_to_extract() {
    let pts = blobs(2000, &[(0.0, 0.0), (25.0, 5.0)], 1.0, 20);
    let mut e = open(pts, 30, &loose(25, 40), 21);
    let mut replay = e.extract();
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for step in 0..30u64 {
        let d = if step % 3 == 0 {
            e.insert(WeightedPoint::unit(
                10_000 + step,
                vec![rng.random::<f64>() * 30.0, 0.0],
            ))
            .unwrap()
        } else {
            let live = e.live_points();
            let victim = live[rng.random_range(0..live.len())].id;
            e.delete(victim).unwrap()
        };
        replay.apply(&d);
        assert_eq!(replay, e.extract());
    }
    e.check_invariants().unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold_under_random_updates(
        seed in any::<u64>(),
        n in 200usize..1200,
        k in 1usize..25,
        sample in 5usize..40,
        ops in prop::collection::vec((any::<bool>(), any::<u32>()), 1..25),
    ) {
        let pts = blobs(n, &[(0.0, 0.0), (30.0, 0.0), (15.0, 25.0)], 2.0, seed);
        let mut e = open(pts, k, &loose(sample, 2 * sample), seed ^ 1);
        prop_assert!(e.check_invariants().is_ok());
        let mut replay: Coreset = e.extract();
        let mut next_id = 1_000_000u64;
        for (ins, r) in ops.into_iter().take(k) {
            let d = if ins {
                next_id += 1;
                e.insert(WeightedPoint::unit(next_id, vec![(r % 40) as f64, (r % 7) as f64])).unwrap()
            } else {
                let live = e.live_points();
                e.delete(live[r as usize % live.len()].id).unwrap()
            };
            replay.apply(&d);
            let check = e.check_invariants();
            prop_assert!(check.is_ok(), "{:?}", check);
        }
        prop_assert_eq!(replay, e.extract());
    }
}
