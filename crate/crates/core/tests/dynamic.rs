use std::time::Duration;

use dynclust::oracle::distortion;
use dynclust::{
    bench_compare, gen_workload, Clusterer, CoresetConfig, CostParams, Located, Metric, MrTree,
    Objective, PointId, Profile, RunConfig, StreamOp, WeightedPoint, WorkloadSpec,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 0.2;

fn blobs(n: usize, first_id: u64, rng: &mut ChaCha8Rng) -> Vec<WeightedPoint> {
    let centers: Vec<[f64; 2]> = (0..4)
        .map(|_| [rng.random::<f64>() * 100.0, rng.random::<f64>() * 100.0])
        .collect();
    (0..n)
        .map(|i| {
            let c = centers[rng.random_range(0..4)];
            WeightedPoint::unit(
                first_id + i as u64,
                [
                    c[0] + rng.random::<f64>() * 6.0 - 3.0,
                    c[1] + rng.random::<f64>() * 6.0 - 3.0,
                ],
            )
        })
        .collect()
}

fn params(seed: u64) -> CostParams {
    CostParams::new(3, Objective::KMeans, EPS).with_seed(seed)
}

fn max_error(tree: &MrTree, rng: &mut ChaCha8Rng) -> f64 {
    let points = tree.live_points();
    distortion(
        &points,
        &tree.root_coreset(),
        tree.metric(),
        3,
        Objective::KMeans,
        200,
        rng,
    )
    .unwrap()
    .max_rel_err
}

fn located(ops: Vec<StreamOp>) -> Vec<Located> {
    ops.into_iter()
        .enumerate()
        .map(|(i, op)| Located { line: i + 1, op })
        .collect()
}

#[test]
fn built_tree_preserves_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let points = blobs(4000, 0, &mut rng);
    let tree = MrTree::build(
        points,
        &params(1),
        &CoresetConfig::default(),
        &Metric::euclidean(2),
    )
    .unwrap();
    tree.check_invariants().unwrap();
    let err = max_error(&tree, &mut rng);
    assert!(err <= EPS, "max relative error {err}");
}

#[test]
fn every_node_holds_an_epoch_over_its_children() {
    for n in [1, 3, 12, 700] {
        let mut rng = ChaCha8Rng::seed_from_u64(n as u64);
        let tree = MrTree::build(
            blobs(n, 0, &mut rng),
            &params(2),
            &CoresetConfig::default(),
            &Metric::euclidean(2),
        )
        .unwrap();
        tree.check_invariants().unwrap();
        assert_eq!(tree.len(), n);
    }
}

#[test]
fn half_deleted_tree_preserves_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let points = blobs(4000, 0, &mut rng);
    let mut ids: Vec<PointId> = points.iter().map(|p| p.id).collect();
    let mut tree = MrTree::build(
        points,
        &params(3),
        &CoresetConfig::default(),
        &Metric::euclidean(2),
    )
    .unwrap();
    ids.shuffle(&mut rng);
    for id in &ids[..2000] {
        tree.delete(*id).unwrap();
    }
    tree.check_invariants().unwrap();
    assert_eq!(tree.len(), 2000);
    let err = max_error(&tree, &mut rng);
    assert!(err <= EPS, "max relative error {err}");
}

#[test]
fn growth_past_band_rebuilds_and_preserves_costs() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut tree = MrTree::build(
        blobs(500, 0, &mut rng),
        &params(5),
        &CoresetConfig::default(),
        &Metric::euclidean(2),
    )
    .unwrap();
    let (_, upper) = tree.band();
    for p in blobs(upper + 10 - 500, 10_000, &mut rng) {
        tree.insert(p).unwrap();
    }
    assert!(tree.rebuilds() >= 1);
    tree.check_invariants().unwrap();
    let err = max_error(&tree, &mut rng);
    assert!(err <= EPS, "max relative error {err}");
}

#[test]
fn blob_deletion_lowers_the_next_query_cost() {
    for seed in 0..3 {
        let spec = WorkloadSpec {
            profile: Profile::BlobChurn { blobs: 3 },
            n: 1500,
            dim: 2,
            k: 3,
            query_every: None,
            seed,
        };
        let mut c = Clusterer::new(params(seed), Metric::euclidean(2)).unwrap();
        let mut ids = std::collections::HashMap::new();
        let mut costs = Vec::new();
        for op in gen_workload(&spec).unwrap() {
            match op {
                StreamOp::Insert { id, coords } => {
                    ids.insert(id, c.insert_coords(coords).unwrap());
                }
                StreamOp::Delete { id } => c.delete(ids.remove(&id).unwrap()).unwrap(),
                StreamOp::Query { k } => costs.push(c.query(Some(k)).unwrap().estimated_cost),
            }
        }
        assert_eq!(costs.len(), 4);
        for pair in costs.chunks(2) {
            assert!(pair[1] < pair[0], "seed {seed}: {costs:?}");
        }
    }
}

#[test]
fn deletion_heavy_quality_near_static_median() {
    let spec = WorkloadSpec {
        profile: Profile::RandomMix { p_delete: 0.45 },
        n: 3000,
        dim: 2,
        k: 3,
        query_every: Some(500),
        seed: 9,
    };
    let ops = located(gen_workload(&spec).unwrap());
    let config = RunConfig {
        timing: false,
        ..RunConfig::new(params(9), Metric::euclidean(2))
    };
    let report = bench_compare(&ops, &config, Duration::ZERO).unwrap();
    assert!(report.queries >= 5);
    let median = report.median_quality_ratio.unwrap();
    assert!(median <= 1.5, "median of dynamic over static {median}");
    let worst = report.worst_quality_ratio.unwrap();
    assert!(worst <= 1.5, "worst dynamic over static {worst}");
}

#[test]
fn dynamic_update_work_beats_rebuilding() {
    let spec = WorkloadSpec {
        profile: Profile::InsertOnly,
        n: 1000,
        dim: 2,
        k: 3,
        query_every: Some(500),
        seed: 10,
    };
    let ops = located(gen_workload(&spec).unwrap());
    let config = RunConfig {
        timing: false,
        ..RunConfig::new(params(10), Metric::euclidean(2))
    };
    let report = bench_compare(&ops, &config, Duration::from_secs(3600)).unwrap();
    assert!(report.static_coreset.completed());
    let ratio = report.update_work_ratio.unwrap();
    assert!(ratio >= 10.0, "rebuild work over dynamic work {ratio}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn query_estimate_within_epsilon_of_exact(seed in 0u64..1000, n in 50usize..400, deletes in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = Clusterer::new(params(seed), Metric::euclidean(2)).unwrap();
        let mut ids = Vec::new();
        for p in blobs(n, 0, &mut rng) {
            ids.push(c.insert(p.loc, 1.0).unwrap());
        }
        ids.shuffle(&mut rng);
        for id in ids.iter().take(deletes) {
            c.delete(*id).unwrap();
        }
        let q = c.query_exact(None).unwrap();
        let exact = q.exact_cost.unwrap();
        prop_assert!((q.estimated_cost - exact).abs() <= EPS * exact + 1e-6, "{} vs {exact}", q.estimated_cost);
    }
}
