use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use dynclust::approx::bicriteria_init;
use dynclust::{Clusterer, CoresetConfig, CostParams, Metric, MrTree, Objective};
use dynclust_bench::blob_points;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params() -> CostParams {
    CostParams::new(3, Objective::KMeans, 0.2).with_seed(1)
}

fn loaded(n: usize) -> Clusterer {
    let mut c = Clusterer::new(params(), Metric::euclidean(2)).unwrap();
    for p in blob_points(n, 2, 4, 0, 7) {
        c.insert(p.loc, 1.0).unwrap();
    }
    c
}

fn bicriteria(c: &mut Criterion) {
    let metric = Metric::euclidean(2);
    let mut group = c.benchmark_group("bicriteria_init");
    for n in [500, 2000] {
        let points = blob_points(n, 2, 4, 0, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, points| {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            b.iter(|| bicriteria_init(points, &metric, 3, Objective::KMeans, &mut rng).unwrap());
        });
    }
    group.finish();
}

fn build(c: &mut Criterion) {
    let metric = Metric::euclidean(2);
    let mut group = c.benchmark_group("tree_build");
    group.sample_size(10);
    for n in [1000, 4000] {
        let points = blob_points(n, 2, 4, 0, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &points, |b, points| {
            b.iter_batched(
                || points.clone(),
                |points| {
                    MrTree::build(points, &params(), &CoresetConfig::default(), &metric).unwrap()
                },
                BatchSize::LargeInput,
            );
        });
    }
    group.finish();
}

fn updates(c: &mut Criterion) {
    let mut group = c.benchmark_group("insert_delete");
    group.sample_size(20);
    for n in [1000, 4000] {
        let mut engine = loaded(n);
        let extra = blob_points(1, 2, 4, 0, 3).pop().unwrap();
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| {
                let id = engine.insert(extra.loc.clone(), 1.0).unwrap();
                engine.delete(id).unwrap();
            });
        });
    }
    group.finish();
}

fn query(c: &mut Criterion) {
    let mut group = c.benchmark_group("query");
    for n in [1000, 4000] {
        let mut engine = loaded(n);
        group.bench_function(BenchmarkId::from_parameter(n), |b| {
            b.iter(|| engine.query(None).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bicriteria, build, updates, query);
criterion_main!(benches);
