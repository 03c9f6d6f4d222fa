//! Dynamic engine against recompute-from-scratch baselines.
//!
//! Three strategies replay the same stream:
//!
//! * `dynamic`: the [`Clusterer`].
//! * `static_solve`: no maintenance; each query solves on the full live set.
//! * `static_coreset`: rebuilds a merge-and-reduce coreset from scratch after
//!   every update and solves on it at each query.
//!
//! Work is counted in primitive operations; quality is the cost of each
//! strategy's centers on the full live set.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{query_solve, solve_points, QueryOptions};
use crate::clusterer::Clusterer;
use crate::error::{Error, Result};
use crate::ops;
use crate::replay::{location_for, RunConfig};
use crate::stream::{Located, StreamOp};
use crate::tree::MrTree;
use crate::types::{set_cost, PointId, WeightedPoint};

/// Updates timed before the projected baseline runtime is trusted.
const PROJECTION_WARMUP: usize = 8;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StrategyReport {
    pub name: &'static str,
    pub update_ops: u64,
    pub query_ops: u64,
    pub update_nanos: u64,
    pub query_nanos: u64,
    /// Exact cost of this strategy's centers, one per query.
    pub costs: Vec<f64>,
    /// Why the strategy was abandoned, if it was.
    pub skipped: Option<String>,
}

impl StrategyReport {
    fn new(name: &'static str) -> Self {
        StrategyReport {
            name,
            ..Default::default()
        }
    }

    pub fn completed(&self) -> bool {
        self.skipped.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompareReport {
    pub updates: usize,
    pub queries: usize,
    pub dynamic: StrategyReport,
    pub static_solve: StrategyReport,
    pub static_coreset: StrategyReport,
    /// `static_coreset` update work over `dynamic` update work.
    pub update_work_ratio: Option<f64>,
    /// Median over queries of dynamic cost over `static_solve` cost.
    pub median_quality_ratio: Option<f64>,
    /// Largest per-query ratio of dynamic cost over `static_solve` cost.
    pub worst_quality_ratio: Option<f64>,
}

/// Median of a nonempty slice; `None` if empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    })
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            1.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn query_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ba5e)
}

/// Replays `ops` under all three strategies. The `static_coreset` baseline is
/// dropped once its projected total runtime exceeds `baseline_cap`.
pub fn bench_compare(
    ops: &[Located],
    config: &RunConfig,
    baseline_cap: Duration,
) -> Result<CompareReport> {
    let params = &config.params;
    let metric = &config.metric;
    let mut engine =
        Clusterer::with_config(params.clone(), metric.clone(), config.coreset.clone())?;
    let query_options = QueryOptions::default();
    let total_updates = ops
        .iter()
        .filter(|l| !matches!(l.op, StreamOp::Query { .. }))
        .count();

    let mut dynamic = StrategyReport::new("dynamic");
    let mut static_solve = StrategyReport::new("static_solve");
    let mut static_coreset = StrategyReport::new("static_coreset");
    if baseline_cap.is_zero() {
        static_coreset.skipped = Some("baseline cap is zero".into());
    }

    let mut ids: BTreeMap<u64, PointId> = BTreeMap::new();
    let mut live: BTreeMap<PointId, WeightedPoint> = BTreeMap::new();
    let mut rebuilt: Option<MrTree> = None;
    let mut updates = 0;
    let mut baseline_time = Duration::ZERO;
    let mut queries = 0;

    for (index, located) in ops.iter().enumerate() {
        let at = |e: Error| Error::AtOp {
            index,
            line: located.line,
            source: Box::new(e),
        };
        match &located.op {
            StreamOp::Insert { .. } | StreamOp::Delete { .. } => {
                let started = Instant::now();
                let (res, spent) = ops::measure(|| -> Result<()> {
                    match &located.op {
                        StreamOp::Insert { id, coords } => {
                            let loc = location_for(metric, coords)?;
                            let assigned = engine.insert(loc.clone(), 1.0)?;
                            ids.insert(*id, assigned);
                            live.insert(
                                assigned,
                                WeightedPoint {
                                    id: assigned,
                                    loc,
                                    weight: 1.0,
                                },
                            );
                        }
                        StreamOp::Delete { id } => {
                            let assigned = ids.remove(id).ok_or(Error::UnknownId(PointId(*id)))?;
                            engine.delete(assigned)?;
                            live.remove(&assigned);
                        }
                        StreamOp::Query { .. } => unreachable!(),
                    }
                    Ok(())
                });
                res.map_err(at)?;
                dynamic.update_ops += spent;
                dynamic.update_nanos += started.elapsed().as_nanos() as u64;
                updates += 1;

                if static_coreset.completed() {
                    let started = Instant::now();
                    let points: Vec<WeightedPoint> = live.values().cloned().collect();
                    let (tree, spent) =
                        ops::measure(|| MrTree::build(points, params, &config.coreset, metric));
                    rebuilt = Some(tree.map_err(at)?);
                    let elapsed = started.elapsed();
                    baseline_time += elapsed;
                    static_coreset.update_ops += spent;
                    static_coreset.update_nanos += elapsed.as_nanos() as u64;
                    let projected =
                        baseline_time.as_secs_f64() / updates as f64 * total_updates as f64;
                    if updates >= PROJECTION_WARMUP && projected > baseline_cap.as_secs_f64() {
                        static_coreset.skipped = Some(format!(
                            "projected runtime {projected:.1}s exceeds cap {:.1}s",
                            baseline_cap.as_secs_f64()
                        ));
                        static_coreset.costs.clear();
                        rebuilt = None;
                    }
                }
            }
            StreamOp::Query { k } => {
                if live.is_empty() {
                    return Err(at(Error::EmptyDataset));
                }
                queries += 1;
                let points: Vec<WeightedPoint> = live.values().cloned().collect();

                let started = Instant::now();
                let (res, spent) = ops::measure(|| engine.query(Some(*k)));
                let q = res.map_err(at)?;
                dynamic.query_ops += spent;
                dynamic.query_nanos += started.elapsed().as_nanos() as u64;
                dynamic
                    .costs
                    .push(set_cost(&points, q.centers(), metric, params.z).map_err(at)?);

                let started = Instant::now();
                let mut rng = query_rng(params.seed);
                let (res, spent) = ops::measure(|| {
                    solve_points(&points, metric, *k, params.z, &query_options, &mut rng)
                });
                let sol = res.map_err(at)?;
                static_solve.query_ops += spent;
                static_solve.query_nanos += started.elapsed().as_nanos() as u64;
                static_solve.costs.push(sol.total_cost);

                if let Some(tree) = rebuilt.as_ref().filter(|_| static_coreset.completed()) {
                    let started = Instant::now();
                    let mut rng = query_rng(params.seed);
                    let coreset = tree.root_coreset();
                    let (res, spent) = ops::measure(|| {
                        query_solve(&coreset, metric, *k, params.z, &query_options, &mut rng)
                    });
                    let sol = res.map_err(at)?;
                    static_coreset.query_ops += spent;
                    static_coreset.query_nanos += started.elapsed().as_nanos() as u64;
                    static_coreset
                        .costs
                        .push(set_cost(&points, &sol.centers, metric, params.z).map_err(at)?);
                }
            }
        }
    }

    let update_work_ratio = static_coreset
        .completed()
        .then(|| ratio(static_coreset.update_ops as f64, dynamic.update_ops as f64));
    let per_query: Vec<f64> = dynamic
        .costs
        .iter()
        .zip(&static_solve.costs)
        .map(|(d, s)| ratio(*d, *s))
        .collect();
    let worst_quality_ratio = per_query.iter().copied().reduce(f64::max);
    Ok(CompareReport {
        updates,
        queries,
        median_quality_ratio: median(&per_query),
        worst_quality_ratio,
        update_work_ratio,
        dynamic,
        static_solve,
        static_coreset,
    })
}
