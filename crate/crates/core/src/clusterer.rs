//! User-facing dynamic clustering: insert, delete, query.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::approx::{query_solve, QueryOptions, Solution};
use crate::coreset::Coreset;
use crate::epoch::CoresetConfig;
use crate::error::{Error, Result};
use crate::ops;
use crate::tree::{MrTree, TreeEvent, TreeStats};
use crate::types::{set_cost, CostParams, Location, Metric, PointId, WeightedPoint};

const QUERY_STREAM: u64 = 0x71_7565_7279;

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ClustererStats {
    pub insertions: u64,
    pub deletions: u64,
    pub queries: u64,
    pub epoch_restarts: u64,
    pub rebuilds: u64,
    /// Primitive operations (distance evaluations, order-tree steps and
    /// coreset-entry changes) spent on updates.
    pub update_ops: u64,
}

impl ClustererStats {
    pub fn updates(&self) -> u64 {
        self.insertions + self.deletions
    }

    pub fn ops_per_update(&self) -> f64 {
        if self.updates() == 0 {
            0.0
        } else {
            self.update_ops as f64 / self.updates() as f64
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryResult {
    pub solution: Solution,
    pub coreset_size: usize,
    /// Cost of the returned centers on the coreset.
    pub estimated_cost: f64,
    /// Cost on the full live dataset, when requested.
    pub exact_cost: Option<f64>,
}

impl QueryResult {
    pub fn centers(&self) -> &[Location] {
        &self.solution.centers
    }
}

#[derive(Clone, Debug)]
pub struct Clusterer {
    tree: MrTree,
    params: CostParams,
    metric: Metric,
    query_options: QueryOptions,
    next_id: u64,
    stats: ClustererStats,
    events: Vec<TreeEvent>,
}

impl Clusterer {
    pub fn new(params: CostParams, metric: Metric) -> Result<Self> {
        Self::with_config(params, metric, CoresetConfig::default())
    }

    pub fn with_config(params: CostParams, metric: Metric, config: CoresetConfig) -> Result<Self> {
        let tree = MrTree::build(Vec::new(), &params, &config, &metric)?;
        Ok(Clusterer {
            tree,
            params,
            metric,
            query_options: QueryOptions::default(),
            next_id: 0,
            stats: ClustererStats::default(),
            events: Vec::new(),
        })
    }

    pub fn set_query_options(&mut self, options: QueryOptions) {
        self.query_options = options;
    }

    fn absorb_events(&mut self) {
        for e in self.tree.drain_events() {
            match e {
                TreeEvent::EpochRestart { .. } => self.stats.epoch_restarts += 1,
                TreeEvent::Rebuild { .. } => self.stats.rebuilds += 1,
            }
            self.events.push(e);
        }
    }

    /// Adds a point and returns its id. Ids count up from 0 and are never
    /// reused.
    pub fn insert(&mut self, loc: Location, weight: f64) -> Result<PointId> {
        self.metric.validate(&loc)?;
        let id = PointId(self.next_id);
        if !(weight.is_finite() && weight >= 1.0) {
            return Err(Error::InvalidWeight { id, weight });
        }
        let point = WeightedPoint { id, loc, weight };
        let (res, spent) = ops::measure(|| self.tree.insert(point));
        res?;
        self.next_id += 1;
        self.stats.insertions += 1;
        self.stats.update_ops += spent;
        self.absorb_events();
        Ok(id)
    }

    /// Inserts a unit-weight point with Euclidean coordinates.
    pub fn insert_coords(&mut self, coords: impl Into<Vec<f64>>) -> Result<PointId> {
        self.insert(Location::coords(coords), 1.0)
    }

    pub fn delete(&mut self, id: PointId) -> Result<()> {
        if !self.tree.contains(id) {
            return Err(Error::UnknownId(id));
        }
        let (res, spent) = ops::measure(|| self.tree.delete(id));
        res?;
        self.stats.deletions += 1;
        self.stats.update_ops += spent;
        self.absorb_events();
        Ok(())
    }

    /// Solves on the current coreset with `k` (or the configured `k`)
    /// centers. The query RNG is derived from the seed alone, so repeated
    /// queries on the same state agree and never disturb the update path.
    pub fn query(&mut self, k: Option<usize>) -> Result<QueryResult> {
        self.query_inner(k, false)
    }

    /// As [`Clusterer::query`], also evaluating the centers on every live point.
    pub fn query_exact(&mut self, k: Option<usize>) -> Result<QueryResult> {
        self.query_inner(k, true)
    }

    fn query_inner(&mut self, k: Option<usize>, exact: bool) -> Result<QueryResult> {
        if self.tree.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let k = k.unwrap_or(self.params.k);
        if k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        self.stats.queries += 1;
        let coreset = self.tree.root_coreset();
        let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
        rng.set_stream(QUERY_STREAM);
        let solution = query_solve(
            &coreset,
            &self.metric,
            k,
            self.params.z,
            &self.query_options,
            &mut rng,
        )?;
        let estimated_cost = coreset.cost(&solution.centers, &self.metric, self.params.z)?;
        let exact_cost = if exact {
            Some(set_cost(
                &self.tree.live_points(),
                &solution.centers,
                &self.metric,
                self.params.z,
            )?)
        } else {
            None
        };
        Ok(QueryResult {
            solution,
            coreset_size: coreset.len(),
            estimated_cost,
            exact_cost,
        })
    }

    pub fn coreset(&self) -> Coreset {
        self.tree.root_coreset()
    }

    pub fn live_points(&self) -> Vec<WeightedPoint> {
        self.tree.live_points()
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.tree.contains(id)
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn stats(&self) -> &ClustererStats {
        &self.stats
    }

    pub fn tree(&self) -> &MrTree {
        &self.tree
    }

    pub fn tree_stats(&self) -> TreeStats {
        self.tree.stats()
    }

    /// Restart and rebuild events since the last call.
    pub fn drain_events(&mut self) -> Vec<TreeEvent> {
        std::mem::take(&mut self.events)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::approx::solve_points;
    use crate::types::Objective;

    fn clusterer(k: usize) -> Clusterer {
        Clusterer::new(
            CostParams::new(k, Objective::KMeans, 0.2).with_seed(3),
            Metric::euclidean(2),
        )
        .unwrap()
    }

    #[test]
    fn first_insert_gets_id_zero() {
        let mut c = clusterer(2);
        assert_eq!(c.insert_coords([1.0, 2.0]).unwrap(), PointId(0));
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn ids_are_not_reused() {
        let mut c = clusterer(2);
        let a = c.insert_coords([1.0, 2.0]).unwrap();
        c.delete(a).unwrap();
        let b = c.insert_coords([1.0, 2.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn insert_then_delete_leaves_nothing() {
        let mut c = clusterer(2);
        let a = c.insert_coords([1.0, 2.0]).unwrap();
        c.delete(a).unwrap();
        assert!(c.is_empty());
        assert!(c.coreset().is_empty());
        assert_eq!(c.query(None).unwrap_err(), Error::EmptyDataset);
        assert_eq!(c.delete(a), Err(Error::UnknownId(a)));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let mut c = clusterer(2);
        assert!(matches!(
            c.insert_coords([1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert_eq!(c.stats().insertions, 0);
        assert_eq!(c.insert_coords([0.0, 0.0]).unwrap(), PointId(0));
    }

    #[test]
    fn exactly_k_points_cost_zero() {
        let mut c = clusterer(3);
        for x in [0.0, 5.0, 9.0] {
            c.insert_coords([x, x]).unwrap();
        }
        let q = c.query_exact(None).unwrap();
        assert_eq!(q.estimated_cost, 0.0);
        assert_eq!(q.exact_cost, Some(0.0));
    }

    #[test]
    fn repeated_queries_agree() {
        let mut c = clusterer(2);
        for i in 0..200 {
            c.insert_coords([(i % 7) as f64, (i % 2) as f64 * 30.0])
                .unwrap();
        }
        let a = c.query(None).unwrap();
        let b = c.query(None).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn queries_do_not_change_update_path() {
        let mut a = clusterer(2);
        let mut b = clusterer(2);
        for i in 0..150 {
            a.insert_coords([i as f64, 0.0]).unwrap();
            b.insert_coords([i as f64, 0.0]).unwrap();
            if i % 10 == 9 {
                a.query(None).unwrap();
            }
        }
        assert_eq!(a.coreset(), b.coreset());
    }

    #[test]
    fn deleting_a_blob_matches_static_solve() {
        let mut c = clusterer(2);
        let mut ids = Vec::new();
        for i in 0..300 {
            let blob = (i % 3) as f64 * 100.0;
            let jitter = (i / 3) as f64 * 0.01;
            ids.push((i % 3, c.insert_coords([blob + jitter, jitter]).unwrap()));
        }
        for (blob, id) in &ids {
            if *blob == 1 {
                c.delete(*id).unwrap();
            }
        }
        let q = c.query_exact(None).unwrap();
        let survivors = c.live_points();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let reference = solve_points(
            &survivors,
            c.metric(),
            2,
            Objective::KMeans,
            &QueryOptions::default(),
            &mut rng,
        )
        .unwrap();
        let exact = q.exact_cost.unwrap();
        assert!(
            exact <= 1.5 * reference.total_cost + 1e-9,
            "{exact} vs {}",
            reference.total_cost
        );
    }

    #[test]
    fn stats_count_updates() {
        let mut c = clusterer(2);
        for i in 0..50 {
            c.insert_coords([i as f64, 1.0]).unwrap();
        }
        c.delete(PointId(3)).unwrap();
        let s = c.stats();
        assert_eq!((s.insertions, s.deletions), (50, 1));
        assert!(s.update_ops > 0);
        assert!(s.rebuilds as usize <= 51);
    }
}
