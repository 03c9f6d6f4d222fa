//! Merge-and-reduce tree of epoch structures.
//!
//! Leaves hold up to `k` raw points. Every internal node runs an
//! [`EpochState`] over the union of its two children's coresets, and the
//! root's coreset represents the whole dataset. An update changes one leaf;
//! the resulting coreset delta is applied at each ancestor in turn. A node
//! whose epoch cannot absorb the delta starts a new epoch, and so does every
//! ancestor above it. Leaving the size band `[n_lo, n_hi]` rebuilds the tree.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::coreset::{Coreset, CoresetDelta, CoresetEntry, Provenance};
use crate::epoch::{CoresetConfig, EpochState};
use crate::error::{Error, Result};
use crate::types::{CostParams, Metric, PointId, SyntheticIds, WeightedPoint};

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf(BTreeMap<PointId, WeightedPoint>),
    Internal {
        left: usize,
        right: usize,
        epoch: Option<EpochState>,
    },
}

/// Updates seen by a node since its current epoch started.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NodeAudit {
    pub data_insertions: usize,
    pub data_deletions: usize,
    pub received_insertions: usize,
    pub received_deletions: usize,
}

#[derive(Clone, Debug)]
struct Node {
    parent: Option<usize>,
    level: usize,
    depth: usize,
    kind: NodeKind,
    audit: NodeAudit,
    restarts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TreeEvent {
    EpochRestart { level: usize, input_size: usize },
    Rebuild { size: usize, height: usize },
}

/// Delta bookkeeping of one level: what its nodes emitted and how the
/// parents consumed it.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LevelFlow {
    pub emitted: u64,
    pub applied: u64,
    pub absorbed_by_restart: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelStats {
    pub level: usize,
    pub nodes: usize,
    pub epochs: usize,
    pub mean_epoch_age: f64,
    pub coreset_entries: usize,
    pub restarts: usize,
    pub flow: LevelFlow,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TreeStats {
    pub live: usize,
    pub height: usize,
    pub leaves: usize,
    pub n_lo: usize,
    pub n_hi: usize,
    pub level_epsilon: f64,
    pub rebuilds: usize,
    pub restarts: usize,
    pub root_coreset: usize,
    pub levels: Vec<LevelStats>,
}

/// A node whose received churn exceeded `n_i + ℓ·n_d` insertions or `n_d`
/// deletions within its epoch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChurnExcess {
    pub level: usize,
    pub audit: NodeAudit,
}

#[derive(Clone, Debug)]
pub struct MrTree {
    params: CostParams,
    level_params: CostParams,
    config: CoresetConfig,
    metric: Metric,
    nodes: Vec<Node>,
    root: usize,
    leaf_of: HashMap<PointId, usize>,
    open_leaves: BTreeSet<usize>,
    leaves_by_depth: BTreeSet<(usize, usize)>,
    live: usize,
    n_lo: usize,
    n_hi: usize,
    ids: SyntheticIds,
    rng: ChaCha8Rng,
    events: Vec<TreeEvent>,
    flow: Vec<LevelFlow>,
    rebuilds: usize,
    restarts: usize,
    churn_excess: Vec<ChurnExcess>,
}

/// Net change between two coreset snapshots. Entries count as equal when
/// id, location and weight agree; provenance is not part of a node's input.
pub fn coreset_diff(old: &Coreset, new: &Coreset) -> CoresetDelta {
    let before: BTreeMap<PointId, &WeightedPoint> =
        old.entries.iter().map(|e| (e.id(), &e.point)).collect();
    let after: BTreeMap<PointId, _> = new.entries.iter().map(|e| (e.id(), e)).collect();
    let mut delta = CoresetDelta::default();
    for (id, p) in &before {
        match after.get(id) {
            Some(e) if e.point.weight.to_bits() == p.weight.to_bits() && e.point.loc == p.loc => {}
            _ => delta.deleted.push(*id),
        }
    }
    for (id, e) in &after {
        match before.get(id) {
            Some(p) if e.point.weight.to_bits() == p.weight.to_bits() && e.point.loc == p.loc => {}
            _ => delta.inserted.push((*e).clone()),
        }
    }
    delta
}

/// Height bound used to split ε across levels: the height a balanced tree
/// reaches at the top of the size band.
fn height_bound(n_hi: usize, k: usize) -> usize {
    let leaves = n_hi.div_ceil(k).max(1);
    (leaves.next_power_of_two().trailing_zeros() as usize).max(1)
}

impl MrTree {
    /// Builds a tree over `points`. An empty input gives a single empty leaf.
    pub fn build(
        points: Vec<WeightedPoint>,
        params: &CostParams,
        config: &CoresetConfig,
        metric: &Metric,
    ) -> Result<Self> {
        params.validate()?;
        let mut tree = MrTree {
            params: params.clone(),
            level_params: params.clone(),
            config: config.clone(),
            metric: metric.clone(),
            nodes: Vec::new(),
            root: 0,
            leaf_of: HashMap::new(),
            open_leaves: BTreeSet::new(),
            leaves_by_depth: BTreeSet::new(),
            live: 0,
            n_lo: 0,
            n_hi: 0,
            ids: SyntheticIds::default(),
            rng: ChaCha8Rng::seed_from_u64(params.seed),
            events: Vec::new(),
            flow: Vec::new(),
            rebuilds: 0,
            restarts: 0,
            churn_excess: Vec::new(),
        };
        tree.validate_points(&points)?;
        tree.construct(points)?;
        Ok(tree)
    }

    fn validate_points(&self, points: &[WeightedPoint]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in points {
            self.metric.validate(&p.loc)?;
            if !(p.weight.is_finite() && p.weight >= 1.0) {
                return Err(Error::InvalidWeight {
                    id: p.id,
                    weight: p.weight,
                });
            }
            if p.id.is_synthetic() || !seen.insert(p.id) {
                return Err(Error::DuplicateId(p.id));
            }
        }
        Ok(())
    }

    fn construct(&mut self, points: Vec<WeightedPoint>) -> Result<()> {
        let n = points.len();
        self.nodes.clear();
        self.leaf_of.clear();
        self.open_leaves.clear();
        self.leaves_by_depth.clear();
        self.live = n;
        self.n_lo = n.div_ceil(2).max(1);
        self.n_hi = 2 * n.max(1);
        let h = height_bound(self.n_hi, self.params.k);
        self.level_params = CostParams {
            epsilon: self.params.epsilon / (2.0 * h as f64),
            ..self.params.clone()
        };
        self.root = self.build_subtree(points, None, 0)?;
        Ok(())
    }

    fn build_subtree(
        &mut self,
        points: Vec<WeightedPoint>,
        parent: Option<usize>,
        depth: usize,
    ) -> Result<usize> {
        let k = self.params.k;
        if points.len() <= k {
            return Ok(self.push_leaf(points, parent, depth));
        }
        let leaves = points.len().div_ceil(k);
        let split = (leaves / 2) * k;
        let mut left_pts = points;
        let right_pts = left_pts.split_off(split);
        let id = self.nodes.len();
        self.nodes.push(Node {
            parent,
            level: 0,
            depth,
            kind: NodeKind::Internal {
                left: usize::MAX,
                right: usize::MAX,
                epoch: None,
            },
            audit: NodeAudit::default(),
            restarts: 0,
        });
        let left = self.build_subtree(left_pts, Some(id), depth + 1)?;
        let right = self.build_subtree(right_pts, Some(id), depth + 1)?;
        let level = 1 + self.nodes[left].level.max(self.nodes[right].level);
        let node = &mut self.nodes[id];
        node.level = level;
        node.kind = NodeKind::Internal {
            left,
            right,
            epoch: None,
        };
        let epoch = self.open_epoch(id)?;
        if let NodeKind::Internal { epoch: slot, .. } = &mut self.nodes[id].kind {
            *slot = epoch;
        }
        Ok(id)
    }

    fn push_leaf(
        &mut self,
        points: Vec<WeightedPoint>,
        parent: Option<usize>,
        depth: usize,
    ) -> usize {
        let id = self.nodes.len();
        if points.len() < self.params.k {
            self.open_leaves.insert(id);
        }
        self.leaves_by_depth.insert((depth, id));
        for p in &points {
            self.leaf_of.insert(p.id, id);
        }
        self.nodes.push(Node {
            parent,
            level: 0,
            depth,
            kind: NodeKind::Leaf(points.into_iter().map(|p| (p.id, p)).collect()),
            audit: NodeAudit::default(),
            restarts: 0,
        });
        id
    }

    /// Starts an epoch over the union of the children's coresets.
    fn open_epoch(&mut self, id: usize) -> Result<Option<EpochState>> {
        let NodeKind::Internal { left, right, .. } = self.nodes[id].kind else {
            unreachable!("epochs live on internal nodes");
        };
        let mut input = self.coreset_of(left).points();
        input.extend(self.coreset_of(right).points());
        if input.is_empty() {
            return Ok(None);
        }
        let epoch = EpochState::init(
            input,
            &self.level_params,
            &self.config,
            &self.metric,
            &mut self.ids,
            &mut self.rng,
        )?;
        Ok(Some(epoch))
    }

    fn coreset_of(&self, id: usize) -> Coreset {
        match &self.nodes[id].kind {
            NodeKind::Leaf(points) => {
                Coreset::from_points(&points.values().cloned().collect::<Vec<_>>())
            }
            NodeKind::Internal { epoch, .. } => {
                epoch.as_ref().map(EpochState::extract).unwrap_or_default()
            }
        }
    }

    fn restart(&mut self, id: usize) -> Result<()> {
        let epoch = self.open_epoch(id)?;
        let input_size = epoch.as_ref().map_or(0, EpochState::len);
        if let NodeKind::Internal { epoch: slot, .. } = &mut self.nodes[id].kind {
            *slot = epoch;
        }
        let node = &mut self.nodes[id];
        node.restarts += 1;
        node.audit = NodeAudit::default();
        self.restarts += 1;
        self.events.push(TreeEvent::EpochRestart {
            level: node.level,
            input_size,
        });
        Ok(())
    }

    fn flow_at(&mut self, level: usize) -> &mut LevelFlow {
        if self.flow.len() <= level {
            self.flow.resize(level + 1, LevelFlow::default());
        }
        &mut self.flow[level]
    }

    fn record_churn(&mut self, id: usize, delta: &CoresetDelta) {
        let node = &mut self.nodes[id];
        node.audit.received_insertions += delta.inserted.len();
        node.audit.received_deletions += delta.deleted.len();
        let a = node.audit;
        let level = node.level;
        if a.received_insertions > a.data_insertions + level * a.data_deletions
            || a.received_deletions > a.data_deletions
        {
            self.churn_excess.push(ChurnExcess { level, audit: a });
        }
    }

    /// Carries `delta`, emitted by node `from`, up to the root.
    fn propagate(&mut self, from: usize, mut delta: CoresetDelta, inserted: bool) -> Result<()> {
        let mut cur = from;
        while let Some(parent) = self.nodes[cur].parent {
            let node = &mut self.nodes[parent];
            if inserted {
                node.audit.data_insertions += 1;
            } else {
                node.audit.data_deletions += 1;
            }
            if delta.is_empty() {
                cur = parent;
                continue;
            }
            let emitted = delta.len() as u64;
            let child_level = self.nodes[cur].level;
            self.flow_at(child_level).emitted += emitted;
            let outcome = match &mut self.nodes[parent].kind {
                NodeKind::Internal { epoch: Some(e), .. } => e.apply(&delta),
                NodeKind::Internal { epoch: None, .. } => Err(Error::NeedsNewEpoch),
                NodeKind::Leaf(_) => unreachable!("parents are internal"),
            };
            match outcome {
                Ok(next) => {
                    self.flow_at(child_level).applied += emitted;
                    self.record_churn(parent, &delta);
                    delta = next;
                    cur = parent;
                }
                Err(Error::NeedsNewEpoch) => {
                    self.flow_at(child_level).absorbed_by_restart += emitted;
                    let mut up = Some(parent);
                    while let Some(x) = up {
                        self.restart(x)?;
                        up = self.nodes[x].parent;
                    }
                    return Ok(());
                }
                Err(e) => panic!("child delta rejected by parent epoch: {e}"),
            }
        }
        Ok(())
    }

    fn recompute_levels(&mut self, mut id: usize) {
        while let Some(p) = self.nodes[id].parent {
            let NodeKind::Internal { left, right, .. } = self.nodes[p].kind else {
                unreachable!()
            };
            self.nodes[p].level = 1 + self.nodes[left].level.max(self.nodes[right].level);
            id = p;
        }
    }

    /// Splits the shallowest full leaf into a node with two leaves: the old
    /// points and `p`. Returns the new internal node's delta.
    fn graft(&mut self, p: WeightedPoint) -> Result<(usize, CoresetDelta)> {
        let &(depth, x) = self.leaves_by_depth.iter().next().expect("tree has a leaf");
        let old = self.coreset_of(x);
        let NodeKind::Leaf(points) = std::mem::replace(
            &mut self.nodes[x].kind,
            NodeKind::Internal {
                left: usize::MAX,
                right: usize::MAX,
                epoch: None,
            },
        ) else {
            unreachable!("indexed as leaf")
        };
        self.leaves_by_depth.remove(&(depth, x));
        self.open_leaves.remove(&x);
        let left = self.push_leaf(points.into_values().collect(), Some(x), depth + 1);
        let right = self.push_leaf(vec![p], Some(x), depth + 1);
        self.nodes[x].kind = NodeKind::Internal {
            left,
            right,
            epoch: None,
        };
        self.nodes[x].level = 1;
        self.nodes[x].audit = NodeAudit::default();
        self.recompute_levels(x);
        let epoch = self.open_epoch(x)?;
        if let NodeKind::Internal { epoch: slot, .. } = &mut self.nodes[x].kind {
            *slot = epoch;
        }
        let new = self.coreset_of(x);
        Ok((x, coreset_diff(&old, &new)))
    }

    /// Adds `p`; the id must not be live.
    pub fn insert(&mut self, p: WeightedPoint) -> Result<()> {
        self.validate_points(std::slice::from_ref(&p))?;
        if self.leaf_of.contains_key(&p.id) {
            return Err(Error::DuplicateId(p.id));
        }
        self.live += 1;
        let id = p.id;
        let (from, delta) = match self.open_leaves.iter().next().copied() {
            Some(leaf) => {
                let NodeKind::Leaf(points) = &mut self.nodes[leaf].kind else {
                    unreachable!()
                };
                points.insert(p.id, p.clone());
                if points.len() >= self.params.k {
                    self.open_leaves.remove(&leaf);
                }
                self.leaf_of.insert(id, leaf);
                (
                    leaf,
                    CoresetDelta::insertion(CoresetEntry::new(p, Provenance::Leaf)),
                )
            }
            None => self.graft(p)?,
        };
        self.propagate(from, delta, true)?;
        if self.live > self.n_hi {
            self.rebuild()?;
        }
        Ok(())
    }

    /// Removes the live point `id`.
    pub fn delete(&mut self, id: PointId) -> Result<()> {
        let leaf = self.leaf_of.remove(&id).ok_or(Error::UnknownId(id))?;
        let NodeKind::Leaf(points) = &mut self.nodes[leaf].kind else {
            unreachable!()
        };
        points.remove(&id);
        self.open_leaves.insert(leaf);
        self.live -= 1;
        self.propagate(leaf, CoresetDelta::deletion(id), false)?;
        if self.live < self.n_lo {
            self.rebuild()?;
        }
        Ok(())
    }

    /// Recomputes the whole tree from the live points.
    pub fn rebuild(&mut self) -> Result<()> {
        let points = self.live_points();
        self.construct(points)?;
        self.rebuilds += 1;
        self.events.push(TreeEvent::Rebuild {
            size: self.live,
            height: self.height(),
        });
        Ok(())
    }

    pub fn root_coreset(&self) -> Coreset {
        self.coreset_of(self.root)
    }

    /// Every live point, sorted by id.
    pub fn live_points(&self) -> Vec<WeightedPoint> {
        let mut out: Vec<WeightedPoint> = self
            .nodes_reachable()
            .into_iter()
            .filter_map(|i| match &self.nodes[i].kind {
                NodeKind::Leaf(points) => Some(points.values().cloned().collect::<Vec<_>>()),
                NodeKind::Internal { .. } => None,
            })
            .flatten()
            .collect();
        out.sort_by_key(|p| p.id);
        out
    }

    fn nodes_reachable(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![self.root];
        while let Some(i) = stack.pop() {
            out.push(i);
            if let NodeKind::Internal { left, right, .. } = self.nodes[i].kind {
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.live
    }

    pub fn is_empty(&self) -> bool {
        self.live == 0
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.leaf_of.contains_key(&id)
    }

    pub fn height(&self) -> usize {
        self.nodes[self.root].level
    }

    pub fn band(&self) -> (usize, usize) {
        (self.n_lo, self.n_hi)
    }

    pub fn level_epsilon(&self) -> f64 {
        self.level_params.epsilon
    }

    pub fn leaf_count(&self) -> usize {
        self.leaves_by_depth.len()
    }

    pub fn rebuilds(&self) -> usize {
        self.rebuilds
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn metric(&self) -> &Metric {
        &self.metric
    }

    pub fn params(&self) -> &CostParams {
        &self.params
    }

    /// Events since the last call.
    pub fn drain_events(&mut self) -> Vec<TreeEvent> {
        std::mem::take(&mut self.events)
    }

    /// Every recorded case of a node receiving more churn than the
    /// per-level bound allows.
    pub fn churn_excess(&self) -> &[ChurnExcess] {
        &self.churn_excess
    }

    /// Epoch of every internal node, with the node's level.
    pub fn epochs(&self) -> Vec<(usize, &EpochState)> {
        self.nodes_reachable()
            .into_iter()
            .filter_map(|i| match &self.nodes[i].kind {
                NodeKind::Internal { epoch: Some(e), .. } => Some((self.nodes[i].level, e)),
                _ => None,
            })
            .collect()
    }

    pub fn stats(&self) -> TreeStats {
        let height = self.height();
        let mut levels: Vec<LevelStats> = (0..=height)
            .map(|level| LevelStats {
                level,
                nodes: 0,
                epochs: 0,
                mean_epoch_age: 0.0,
                coreset_entries: 0,
                restarts: 0,
                flow: self.flow.get(level).copied().unwrap_or_default(),
            })
            .collect();
        for i in self.nodes_reachable() {
            let node = &self.nodes[i];
            let s = &mut levels[node.level];
            s.nodes += 1;
            s.restarts += node.restarts;
            match &node.kind {
                NodeKind::Leaf(points) => s.coreset_entries += points.len(),
                NodeKind::Internal { epoch, .. } => {
                    if let Some(e) = epoch {
                        s.epochs += 1;
                        s.mean_epoch_age += e.budget_used() as f64;
                        s.coreset_entries += e.coreset_len();
                    }
                }
            }
        }
        for s in &mut levels {
            if s.epochs > 0 {
                s.mean_epoch_age /= s.epochs as f64;
            }
        }
        TreeStats {
            live: self.live,
            height,
            leaves: self.leaf_count(),
            n_lo: self.n_lo,
            n_hi: self.n_hi,
            level_epsilon: self.level_params.epsilon,
            rebuilds: self.rebuilds,
            restarts: self.restarts,
            root_coreset: self.root_coreset().len(),
            levels,
        }
    }

    pub fn stats_json(&self) -> String {
        serde_json::to_string_pretty(&self.stats()).expect("serializable")
    }

    /// Verifies the tree shape, the leaf index, every epoch, and that each
    /// epoch's live set is exactly the union of its children's coresets.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut live = 0;
        let mut leaves = 0;
        for i in self.nodes_reachable() {
            let node = &self.nodes[i];
            match &node.kind {
                NodeKind::Leaf(points) => {
                    leaves += 1;
                    if node.level != 0 {
                        return Err(format!("leaf {i} at level {}", node.level));
                    }
                    if points.len() > self.params.k {
                        return Err(format!("leaf {i} holds {} > k points", points.len()));
                    }
                    if (points.len() < self.params.k) != self.open_leaves.contains(&i) {
                        return Err(format!("leaf {i} capacity index stale"));
                    }
                    if !self.leaves_by_depth.contains(&(node.depth, i)) {
                        return Err(format!("leaf {i} missing from depth index"));
                    }
                    for id in points.keys() {
                        if self.leaf_of.get(id) != Some(&i) {
                            return Err(format!("point {id} not indexed to leaf {i}"));
                        }
                    }
                    live += points.len();
                }
                NodeKind::Internal { left, right, epoch } => {
                    for c in [left, right] {
                        if self.nodes[*c].parent != Some(i)
                            || self.nodes[*c].depth != node.depth + 1
                        {
                            return Err(format!("child {c} of {i} has wrong parent or depth"));
                        }
                    }
                    if node.level != 1 + self.nodes[*left].level.max(self.nodes[*right].level) {
                        return Err(format!("node {i} level stale"));
                    }
                    let mut input = self.coreset_of(*left).points();
                    input.extend(self.coreset_of(*right).points());
                    input.sort_by_key(|p| p.id);
                    match epoch {
                        None if input.is_empty() => {}
                        None => return Err(format!("node {i} has input but no epoch")),
                        Some(e) => {
                            e.check_invariants().map_err(|m| format!("node {i}: {m}"))?;
                            let held = e.live_points();
                            if held.len() != input.len()
                                || held.iter().zip(&input).any(|(a, b)| {
                                    a.id != b.id
                                        || a.loc != b.loc
                                        || a.weight.to_bits() != b.weight.to_bits()
                                })
                            {
                                return Err(format!(
                                    "node {i}: epoch input differs from children's coresets"
                                ));
                            }
                        }
                    }
                }
            }
        }
        if live != self.live || self.leaf_of.len() != self.live {
            return Err(format!("live count {} but leaves hold {live}", self.live));
        }
        if leaves != self.leaves_by_depth.len() {
            return Err("leaf depth index out of sync".into());
        }
        for (level, f) in self.flow.iter().enumerate() {
            if f.emitted != f.applied + f.absorbed_by_restart {
                return Err(format!("level {level}: {f:?} drops deltas"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
