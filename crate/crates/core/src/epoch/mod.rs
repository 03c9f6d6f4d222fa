//! One epoch of the dynamic coreset structure.
//!
//! At the start of an epoch the input `P₀` is split by a bicriteria solution
//! `A` (2k centers) into:
//!
//! * `E₀`, the `k` most expensive points, kept verbatim;
//! * close rings `R_{i,0}`: points with cost below `ε·Δ`, represented by
//!   their center `a_i` carrying the ring's total weight;
//! * rings `R_{i,j,w}`: points of cluster `i` with cost in
//!   `[2^{j-1}·ε·Δ, 2^j·ε·Δ)` and weight in `[2^w, 2^{w+1})`. Rings with
//!   `2^b ≤ |R| < 2^{b+1}` form group `G_{j,b,w}`.
//!
//! Groups that are small at the start of the epoch go to the small set along
//! with `E₀`. Every large group keeps its members in a uniformly random
//! order; the first `n_c` members are the group's sample, each weighted
//! `w(p) · c / n_c` where `c` is a lazily refreshed size estimate.
//!
//! The epoch absorbs up to `k` insertions and deletions. Insertions are
//! added to the coreset as-is. A deletion touches at most one sample slot,
//! except when a ring shrinks to `2^{b-3}` members and moves to group
//! `G_{j,b-3,w}`, or when a size estimate is refreshed.

mod order;
mod property;
mod size;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;

use crate::approx::{bicriteria_init, Solution};
use crate::coreset::{Coreset, CoresetDelta, CoresetEntry, CoresetMap, Provenance};
use crate::error::{Error, Result};
use crate::types::{CostParams, Metric, Objective, PointId, SyntheticIds, WeightedPoint};

pub use order::{OrderKey, OrderTree};
pub use property::{
    check_property, PropertyReport, PropertyViolation, CLUSTER_COST_RATIO, POINT_COST_RATIO,
};
pub use size::{coreset_size, CoresetConfig, SizeMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct GroupKey {
    pub j: u32,
    pub b: u32,
    pub w: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RingKey {
    pub center: usize,
    pub j: u32,
    pub w: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Inserted,
    Small,
    Close(usize),
    Ring(RingKey),
}

#[derive(Clone, Debug)]
struct Member {
    point: WeightedPoint,
    slot: Slot,
    order_key: u64,
}

#[derive(Clone, Debug)]
struct Ring {
    members: BTreeSet<PointId>,
    b: u32,
    size_at_placement: usize,
}

#[derive(Clone, Debug)]
struct Group {
    rings: BTreeSet<RingKey>,
    order: OrderTree,
    size_estimate: usize,
    initial_estimate: usize,
    issued_scale: f64,
}

#[derive(Clone, Debug, Default)]
struct CloseRing {
    members: BTreeSet<PointId>,
    weight: f64,
}

/// Counters of one epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ChurnLog {
    pub data_insertions: usize,
    pub data_deletions: usize,
    pub coreset_insertions: usize,
    pub coreset_deletions: usize,
    pub ring_moves: usize,
    pub estimate_increases: usize,
    pub estimate_decreases: usize,
    pub reissued_entries: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupSummary {
    pub key: GroupKey,
    pub size: usize,
    pub rings: usize,
    pub initially_large: bool,
    pub property_holds: bool,
}

/// What the epoch looked like right after initialization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InitReport {
    pub n0: usize,
    pub delta: f64,
    pub sample_size: usize,
    pub large_cutoff: usize,
    pub expensive: usize,
    pub close: usize,
    pub small: usize,
    pub groups: Vec<GroupSummary>,
}

impl InitReport {
    pub fn nonempty_groups(&self) -> usize {
        self.groups.iter().filter(|g| g.size > 0).count()
    }

    pub fn large_groups(&self) -> usize {
        self.groups.iter().filter(|g| g.initially_large).count()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GroupDump {
    pub key: GroupKey,
    pub ring_sizes: Vec<(usize, usize)>,
    pub order_size: usize,
    pub size_estimate: usize,
    pub initial_estimate: usize,
}

#[derive(Clone, Debug)]
pub struct EpochState {
    k: usize,
    z: Objective,
    epsilon: f64,
    strict: bool,
    metric: Metric,
    solution: Solution,
    center_ids: Vec<PointId>,
    delta: f64,
    n0: usize,
    n_c: usize,
    large_cutoff: usize,
    expensive: BTreeSet<PointId>,
    members: FxHashMap<PointId, Member>,
    small: BTreeSet<PointId>,
    close: Vec<CloseRing>,
    rings: BTreeMap<RingKey, Ring>,
    groups: BTreeMap<GroupKey, Group>,
    inserted: BTreeSet<PointId>,
    deleted: BTreeSet<PointId>,
    budget_used: usize,
    churn: ChurnLog,
    coreset: CoresetMap,
    rng: ChaCha8Rng,
    report: InitReport,
}

fn weight_class(w: f64) -> u32 {
    let mut c = w.log2().floor().max(0.0) as u32;
    while c > 0 && w < 2f64.powi(c as i32) {
        c -= 1;
    }
    while w >= 2f64.powi(c as i32 + 1) {
        c += 1;
    }
    c
}

/// Smallest `j ≥ 1` with `2^{j-1}·thr ≤ cost < 2^j·thr`; requires `cost ≥ thr`.
fn ring_index(cost: f64, thr: f64) -> u32 {
    let mut j = ((cost / thr).log2().floor().max(0.0) as u32) + 1;
    while j > 1 && cost < thr * 2f64.powi(j as i32 - 1) {
        j -= 1;
    }
    while cost >= thr * 2f64.powi(j as i32) {
        j += 1;
    }
    j
}

impl EpochState {
    /// Opens an epoch over `points`. Weights must be at least 1.
    pub fn init<R: Rng + ?Sized>(
        points: Vec<WeightedPoint>,
        params: &CostParams,
        config: &CoresetConfig,
        metric: &Metric,
        ids: &mut SyntheticIds,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut seen = FxHashSet::with_capacity_and_hasher(points.len(), Default::default());
        for p in &points {
            metric.validate(&p.loc)?;
            if !(p.weight.is_finite() && p.weight >= 1.0) {
                return Err(Error::InvalidWeight {
                    id: p.id,
                    weight: p.weight,
                });
            }
            if !seen.insert(p.id) {
                return Err(Error::DuplicateId(p.id));
            }
        }

        let (k, z, epsilon) = (params.k, params.z, params.epsilon);
        let n0 = points.len();
        let solution = bicriteria_init(&points, metric, k, z, rng)?;
        let centers = &solution.centers;
        let costs: Vec<f64> = points
            .iter()
            .zip(&solution.assignment)
            .map(|(p, &i)| p.weight * metric.cost_unchecked(&p.loc, &centers[i], z))
            .collect();

        let dearer = |a: usize, b: usize| {
            costs[b]
                .total_cmp(&costs[a])
                .then(points[a].id.cmp(&points[b].id))
        };
        let mut top: Vec<usize> = Vec::with_capacity(k + 1);
        for i in 0..n0 {
            if top.len() < k || top.last().is_some_and(|&w| dearer(i, w).is_lt()) {
                let at = top.partition_point(|&j| dearer(j, i).is_lt());
                top.insert(at, i);
                top.truncate(k);
            }
        }
        let expensive_idx: BTreeSet<usize> = top.into_iter().collect();
        let rest: Vec<usize> = (0..n0).filter(|i| !expensive_idx.contains(i)).collect();
        let delta = if rest.is_empty() {
            0.0
        } else {
            rest.iter().map(|&i| costs[i]).sum::<f64>() / rest.len() as f64
        };
        let n_c = config.sample_size_for(k, epsilon, n0, params.delta);
        let large_cutoff = config.large_cutoff_for(n0, n_c, epsilon);
        let threshold = epsilon * delta;

        let center_ids: Vec<PointId> = centers.iter().map(|_| ids.next_id()).collect();
        let mut close = vec![CloseRing::default(); centers.len()];
        let mut ring_members: BTreeMap<RingKey, Vec<usize>> = BTreeMap::new();
        for &p in &rest {
            let i = solution.assignment[p];
            if delta == 0.0 || costs[p] < threshold {
                close[i].members.insert(points[p].id);
                close[i].weight += points[p].weight;
            } else {
                let key = RingKey {
                    center: i,
                    j: ring_index(costs[p], threshold),
                    w: weight_class(points[p].weight),
                };
                ring_members.entry(key).or_default().push(p);
            }
        }

        let mut group_rings: BTreeMap<GroupKey, Vec<RingKey>> = BTreeMap::new();
        for (rk, m) in &ring_members {
            let gk = GroupKey {
                j: rk.j,
                b: m.len().ilog2(),
                w: rk.w,
            };
            group_rings.entry(gk).or_default().push(*rk);
        }

        let mut state = EpochState {
            k,
            z,
            epsilon,
            strict: config.strict,
            metric: metric.clone(),
            center_ids,
            delta,
            n0,
            n_c,
            large_cutoff,
            expensive: expensive_idx.iter().map(|&i| points[i].id).collect(),
            members: FxHashMap::with_capacity_and_hasher(n0, Default::default()),
            small: BTreeSet::new(),
            close: Vec::new(),
            rings: BTreeMap::new(),
            groups: BTreeMap::new(),
            inserted: BTreeSet::new(),
            deleted: BTreeSet::new(),
            budget_used: 0,
            churn: ChurnLog::default(),
            coreset: CoresetMap::untracked(),
            rng: ChaCha8Rng::seed_from_u64(rng.random()),
            report: InitReport {
                n0,
                delta,
                sample_size: n_c,
                large_cutoff,
                expensive: expensive_idx.len(),
                close: close.iter().map(|c| c.members.len()).sum(),
                small: 0,
                groups: Vec::new(),
            },
            solution,
        };

        let index_of: FxHashMap<PointId, usize> = rest.iter().map(|&p| (points[p].id, p)).collect();
        for (i, c) in close.iter().enumerate() {
            for id in &c.members {
                state.add_member(points[index_of[id]].clone(), Slot::Close(i));
            }
        }
        state.close = close;

        let mut is_small = vec![false; n0];
        for &i in &expensive_idx {
            is_small[i] = true;
        }
        let mut large_groups = Vec::new();
        for (gk, rks) in &group_rings {
            let size: usize = rks.iter().map(|rk| ring_members[rk].len()).sum();
            let large = size > large_cutoff;
            let property_holds = group_property(gk, rks, &ring_members, &costs, &points);
            state.report.groups.push(GroupSummary {
                key: *gk,
                size,
                rings: rks.len(),
                initially_large: large,
                property_holds,
            });
            if large {
                large_groups.push((gk, rks, size));
            } else {
                for rk in rks {
                    for &i in &ring_members[rk] {
                        is_small[i] = true;
                    }
                }
            }
        }
        let small_idx: Vec<usize> = (0..n0).filter(|&i| is_small[i]).collect();
        state.small = small_idx.iter().map(|&i| points[i].id).collect();
        state.coreset = CoresetMap::filled_untracked(
            small_idx
                .iter()
                .map(|&i| CoresetEntry::new(points[i].clone(), Provenance::Small)),
        );
        for &i in &small_idx {
            state.members.insert(
                points[i].id,
                Member {
                    point: points[i].clone(),
                    slot: Slot::Small,
                    order_key: 0,
                },
            );
        }

        for (gk, rks, size) in large_groups {
            let mut group = Group {
                rings: BTreeSet::new(),
                order: OrderTree::new(),
                size_estimate: size,
                initial_estimate: size,
                issued_scale: 0.0,
            };
            for rk in rks {
                let ids: BTreeSet<PointId> =
                    ring_members[rk].iter().map(|&p| points[p].id).collect();
                for &p in &ring_members[rk] {
                    let key = state.rng.random::<u64>();
                    group.order.insert((key, points[p].id));
                    state.members.insert(
                        points[p].id,
                        Member {
                            point: points[p].clone(),
                            slot: Slot::Ring(*rk),
                            order_key: key,
                        },
                    );
                }
                state.rings.insert(
                    *rk,
                    Ring {
                        size_at_placement: ids.len(),
                        members: ids,
                        b: gk.b,
                    },
                );
                group.rings.insert(*rk);
            }
            state.groups.insert(*gk, group);
            state.reconcile_scale(*gk);
        }
        state.report.small = state.small.len();

        for i in 0..state.close.len() {
            state.refresh_center(i);
        }
        state.coreset.reset_batch();
        Ok(state)
    }

    fn add_member(&mut self, point: WeightedPoint, slot: Slot) {
        let id = point.id;
        match slot {
            Slot::Small => {
                self.small.insert(id);
                self.coreset
                    .put(CoresetEntry::new(point.clone(), Provenance::Small));
            }
            Slot::Inserted => {
                self.inserted.insert(id);
                self.coreset
                    .put(CoresetEntry::new(point.clone(), Provenance::Inserted));
            }
            Slot::Close(_) | Slot::Ring(_) => {}
        }
        self.members.insert(
            id,
            Member {
                point,
                slot,
                order_key: 0,
            },
        );
    }

    fn refresh_center(&mut self, i: usize) {
        let c = &self.close[i];
        if c.members.is_empty() {
            self.coreset.take(self.center_ids[i]);
        } else {
            let point = WeightedPoint {
                id: self.center_ids[i],
                loc: self.solution.centers[i].clone(),
                weight: c.weight,
            };
            self.coreset
                .put(CoresetEntry::new(point, Provenance::CloseCenter(i)));
        }
    }

    fn sample_entry(&self, id: PointId, gk: GroupKey, scale: f64) -> CoresetEntry {
        let p = &self.members[&id].point;
        CoresetEntry::new(
            p.with_weight(p.weight * scale),
            Provenance::Sampled {
                j: gk.j,
                b: gk.b,
                w: gk.w,
            },
        )
    }

    fn window_scale(&self, g: &Group) -> f64 {
        let window = self.n_c.min(g.order.len());
        if window == 0 {
            0.0
        } else {
            g.size_estimate as f64 / window as f64
        }
    }

    /// Reissues every sample weight of `gk` if `c / n_c'` changed.
    fn reconcile_scale(&mut self, gk: GroupKey) {
        let g = &self.groups[&gk];
        let scale = self.window_scale(g);
        if scale == g.issued_scale {
            return;
        }
        let window = g.order.first_n(self.n_c);
        self.groups.get_mut(&gk).expect("group").issued_scale = scale;
        self.churn.reissued_entries += window.len();
        for (_, id) in window {
            let e = self.sample_entry(id, gk, scale);
            self.coreset.put(e);
        }
    }

    fn group_remove(&mut self, gk: GroupKey, id: PointId) {
        let key = (self.members[&id].order_key, id);
        let n_c = self.n_c;
        let g = self.groups.get_mut(&gk).expect("group of ring");
        let rank = g.order.rank(&key).expect("member in group order");
        g.order.remove(&key);
        if rank < n_c {
            self.coreset.take(id);
            let entrant = g.order.select(n_c - 1);
            let scale = g.issued_scale;
            if let Some((_, next)) = entrant {
                let e = self.sample_entry(next, gk, scale);
                self.coreset.put(e);
            }
        }
    }

    fn group_insert(&mut self, gk: GroupKey, id: PointId) {
        let key = self.rng.random::<u64>();
        self.members.get_mut(&id).expect("member").order_key = key;
        let n_c = self.n_c;
        let g = self.groups.get_mut(&gk).expect("destination group");
        g.order.insert((key, id));
        let rank = g.order.rank(&(key, id)).expect("just inserted");
        if rank < n_c {
            let pushed = g.order.select(n_c);
            let scale = g.issued_scale;
            let e = self.sample_entry(id, gk, scale);
            self.coreset.put(e);
            if let Some((_, out)) = pushed {
                self.coreset.take(out);
            }
        }
    }

    /// Applies the lazy decrease rule to a group that lost members.
    fn maybe_decrease_estimate(&mut self, gk: GroupKey) {
        let eps = self.epsilon;
        let g = self.groups.get_mut(&gk).expect("group");
        let size = g.order.len();
        if (size as f64) <= (1.0 - eps) * g.size_estimate as f64 {
            assert!(
                !self.strict,
                "size estimate of group {gk:?} decreased within an epoch ({} -> {size})",
                g.size_estimate
            );
            g.size_estimate = size;
            self.churn.estimate_decreases += 1;
        }
    }

    fn maybe_increase_estimate(&mut self, gk: GroupKey) {
        let eps = self.epsilon;
        let g = self.groups.get_mut(&gk).expect("group");
        let size = g.order.len();
        if (1.0 + eps) * g.size_estimate as f64 <= size as f64 {
            g.size_estimate = size;
            self.churn.estimate_increases += 1;
        }
    }

    fn move_ring(&mut self, rk: RingKey, src: GroupKey) {
        let dst = GroupKey {
            j: src.j,
            b: src.b - 3,
            w: src.w,
        };
        let ids: Vec<PointId> = self.rings[&rk].members.iter().copied().collect();
        self.churn.ring_moves += 1;
        for &id in &ids {
            self.group_remove(src, id);
        }
        self.groups.get_mut(&src).expect("source").rings.remove(&rk);
        if self.groups.contains_key(&dst) {
            for &id in &ids {
                self.group_insert(dst, id);
            }
            let ring = self.rings.get_mut(&rk).expect("ring");
            ring.b = dst.b;
            ring.size_at_placement = ids.len();
            self.groups
                .get_mut(&dst)
                .expect("destination")
                .rings
                .insert(rk);
            self.maybe_increase_estimate(dst);
            self.reconcile_scale(dst);
        } else {
            self.rings.remove(&rk);
            for id in ids {
                let m = self.members.get_mut(&id).expect("member");
                m.slot = Slot::Small;
                let e = CoresetEntry::new(m.point.clone(), Provenance::Small);
                self.small.insert(id);
                self.coreset.put(e);
            }
        }
    }

    fn check_budget(&self, ops: usize) -> Result<()> {
        if self.budget_used + ops > self.k {
            Err(Error::NeedsNewEpoch)
        } else {
            Ok(())
        }
    }

    fn insert_inner(&mut self, p: WeightedPoint) {
        self.churn.data_insertions += 1;
        self.budget_used += 1;
        self.add_member(p, Slot::Inserted);
    }

    fn delete_inner(&mut self, id: PointId) {
        self.churn.data_deletions += 1;
        self.budget_used += 1;
        let member = self.members.remove(&id).expect("validated");
        if member.slot != Slot::Inserted {
            self.deleted.insert(id);
        }
        match member.slot {
            Slot::Inserted => {
                self.inserted.remove(&id);
                self.coreset.take(id);
            }
            Slot::Small => {
                self.small.remove(&id);
                self.coreset.take(id);
            }
            Slot::Close(i) => {
                let c = &mut self.close[i];
                c.members.remove(&id);
                c.weight = if c.members.is_empty() {
                    0.0
                } else {
                    c.weight - member.point.weight
                };
                self.refresh_center(i);
            }
            Slot::Ring(rk) => {
                let ring = self.rings.get_mut(&rk).expect("ring of member");
                let gk = GroupKey {
                    j: rk.j,
                    b: ring.b,
                    w: rk.w,
                };
                ring.members.remove(&id);
                let left = ring.members.len();
                // the member is still needed for the order key lookup
                self.members.insert(id, member);
                self.group_remove(gk, id);
                self.members.remove(&id);
                if left == 0 {
                    self.rings.remove(&rk);
                    self.groups.get_mut(&gk).expect("group").rings.remove(&rk);
                } else if gk.b >= 3 && left == 1 << (gk.b - 3) {
                    self.move_ring(rk, gk);
                }
                self.maybe_decrease_estimate(gk);
                self.reconcile_scale(gk);
            }
        }
    }

    fn finish_batch(&mut self) -> CoresetDelta {
        let delta = self.coreset.finish();
        self.churn.coreset_insertions += delta.inserted.len();
        self.churn.coreset_deletions += delta.deleted.len();
        delta
    }

    fn validate_insert(&self, p: &WeightedPoint) -> Result<()> {
        self.metric.validate(&p.loc)?;
        if !(p.weight.is_finite() && p.weight > 0.0) {
            return Err(Error::InvalidWeight {
                id: p.id,
                weight: p.weight,
            });
        }
        if self.members.contains_key(&p.id) {
            return Err(Error::DuplicateId(p.id));
        }
        Ok(())
    }

    /// Adds `p` to the inserted set `I`; the coreset gains exactly `p`.
    pub fn insert(&mut self, p: WeightedPoint) -> Result<CoresetDelta> {
        self.check_budget(1)?;
        self.validate_insert(&p)?;
        self.insert_inner(p);
        Ok(self.finish_batch())
    }

    /// Removes a live point and returns the resulting coreset change.
    pub fn delete(&mut self, id: PointId) -> Result<CoresetDelta> {
        if !self.members.contains_key(&id) {
            return Err(Error::UnknownId(id));
        }
        self.check_budget(1)?;
        self.delete_inner(id);
        Ok(self.finish_batch())
    }

    /// Applies a child's coreset delta (deletions first) as one batch and
    /// returns the net change of this coreset. Nothing is applied if the
    /// batch does not fit in the remaining budget.
    pub fn apply(&mut self, delta: &CoresetDelta) -> Result<CoresetDelta> {
        self.check_budget(delta.len())?;
        let mut gone = FxHashSet::default();
        for id in &delta.deleted {
            if !self.members.contains_key(id) || !gone.insert(*id) {
                return Err(Error::UnknownId(*id));
            }
        }
        let mut fresh = FxHashSet::default();
        for e in &delta.inserted {
            let live = self.members.contains_key(&e.id()) && !gone.contains(&e.id());
            if live || !fresh.insert(e.id()) {
                return Err(Error::DuplicateId(e.id()));
            }
            self.metric.validate(&e.point.loc)?;
        }
        for id in &delta.deleted {
            self.delete_inner(*id);
        }
        for e in &delta.inserted {
            self.insert_inner(e.point.clone());
        }
        Ok(self.finish_batch())
    }

    pub fn extract(&self) -> Coreset {
        self.coreset.snapshot()
    }

    pub fn coreset_len(&self) -> usize {
        self.coreset.len()
    }

    /// The live set `(P₀ \ D) ∪ I`, sorted by id.
    pub fn live_points(&self) -> Vec<WeightedPoint> {
        let mut pts: Vec<_> = self.members.values().map(|m| m.point.clone()).collect();
        pts.sort_by_key(|p| p.id);
        pts
    }

    pub fn contains(&self, id: PointId) -> bool {
        self.members.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn budget_used(&self) -> usize {
        self.budget_used
    }

    pub fn budget(&self) -> usize {
        self.k
    }

    pub fn n0(&self) -> usize {
        self.n0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sample_size(&self) -> usize {
        self.n_c
    }

    pub fn large_cutoff(&self) -> usize {
        self.large_cutoff
    }

    pub fn solution(&self) -> &Solution {
        &self.solution
    }

    pub fn expensive(&self) -> &BTreeSet<PointId> {
        &self.expensive
    }

    pub fn inserted(&self) -> &BTreeSet<PointId> {
        &self.inserted
    }

    pub fn deleted(&self) -> &BTreeSet<PointId> {
        &self.deleted
    }

    pub fn churn(&self) -> &ChurnLog {
        &self.churn
    }

    pub fn init_report(&self) -> &InitReport {
        &self.report
    }

    /// Ids of the members of each close ring, by center index.
    pub fn close_members(&self) -> Vec<Vec<PointId>> {
        self.close
            .iter()
            .map(|c| c.members.iter().copied().collect())
            .collect()
    }

    /// Members of initially large group `key`, in random order.
    pub fn group_members(&self, key: GroupKey) -> Option<Vec<WeightedPoint>> {
        self.groups.get(&key).map(|g| {
            g.order
                .keys()
                .into_iter()
                .map(|(_, id)| self.members[&id].point.clone())
                .collect()
        })
    }

    pub fn large_group_keys(&self) -> Vec<GroupKey> {
        self.groups.keys().copied().collect()
    }

    /// Every ring of a large group with its current `b` and members.
    pub fn rings(&self) -> Vec<(RingKey, u32, Vec<PointId>)> {
        self.rings
            .iter()
            .map(|(rk, r)| (*rk, r.b, r.members.iter().copied().collect()))
            .collect()
    }

    pub fn size_estimate(&self, key: GroupKey) -> Option<usize> {
        self.groups.get(&key).map(|g| g.size_estimate)
    }

    /// Ring sizes, order sizes and size estimates of every large group.
    pub fn group_table(&self) -> Vec<GroupDump> {
        self.groups
            .iter()
            .map(|(gk, g)| GroupDump {
                key: *gk,
                ring_sizes: g
                    .rings
                    .iter()
                    .map(|rk| (rk.center, self.rings[rk].members.len()))
                    .collect(),
                order_size: g.order.len(),
                size_estimate: g.size_estimate,
                initial_estimate: g.initial_estimate,
            })
            .collect()
    }

    pub fn group_table_json(&self) -> String {
        serde_json::to_string_pretty(&self.group_table()).expect("serializable")
    }

    /// Recomputes the coreset from the structure without the incremental
    /// bookkeeping.
    fn coreset_from_scratch(&self) -> BTreeMap<PointId, CoresetEntry> {
        let mut out = BTreeMap::new();
        for id in self.inserted.iter() {
            out.insert(
                *id,
                CoresetEntry::new(self.members[id].point.clone(), Provenance::Inserted),
            );
        }
        for id in self.small.iter() {
            out.insert(
                *id,
                CoresetEntry::new(self.members[id].point.clone(), Provenance::Small),
            );
        }
        for (i, c) in self.close.iter().enumerate() {
            if c.members.is_empty() {
                continue;
            }
            let weight = c
                .members
                .iter()
                .map(|id| self.members[id].point.weight)
                .sum();
            let point = WeightedPoint {
                id: self.center_ids[i],
                loc: self.solution.centers[i].clone(),
                weight,
            };
            out.insert(
                point.id,
                CoresetEntry::new(point, Provenance::CloseCenter(i)),
            );
        }
        for (gk, g) in &self.groups {
            let scale = self.window_scale(g);
            for (_, id) in g.order.first_n(self.n_c) {
                out.insert(id, self.sample_entry(id, *gk, scale));
            }
        }
        out
    }

    /// Verifies every structural invariant; returns a description of the
    /// first violation.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let live = self.n0 - self.deleted.len() + self.inserted.len();
        if self.members.len() != live {
            return Err(format!(
                "live count {} != |P0\\D|+|I| = {live}",
                self.members.len()
            ));
        }
        if self.budget_used > self.k
            || self.budget_used != self.churn.data_insertions + self.churn.data_deletions
        {
            return Err(format!("budget {} inconsistent", self.budget_used));
        }
        let mut placed = 0;
        for id in &self.inserted {
            if self.members.get(id).map(|m| m.slot) != Some(Slot::Inserted) {
                return Err(format!("inserted {id} misplaced"));
            }
        }
        placed += self.inserted.len();
        for id in &self.small {
            if self.members.get(id).map(|m| m.slot) != Some(Slot::Small) {
                return Err(format!("small {id} misplaced"));
            }
        }
        placed += self.small.len();
        let threshold = self.epsilon * self.delta;
        for (i, c) in self.close.iter().enumerate() {
            for id in &c.members {
                let Some(m) = self.members.get(id) else {
                    return Err(format!("close member {id} not live"));
                };
                if m.slot != Slot::Close(i) {
                    return Err(format!("close member {id} misplaced"));
                }
                let cost = m.point.weight
                    * self
                        .metric
                        .cost_unchecked(&m.point.loc, &self.solution.centers[i], self.z);
                if self.delta > 0.0 && cost > threshold {
                    return Err(format!(
                        "close member {id} has cost {cost} > eps*Delta {threshold}"
                    ));
                }
            }
            placed += c.members.len();
        }
        for (gk, g) in &self.groups {
            let mut count = 0;
            for rk in &g.rings {
                let Some(ring) = self.rings.get(rk) else {
                    return Err(format!("group {gk:?} lists missing ring {rk:?}"));
                };
                if ring.b != gk.b || rk.j != gk.j || rk.w != gk.w {
                    return Err(format!("ring {rk:?} filed under {gk:?}"));
                }
                let s = ring.members.len();
                let lower_ok = if gk.b >= 3 {
                    s > 1 << (gk.b - 3)
                } else {
                    s >= 1
                };
                if !lower_ok || s > 1 << (gk.b + 1) {
                    return Err(format!("ring {rk:?} size {s} outside band of b={}", gk.b));
                }
                for id in &ring.members {
                    let Some(m) = self.members.get(id) else {
                        return Err(format!("ring member {id} not live"));
                    };
                    if m.slot != Slot::Ring(*rk) || g.order.rank(&(m.order_key, *id)).is_none() {
                        return Err(format!("ring member {id} misplaced"));
                    }
                    if weight_class(m.point.weight) != rk.w {
                        return Err(format!("ring member {id} in wrong weight class"));
                    }
                }
                count += s;
            }
            if count != g.order.len() {
                return Err(format!(
                    "group {gk:?}: order holds {} but rings {count}",
                    g.order.len()
                ));
            }
            if self.strict && g.size_estimate < g.initial_estimate {
                return Err(format!("group {gk:?}: size estimate decreased"));
            }
            let size = g.order.len() as f64;
            let c = g.size_estimate as f64;
            if size > 0.0
                && (c * (1.0 - self.epsilon) > size * (1.0 + 1e-12)
                    || c * (1.0 + self.epsilon) < size * (1.0 - 1e-12))
            {
                return Err(format!(
                    "group {gk:?}: estimate {c} too far from size {size}"
                ));
            }
            placed += count;
        }
        let ring_total: usize = self.rings.values().map(|r| r.members.len()).sum();
        if placed != self.members.len()
            || ring_total
                + self.inserted.len()
                + self.small.len()
                + self.close.iter().map(|c| c.members.len()).sum::<usize>()
                != self.members.len()
        {
            return Err(format!(
                "partition covers {placed} of {} members",
                self.members.len()
            ));
        }

        let expected = self.coreset_from_scratch();
        if expected.len() != self.coreset.len() {
            return Err(format!(
                "coreset has {} entries, expected {}",
                self.coreset.len(),
                expected.len()
            ));
        }
        for (id, e) in &expected {
            let Some(have) = self.coreset.get(*id) else {
                return Err(format!("coreset misses {id}"));
            };
            let tol = 1e-9 * e.weight().abs().max(1.0);
            if have.provenance != e.provenance
                || (have.weight() - e.weight()).abs() > tol
                || have.point.loc != e.point.loc
            {
                return Err(format!("coreset entry {id} is {have:?}, expected {e:?}"));
            }
            if !(have.weight() > 0.0) {
                return Err(format!("coreset entry {id} has nonpositive weight"));
            }
        }
        Ok(())
    }
}

/// The group condition at initialization, evaluated from the precomputed
/// costs with weights normalized into `[1, 2)`.
fn group_property(
    gk: &GroupKey,
    rks: &[RingKey],
    ring_members: &BTreeMap<RingKey, Vec<usize>>,
    costs: &[f64],
    points: &[WeightedPoint],
) -> bool {
    let norm = 2f64.powi(gk.w as i32);
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    let (mut cmin, mut cmax) = (f64::INFINITY, 0.0f64);
    for rk in rks {
        let mut cluster = 0.0;
        for &p in &ring_members[rk] {
            let c = costs[p] / norm;
            debug_assert!(points[p].weight / norm >= 1.0);
            pmin = pmin.min(c);
            pmax = pmax.max(c);
            cluster += c;
        }
        cmin = cmin.min(cluster);
        cmax = cmax.max(cluster);
    }
    let tol = 1.0 + 1e-12;
    pmax <= POINT_COST_RATIO * pmin * tol && cmax <= CLUSTER_COST_RATIO * cmin * tol
}

#[cfg(test)]
mod tests;
