//! Weighted coresets and the deltas exchanged between tree levels.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::Result;
use crate::types::{set_cost, Location, Metric, Objective, PointId, WeightedPoint};

/// Which rule produced a coreset entry's weight.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum Provenance {
    /// Raw point stored at a leaf.
    Leaf,
    /// Inserted during the current epoch.
    Inserted,
    /// Member of the small set (E₀ or an initially small group).
    Small,
    /// Center standing in for its close ring.
    CloseCenter(usize),
    /// Uniform sample of group `(j, b, w)`.
    Sampled { j: u32, b: u32, w: u32 },
    /// Standalone uniform sample of a group.
    Uniform,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoresetEntry {
    /// The represented point; `point.weight` is the coreset weight.
    pub point: WeightedPoint,
    pub provenance: Provenance,
}

impl CoresetEntry {
    pub fn new(point: WeightedPoint, provenance: Provenance) -> Self {
        CoresetEntry { point, provenance }
    }

    pub fn id(&self) -> PointId {
        self.point.id
    }

    pub fn weight(&self) -> f64 {
        self.point.weight
    }

    fn same_as(&self, other: &CoresetEntry) -> bool {
        self.point.weight.to_bits() == other.point.weight.to_bits()
            && self.provenance == other.provenance
            && self.point.loc == other.point.loc
    }
}

/// Immutable coreset snapshot, entries sorted by id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Coreset {
    pub entries: Vec<CoresetEntry>,
}

impl Coreset {
    pub fn from_entries(mut entries: Vec<CoresetEntry>) -> Self {
        entries.sort_by_key(|e| e.id());
        Coreset { entries }
    }

    /// Unit-provenance coreset of raw points (`Leaf`), weights kept.
    pub fn from_points(points: &[WeightedPoint]) -> Self {
        Self::from_entries(
            points
                .iter()
                .map(|p| CoresetEntry::new(p.clone(), Provenance::Leaf))
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight()).sum()
    }

    pub fn points(&self) -> Vec<WeightedPoint> {
        self.entries.iter().map(|e| e.point.clone()).collect()
    }

    pub fn cost(&self, centers: &[Location], metric: &Metric, z: Objective) -> Result<f64> {
        set_cost(&self.points(), centers, metric, z)
    }

    /// Applies a delta in place (deletions first).
    pub fn apply(&mut self, delta: &CoresetDelta) {
        let mut map: BTreeMap<PointId, CoresetEntry> =
            self.entries.drain(..).map(|e| (e.id(), e)).collect();
        for id in &delta.deleted {
            map.remove(id);
        }
        for e in &delta.inserted {
            map.insert(e.id(), e.clone());
        }
        self.entries = map.into_values().collect();
    }
}

/// Net change of a coreset. A weight change shows up as a deletion and an
/// insertion of the same id.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CoresetDelta {
    pub deleted: Vec<PointId>,
    pub inserted: Vec<CoresetEntry>,
}

impl CoresetDelta {
    pub fn len(&self) -> usize {
        self.deleted.len() + self.inserted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.deleted.is_empty() && self.inserted.is_empty()
    }

    pub fn insertion(entry: CoresetEntry) -> Self {
        CoresetDelta {
            deleted: Vec::new(),
            inserted: vec![entry],
        }
    }

    pub fn deletion(id: PointId) -> Self {
        CoresetDelta {
            deleted: vec![id],
            inserted: Vec::new(),
        }
    }
}

/// Materialized coreset that records the net effect of a batch of writes.
///
/// Writes inside one batch that cancel out (an entry inserted and then
/// removed again, or reweighted back to its original weight) produce no
/// delta.
#[derive(Clone, Debug, Default)]
pub(crate) struct CoresetMap {
    entries: BTreeMap<PointId, CoresetEntry>,
    touched: BTreeMap<PointId, Option<CoresetEntry>>,
    /// Writes are not recorded until the next [`CoresetMap::reset_batch`].
    untracked: bool,
}

impl CoresetMap {
    /// A map that skips batch bookkeeping while it is being filled.
    pub fn untracked() -> Self {
        CoresetMap {
            untracked: true,
            ..Self::default()
        }
    }

    /// An untracked map holding `entries`.
    pub fn filled_untracked(entries: impl IntoIterator<Item = CoresetEntry>) -> Self {
        CoresetMap {
            entries: entries.into_iter().map(|e| (e.id(), e)).collect(),
            untracked: true,
            ..Self::default()
        }
    }

    pub fn put(&mut self, entry: CoresetEntry) {
        let id = entry.id();
        let prev = self.entries.insert(id, entry);
        if !self.untracked {
            self.touched.entry(id).or_insert(prev);
        }
    }

    pub fn take(&mut self, id: PointId) {
        let prev = self.entries.remove(&id);
        if !self.untracked {
            self.touched.entry(id).or_insert(prev);
        }
    }

    pub fn get(&self, id: PointId) -> Option<&CoresetEntry> {
        self.entries.get(&id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Closes the current batch and returns its net delta.
    pub fn finish(&mut self) -> CoresetDelta {
        let mut delta = CoresetDelta::default();
        for (id, before) in std::mem::take(&mut self.touched) {
            let after = self.entries.get(&id);
            match (before, after) {
                (Some(b), Some(a)) if b.same_as(a) => {}
                (Some(_), Some(a)) => {
                    delta.deleted.push(id);
                    delta.inserted.push(a.clone());
                }
                (Some(_), None) => delta.deleted.push(id),
                (None, Some(a)) => delta.inserted.push(a.clone()),
                (None, None) => {}
            }
        }
        crate::ops::add(delta.len() as u64);
        delta
    }

    /// Drops batch bookkeeping without producing a delta.
    pub fn reset_batch(&mut self) {
        self.touched.clear();
        self.untracked = false;
    }

    pub fn snapshot(&self) -> Coreset {
        Coreset {
            entries: self.entries.values().cloned().collect(),
        }
    }
}
