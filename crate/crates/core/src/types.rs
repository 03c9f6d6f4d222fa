//! Points, weights, metrics and the `(k, z)` cost function.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops;

/// Identity of a point. Ids at or above [`PointId::SYNTHETIC_BASE`] are
/// reserved for center entries created inside coresets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub u64);

impl PointId {
    pub const SYNTHETIC_BASE: u64 = 1 << 63;

    pub fn is_synthetic(self) -> bool {
        self.0 >= Self::SYNTHETIC_BASE
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Allocator for synthetic ids (center entries of coresets).
#[derive(Clone, Debug)]
pub struct SyntheticIds {
    next: u64,
}

impl Default for SyntheticIds {
    fn default() -> Self {
        SyntheticIds {
            next: PointId::SYNTHETIC_BASE,
        }
    }
}

impl SyntheticIds {
    pub fn next_id(&mut self) -> PointId {
        let id = PointId(self.next);
        self.next += 1;
        id
    }
}

/// Where a point lives: coordinates in Euclidean mode, a row of the distance
/// matrix in matrix mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Location {
    Coords(Arc<[f64]>),
    Index(usize),
}

impl Location {
    pub fn coords(values: impl Into<Vec<f64>>) -> Self {
        Location::Coords(values.into().into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPoint {
    pub id: PointId,
    pub loc: Location,
    pub weight: f64,
}

impl WeightedPoint {
    pub fn new(id: u64, coords: impl Into<Vec<f64>>, weight: f64) -> Self {
        WeightedPoint {
            id: PointId(id),
            loc: Location::coords(coords),
            weight,
        }
    }

    /// Unit-weight point in Euclidean mode.
    pub fn unit(id: u64, coords: impl Into<Vec<f64>>) -> Self {
        Self::new(id, coords, 1.0)
    }

    /// Point referring to row `index` of a distance matrix.
    pub fn indexed(id: u64, index: usize, weight: f64) -> Self {
        WeightedPoint {
            id: PointId(id),
            loc: Location::Index(index),
            weight,
        }
    }

    pub fn with_weight(&self, weight: f64) -> Self {
        WeightedPoint {
            id: self.id,
            loc: self.loc.clone(),
            weight,
        }
    }
}

/// Symmetric, zero-diagonal, nonnegative distance table satisfying the
/// triangle inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend(row);
        }
        let m = DistanceMatrix { n, data };
        m.validate()?;
        Ok(m)
    }

    /// Parses whitespace-separated rows, one per line. Blank lines and
    /// `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| {
                        Error::InvalidMatrix(format!("line {}: bad number {tok:?}", lineno + 1))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        Self::new(rows)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            if self.get(i, i) != 0.0 {
                return Err(Error::InvalidMatrix(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = self.get(i, j);
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidMatrix(format!("bad entry at ({i}, {j})")));
                }
                if v != self.get(j, i) {
                    return Err(Error::InvalidMatrix(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let direct = self.get(i, j);
                    let detour = self.get(i, l) + self.get(l, j);
                    if direct > detour + 1e-9 * direct.max(1.0) {
                        return Err(Error::InvalidMatrix(format!(
                            "triangle inequality fails for ({i}, {j}) via {l}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }
}

#[derive(Clone, Debug)]
pub enum Metric {
    Euclidean { dim: usize },
    Matrix(Arc<DistanceMatrix>),
}

impl Metric {
    pub fn euclidean(dim: usize) -> Self {
        Metric::Euclidean { dim }
    }

    pub fn matrix(m: DistanceMatrix) -> Self {
        Metric::Matrix(Arc::new(m))
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Metric::Euclidean { .. })
    }

    /// Checks that `loc` belongs to this metric's space.
    pub fn validate(&self, loc: &Location) -> Result<()> {
        match (self, loc) {
            (Metric::Euclidean { dim }, Location::Coords(c)) => {
                if c.len() != *dim {
                    Err(Error::DimensionMismatch {
                        expected: *dim,
                        got: c.len(),
                    })
                } else {
                    Ok(())
                }
            }
            (Metric::Matrix(m), Location::Index(i)) => {
                if *i >= m.len() {
                    Err(Error::IndexOutOfRange {
                        index: *i,
                        n: m.len(),
                    })
                } else {
                    Ok(())
                }
            }
            _ => Err(Error::LocationKind),
        }
    }

    pub fn dist(&self, a: &Location, b: &Location) -> Result<f64> {
        self.validate(a)?;
        self.validate(b)?;
        Ok(self.dist_unchecked(a, b))
    }

    pub(crate) fn dist_unchecked(&self, a: &Location, b: &Location) -> f64 {
        match self {
            Metric::Euclidean { .. } => sq_dist(a, b).sqrt(),
            Metric::Matrix(m) => m.get(index(a), index(b)),
        }
    }

    /// `dist(a, b)^z` without validation. Counts one primitive operation.
    #[inline]
    pub(crate) fn cost_unchecked(&self, a: &Location, b: &Location, z: Objective) -> f64 {
        ops::add(1);
        self.cost_uncounted(a, b, z)
    }

    /// As [`Metric::cost_unchecked`]; the caller accounts for the operation.
    #[inline(always)]
    pub(crate) fn cost_uncounted(&self, a: &Location, b: &Location, z: Objective) -> f64 {
        match (self, z) {
            (Metric::Euclidean { .. }, Objective::KMeans) => sq_dist(a, b),
            (Metric::Euclidean { .. }, Objective::KMedian) => sq_dist(a, b).sqrt(),
            (Metric::Matrix(m), Objective::KMeans) => {
                let d = m.get(index(a), index(b));
                d * d
            }
            (Metric::Matrix(m), Objective::KMedian) => m.get(index(a), index(b)),
        }
    }
}

#[inline(always)]
fn sq_dist(a: &Location, b: &Location) -> f64 {
    match (a, b) {
        (Location::Coords(x), Location::Coords(y)) => sq_dist_slices(x, y),
        _ => panic!("euclidean metric given a matrix location"),
    }
}

#[inline(always)]
pub(crate) fn sq_dist_slices(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let mut s = 0.0;
    for i in 0..n {
        let d = x[i] - y[i];
        s += d * d;
    }
    s
}

#[inline]
fn index(a: &Location) -> usize {
    match a {
        Location::Index(i) => *i,
        Location::Coords(_) => panic!("matrix metric given a coordinate location"),
    }
}

/// The exponent `z`: k-median (`z = 1`) or k-means (`z = 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Objective {
    KMedian,
    KMeans,
}

impl Objective {
    pub fn z(self) -> u32 {
        match self {
            Objective::KMedian => 1,
            Objective::KMeans => 2,
        }
    }

    pub fn from_z(z: u32) -> Result<Self> {
        match z {
            1 => Ok(Objective::KMedian),
            2 => Ok(Objective::KMeans),
            other => Err(Error::InvalidParams(format!(
                "z must be 1 or 2, got {other}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub k: usize,
    pub z: Objective,
    pub epsilon: f64,
    pub delta: f64,
    pub seed: u64,
}

impl CostParams {
    pub fn new(k: usize, z: Objective, epsilon: f64) -> Self {
        CostParams {
            k,
            z,
            epsilon,
            delta: 0.1,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0 / 3.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must lie in (0, 1/3], got {}",
                self.epsilon
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "delta must lie in (0, 1), got {}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// Nearest center of `loc` (lowest index on ties) and its unweighted cost.
pub(crate) fn nearest(
    loc: &Location,
    centers: &[Location],
    metric: &Metric,
    z: Objective,
) -> (f64, usize) {
    ops::add(centers.len() as u64);
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (i, c) in centers.iter().enumerate() {
        let d = metric.cost_uncounted(loc, c, z);
        if d < best {
            best = d;
            arg = i;
        }
    }
    (best, arg)
}

/// `w(p) · min_s dist(p, s)^z` together with the index of the nearest center.
pub fn point_cost(
    p: &WeightedPoint,
    centers: &[Location],
    metric: &Metric,
    z: Objective,
) -> Result<(f64, usize)> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    metric.validate(&p.loc)?;
    for c in centers {
        metric.validate(c)?;
    }
    let (d, i) = nearest(&p.loc, centers, metric, z);
    Ok((p.weight * d, i))
}

/// `Σ_p w(p) · min_s dist(p, s)^z`.
pub fn set_cost(
    points: &[WeightedPoint],
    centers: &[Location],
    metric: &Metric,
    z: Objective,
) -> Result<f64> {
    if centers.is_empty() {
        return Err(Error::EmptyCenters);
    }
    for c in centers {
        metric.validate(c)?;
    }
    let mut total = 0.0;
    for p in points {
        metric.validate(&p.loc)?;
        total += p.weight * nearest(&p.loc, centers, metric, z).0;
    }
    Ok(total)
}
