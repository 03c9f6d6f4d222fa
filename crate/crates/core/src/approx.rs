//! Static approximation algorithms: D^z seeding, single-swap local search,
//! the 2k-center bicriteria solution used to open an epoch, and the solver
//! run on coresets at query time.

use rand::Rng;
use serde::Serialize;

use crate::coreset::Coreset;
use crate::error::{Error, Result};
use crate::ops;
use crate::types::{nearest, sq_dist_slices, Location, Metric, Objective, WeightedPoint};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Solution {
    pub centers: Vec<Location>,
    /// Nearest center of each input point, aligned with the input slice.
    pub assignment: Vec<usize>,
    pub per_cluster_cost: Vec<f64>,
    pub total_cost: f64,
}

impl Solution {
    /// Assigns every point to its nearest center (lowest index on ties).
    pub fn evaluate(
        points: &[WeightedPoint],
        centers: Vec<Location>,
        metric: &Metric,
        z: Objective,
    ) -> Solution {
        let mut assignment = Vec::with_capacity(points.len());
        let mut per_cluster_cost = vec![0.0; centers.len()];
        for p in points {
            let (d, i) = nearest(&p.loc, &centers, metric, z);
            assignment.push(i);
            per_cluster_cost[i] += p.weight * d;
        }
        let total_cost = per_cluster_cost.iter().sum();
        Solution {
            centers,
            assignment,
            per_cluster_cost,
            total_cost,
        }
    }

    /// Builds a solution from known nearest-center costs and indices.
    fn from_nearest(
        points: &[WeightedPoint],
        centers: Vec<Location>,
        cost: &[f64],
        owner: Vec<usize>,
    ) -> Solution {
        let mut per_cluster_cost = vec![0.0; centers.len()];
        for ((p, d), &i) in points.iter().zip(cost).zip(&owner) {
            per_cluster_cost[i] += p.weight * d;
        }
        let total_cost = per_cluster_cost.iter().sum();
        Solution {
            centers,
            assignment: owner,
            per_cluster_cost,
            total_cost,
        }
    }

    pub fn k(&self) -> usize {
        self.centers.len()
    }
}

/// Draws an index with probability proportional to `mass[i]`. Indices with
/// zero mass are never returned.
fn sample_by_mass<R: Rng + ?Sized>(mass: &[f64], rng: &mut R) -> Option<usize> {
    sample_with_total(mass, mass.iter().sum(), rng)
}

/// [`sample_by_mass`] with the sum of `mass` already known.
fn sample_with_total<R: Rng + ?Sized>(mass: &[f64], total: f64, rng: &mut R) -> Option<usize> {
    if !(total > 0.0) {
        return None;
    }
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last = None;
    for (i, &m) in mass.iter().enumerate() {
        if m > 0.0 {
            acc += m;
            last = Some(i);
            if acc > target {
                return Some(i);
            }
        }
    }
    last
}

/// k-means++ style seeding with `t` centers drawn from `points`.
///
/// The first center is drawn proportionally to weight, every following one
/// proportionally to `w(p) · cost(p, current centers)`. When every residual
/// cost is zero the next center is drawn by weight among points not yet
/// chosen. With `t ≥ |P|` every point becomes a center.
pub fn d2_seeding<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    metric: &Metric,
    t: usize,
    z: Objective,
    rng: &mut R,
) -> Result<Solution> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if t == 0 {
        return Err(Error::InvalidParams(
            "target center count must be positive".into(),
        ));
    }
    if t >= points.len() {
        let centers = points.iter().map(|p| p.loc.clone()).collect();
        return Ok(Solution::evaluate(points, centers, metric, z));
    }

    let n = points.len();
    let mut chosen = vec![false; n];
    let weights: Vec<f64> = points.iter().map(|p| p.weight).collect();
    let first = sample_by_mass(&weights, rng).ok_or(Error::EmptyInput)?;
    chosen[first] = true;
    let mut centers = vec![points[first].loc.clone()];
    ops::add(n as u64);
    let mut residual: Vec<f64> = points
        .iter()
        .map(|p| metric.cost_uncounted(&p.loc, &centers[0], z))
        .collect();
    let mut owner = vec![0; n];

    let mut mass: Vec<f64> = points
        .iter()
        .zip(&residual)
        .map(|(p, r)| p.weight * r)
        .collect();
    let mut total: f64 = mass.iter().sum();
    while centers.len() < t {
        let next = match sample_with_total(&mass, total, rng) {
            Some(i) => i,
            None => {
                for i in 0..n {
                    mass[i] = if chosen[i] { 0.0 } else { points[i].weight };
                }
                let i = sample_by_mass(&mass, rng).expect("t < |P| leaves an unchosen point");
                for (m, (p, r)) in mass.iter_mut().zip(points.iter().zip(&residual)) {
                    *m = p.weight * r;
                }
                i
            }
        };
        chosen[next] = true;
        let c = points[next].loc.clone();
        let slot = centers.len();
        ops::add(n as u64);
        total = 0.0;
        for (i, p) in points.iter().enumerate() {
            let d = metric.cost_uncounted(&p.loc, &c, z);
            if d < residual[i] {
                residual[i] = d;
                owner[i] = slot;
                mass[i] = p.weight * d;
            }
            total += mass[i];
        }
        centers.push(c);
    }
    Ok(Solution::from_nearest(points, centers, &residual, owner))
}

/// Nearest and second-nearest center of every point, over a cached
/// point-by-center cost table.
struct TwoNearest {
    t: usize,
    cost: Vec<f64>,
    d1: Vec<f64>,
    n1: Vec<usize>,
    d2: Vec<f64>,
    n2: Vec<usize>,
}

#[inline]
fn closer(d: f64, i: usize, d_ref: f64, i_ref: usize) -> bool {
    d < d_ref || (d == d_ref && i < i_ref)
}

impl TwoNearest {
    fn compute(
        points: &[WeightedPoint],
        centers: &[Location],
        metric: &Metric,
        z: Objective,
    ) -> Self {
        let n = points.len();
        let t = centers.len();
        ops::add((n * t) as u64);
        let mut cost = Vec::with_capacity(n * t);
        for p in points {
            cost.extend(centers.iter().map(|c| metric.cost_uncounted(&p.loc, c, z)));
        }
        let mut s = TwoNearest {
            t,
            cost,
            d1: vec![f64::INFINITY; n],
            n1: vec![usize::MAX; n],
            d2: vec![f64::INFINITY; n],
            n2: vec![usize::MAX; n],
        };
        for p in 0..n {
            s.rescan(p);
        }
        s
    }

    fn rescan(&mut self, p: usize) {
        let (mut d1, mut n1, mut d2, mut n2) =
            (f64::INFINITY, usize::MAX, f64::INFINITY, usize::MAX);
        for (i, &d) in self.cost[p * self.t..(p + 1) * self.t].iter().enumerate() {
            if closer(d, i, d1, n1) {
                d2 = d1;
                n2 = n1;
                d1 = d;
                n1 = i;
            } else if closer(d, i, d2, n2) {
                d2 = d;
                n2 = i;
            }
        }
        self.d1[p] = d1;
        self.n1[p] = n1;
        self.d2[p] = d2;
        self.n2[p] = n2;
    }

    /// Replaces center `c`, whose costs to every point are `costs`.
    fn replace(&mut self, c: usize, costs: &[f64]) {
        for (p, &d) in costs.iter().enumerate() {
            self.cost[p * self.t + c] = d;
            if self.n1[p] == c || self.n2[p] == c {
                self.rescan(p);
            } else if closer(d, c, self.d1[p], self.n1[p]) {
                self.d2[p] = self.d1[p];
                self.n2[p] = self.n1[p];
                self.d1[p] = d;
                self.n1[p] = c;
            } else if closer(d, c, self.d2[p], self.n2[p]) {
                self.d2[p] = d;
                self.n2[p] = c;
            }
        }
    }

    fn column(&self, c: usize) -> Vec<f64> {
        self.cost.iter().skip(c).step_by(self.t).copied().collect()
    }

    /// Fills `mass` with each point's weighted cost and returns the sum.
    fn fill_mass(&self, points: &[WeightedPoint], mass: &mut [f64]) -> f64 {
        let mut total = 0.0;
        for ((m, p), d) in mass.iter_mut().zip(points).zip(&self.d1) {
            *m = p.weight * d;
            total += *m;
        }
        total
    }
}

/// Euclidean coordinates of every point in one contiguous buffer.
struct Flat {
    dim: usize,
    data: Vec<f64>,
}

impl Flat {
    fn new(points: &[WeightedPoint], metric: &Metric) -> Option<Self> {
        let Metric::Euclidean { dim } = *metric else {
            return None;
        };
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            match &p.loc {
                Location::Coords(x) if x.len() == dim => data.extend_from_slice(x),
                _ => return None,
            }
        }
        Some(Flat { dim, data })
    }

    #[inline(always)]
    fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

/// Cost after swapping in a candidate whose cost to point `p` is `dist(p)`,
/// before removing any center. `extra[c]` receives the increase caused by
/// also removing center `c`.
#[inline(always)]
fn swap_gain(
    points: &[WeightedPoint],
    near: &TwoNearest,
    dc: &mut [f64],
    extra: &mut [f64],
    dist: impl Fn(usize) -> f64,
) -> f64 {
    extra.iter_mut().for_each(|e| *e = 0.0);
    let mut base = 0.0;
    let nearest = near.d1.iter().zip(&near.d2).zip(&near.n1);
    for (i, ((p, slot), ((&d1, &d2), &n1))) in
        points.iter().zip(dc.iter_mut()).zip(nearest).enumerate()
    {
        let d = dist(i);
        *slot = d;
        let keep = d.min(d1);
        base += p.weight * keep;
        extra[n1] += p.weight * (d.min(d2) - keep);
    }
    base
}

/// Default swap budget `2k · ⌈log2(log2(k) + 2)⌉`.
pub fn default_swaps(k: usize) -> usize {
    let k = k.max(1);
    let inner = (k as f64).log2() + 2.0;
    2 * k * inner.log2().ceil() as usize
}

/// Single-swap local search.
///
/// Each attempt draws a candidate point proportionally to its current cost,
/// finds the center whose replacement by the candidate yields the lowest
/// cost, and keeps the swap only if the total cost strictly decreases.
pub fn local_search<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    metric: &Metric,
    sol: &Solution,
    z: Objective,
    max_swaps: usize,
    rng: &mut R,
) -> Solution {
    if max_swaps == 0 || points.is_empty() || sol.centers.is_empty() {
        return sol.clone();
    }
    let n = points.len();
    let t = sol.centers.len();
    let mut centers = sol.centers.clone();
    let flat = Flat::new(points, metric);
    let mut near = TwoNearest::compute(points, &centers, metric, z);
    let mut mass = vec![0.0; n];
    let mut total = near.fill_mass(points, &mut mass);
    let mut dc = vec![0.0; n];
    let mut extra = vec![0.0; t];

    for _ in 0..max_swaps {
        let Some(cand) = sample_with_total(&mass, total, rng) else {
            break;
        };
        let cand_loc = points[cand].loc.clone();
        ops::add(n as u64);
        let base = match (&flat, z) {
            (Some(f), Objective::KMeans) => swap_gain(points, &near, &mut dc, &mut extra, |p| {
                sq_dist_slices(f.row(p), f.row(cand))
            }),
            (Some(f), Objective::KMedian) => swap_gain(points, &near, &mut dc, &mut extra, |p| {
                sq_dist_slices(f.row(p), f.row(cand)).sqrt()
            }),
            (None, _) => swap_gain(points, &near, &mut dc, &mut extra, |p| {
                metric.cost_uncounted(&points[p].loc, &cand_loc, z)
            }),
        };
        let mut best = 0;
        for i in 1..t {
            if extra[i] < extra[best] {
                best = i;
            }
        }
        if !(base + extra[best] < total) {
            continue;
        }

        let old = std::mem::replace(&mut centers[best], cand_loc);
        let old_costs = near.column(best);
        near.replace(best, &dc);
        let new_total = near.fill_mass(points, &mut mass);
        if new_total < total {
            total = new_total;
        } else {
            centers[best] = old;
            near.replace(best, &old_costs);
            total = near.fill_mass(points, &mut mass);
        }
    }
    Solution::from_nearest(points, centers, &near.d1, near.n1)
}

/// Bicriteria solution with `min(2k, |P|)` centers: D^z seeding refined by
/// [`default_swaps`]`(k)` local-search steps.
pub fn bicriteria_init<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    metric: &Metric,
    k: usize,
    z: Objective,
    rng: &mut R,
) -> Result<Solution> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let t = (2 * k).max(1);
    let seeded = d2_seeding(points, metric, t, z, rng)?;
    if t >= points.len() {
        return Ok(seeded);
    }
    Ok(local_search(
        points,
        metric,
        &seeded,
        z,
        default_swaps(k),
        rng,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryOptions {
    /// Centers must be coreset points. Forced on in matrix mode.
    pub restrict_to_coreset: bool,
    /// Local-search budget; `None` uses [`default_swaps`].
    pub local_search_swaps: Option<usize>,
    pub lloyd_rounds: usize,
    pub lloyd_tolerance: f64,
}

impl Default for QueryOptions {
    fn default() -> Self {
        QueryOptions {
            restrict_to_coreset: false,
            local_search_swaps: None,
            lloyd_rounds: 20,
            lloyd_tolerance: 1e-4,
        }
    }
}

/// Weighted centroid refinement. A round is kept only if it lowers the cost.
pub fn lloyd(
    points: &[WeightedPoint],
    metric: &Metric,
    sol: Solution,
    z: Objective,
    rounds: usize,
    tolerance: f64,
) -> Solution {
    let Metric::Euclidean { dim } = metric else {
        return sol;
    };
    let mut current = sol;
    for _ in 0..rounds {
        let t = current.centers.len();
        let mut sums = vec![vec![0.0; *dim]; t];
        let mut mass = vec![0.0; t];
        for (p, &c) in points.iter().zip(&current.assignment) {
            if let Location::Coords(x) = &p.loc {
                for (s, v) in sums[c].iter_mut().zip(x.iter()) {
                    *s += p.weight * v;
                }
                mass[c] += p.weight;
            }
        }
        let centers = current
            .centers
            .iter()
            .enumerate()
            .map(|(i, old)| {
                if mass[i] > 0.0 {
                    Location::coords(sums[i].iter().map(|s| s / mass[i]).collect::<Vec<_>>())
                } else {
                    old.clone()
                }
            })
            .collect();
        let next = Solution::evaluate(points, centers, metric, z);
        if !(next.total_cost < current.total_cost) {
            break;
        }
        let improvement = (current.total_cost - next.total_cost) / current.total_cost;
        current = next;
        if improvement < tolerance {
            break;
        }
    }
    current
}

/// Solves the k-clustering problem on a coreset: D^z seeding and local
/// search over coreset points, followed by Lloyd rounds in Euclidean mode
/// unless centers are restricted to the coreset.
pub fn query_solve<R: Rng + ?Sized>(
    coreset: &Coreset,
    metric: &Metric,
    k: usize,
    z: Objective,
    opts: &QueryOptions,
    rng: &mut R,
) -> Result<Solution> {
    if coreset.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    let points = coreset.points();
    solve_points(&points, metric, k, z, opts, rng)
}

/// The same solver on a plain weighted point set.
pub fn solve_points<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    metric: &Metric,
    k: usize,
    z: Objective,
    opts: &QueryOptions,
    rng: &mut R,
) -> Result<Solution> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let seeded = d2_seeding(points, metric, k, z, rng)?;
    let swaps = opts.local_search_swaps.unwrap_or_else(|| default_swaps(k));
    let searched = local_search(points, metric, &seeded, z, swaps, rng);
    if opts.restrict_to_coreset || !metric.is_euclidean() {
        return Ok(searched);
    }
    Ok(lloyd(
        points,
        metric,
        searched,
        z,
        opts.lloyd_rounds,
        opts.lloyd_tolerance,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(xs: &[f64]) -> Vec<WeightedPoint> {
        xs.iter()
            .enumerate()
            .map(|(i, &x)| WeightedPoint::unit(i as u64, vec![x]))
            .collect()
    }

    #[test]
    fn seeding_all_points_when_t_covers_input() {
        let pts = line(&[0.0, 1.0, 5.0]);
        let m = Metric::euclidean(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let sol = d2_seeding(&pts, &m, 3, Objective::KMeans, &mut rng).unwrap();
        assert_eq!(sol.total_cost, 0.0);
        assert_eq!(sol.centers.len(), 3);
        let sol = d2_seeding(&pts[..1], &m, 1, Objective::KMeans, &mut rng).unwrap();
        assert_eq!(sol.total_cost, 0.0);
        assert_eq!(sol.centers, vec![pts[0].loc.clone()]);
    }

    #[test]
    fn seeding_never_duplicates_a_covered_location() {
        // two distinct locations, many copies: the second center must be the
        // other location since every copy of the first has zero residual
        let mut pts = Vec::new();
        for i in 0..10 {
            pts.push(WeightedPoint::unit(i, vec![0.0]));
        }
        pts.push(WeightedPoint::unit(10, vec![3.0]));
        let m = Metric::euclidean(1);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let sol = d2_seeding(&pts, &m, 2, Objective::KMeans, &mut rng).unwrap();
            assert_eq!(sol.total_cost, 0.0, "seed {seed}");
        }
    }

    #[test]
    fn zero_swaps_is_identity() {
        let pts = line(&[0.0, 1.0, 10.0, 11.0, 30.0]);
        let m = Metric::euclidean(1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sol = d2_seeding(&pts, &m, 2, Objective::KMeans, &mut rng).unwrap();
        assert_eq!(
            local_search(&pts, &m, &sol, Objective::KMeans, 0, &mut rng),
            sol
        );
    }

    #[test]
    fn local_search_fixes_bad_seed() {
        let pts = line(&[0.0, 1.0, 10.0, 11.0]);
        let m = Metric::euclidean(1);
        let bad = Solution::evaluate(
            &pts,
            vec![Location::coords(vec![0.0]), Location::coords(vec![1.0])],
            &m,
            Objective::KMeans,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = local_search(&pts, &m, &bad, Objective::KMeans, 20, &mut rng);
        assert!(out.total_cost <= bad.total_cost);
        assert_eq!(out.total_cost, 2.0);
    }

    #[test]
    fn bicriteria_small_input_is_exact() {
        let pts = line(&[0.0, 4.0, 9.0]);
        let m = Metric::euclidean(1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sol = bicriteria_init(&pts, &m, 2, Objective::KMeans, &mut rng).unwrap();
        assert_eq!(sol.total_cost, 0.0);
    }

    #[test]
    fn default_swap_budget() {
        assert_eq!(default_swaps(1), 2);
        assert_eq!(default_swaps(2), 8);
        assert_eq!(default_swaps(10), 60);
        assert_eq!(default_swaps(50), 300);
    }

    #[test]
    fn ties_go_to_lowest_center() {
        let pts = line(&[5.0]);
        let m = Metric::euclidean(1);
        let sol = Solution::evaluate(
            &pts,
            vec![Location::coords(vec![4.0]), Location::coords(vec![6.0])],
            &m,
            Objective::KMedian,
        );
        assert_eq!(sol.assignment, vec![0]);
    }

    #[test]
    fn lloyd_moves_to_centroid() {
        let pts = line(&[0.0, 2.0]);
        let m = Metric::euclidean(1);
        let sol = Solution::evaluate(
            &pts,
            vec![Location::coords(vec![0.0])],
            &m,
            Objective::KMeans,
        );
        let out = lloyd(&pts, &m, sol, Objective::KMeans, 20, 1e-4);
        assert_eq!(out.centers, vec![Location::coords(vec![1.0])]);
        assert_eq!(out.total_cost, 2.0);
    }
}
