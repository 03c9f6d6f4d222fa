//! Brute-force and statistical checks used to validate the engine.

use itertools::Itertools;
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::approx::{bicriteria_init, d2_seeding, solve_points, QueryOptions};
use crate::coreset::{Coreset, CoresetEntry, Provenance};
use crate::epoch::ChurnLog;
use crate::error::{Error, Result};
use crate::types::{set_cost, Location, Metric, Objective, PointId, WeightedPoint};

/// Largest number of center subsets [`brute_opt`] will enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Exact discrete optimum: the cheapest `k` centers chosen among the
/// points themselves. Returns the cost and the centers.
pub fn brute_opt(
    points: &[WeightedPoint],
    metric: &Metric,
    k: usize,
    z: Objective,
) -> Result<(f64, Vec<Location>)> {
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    if k == 0 {
        return Err(Error::InvalidParams("k must be positive".into()));
    }
    if k >= points.len() {
        let centers: Vec<Location> = points.iter().map(|p| p.loc.clone()).collect();
        return Ok((0.0, centers));
    }
    let combinations = binomial(points.len(), k);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::InstanceTooLarge { combinations });
    }
    for p in points {
        metric.validate(&p.loc)?;
    }
    let n = points.len();
    // cost of point i against candidate center j, computed once
    let table: Vec<Vec<f64>> = points
        .iter()
        .map(|p| {
            points
                .iter()
                .map(|c| p.weight * metric.cost_unchecked(&p.loc, &c.loc, z))
                .collect()
        })
        .collect();
    let mut best = f64::INFINITY;
    let mut best_set = Vec::new();
    for set in (0..n).combinations(k) {
        let mut total = 0.0;
        for row in &table {
            total += set.iter().map(|&j| row[j]).fold(f64::INFINITY, f64::min);
            if total >= best {
                break;
            }
        }
        if total < best {
            best = total;
            best_set = set;
        }
    }
    Ok((
        best,
        best_set
            .into_iter()
            .map(|j| points[j].loc.clone())
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionReport {
    pub num_solutions: usize,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
    pub worst_solution: Vec<Location>,
}

fn relative_error(full: f64, approx: f64) -> f64 {
    if full == 0.0 {
        if approx == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (approx - full).abs() / full
    }
}

/// Moves every center by a random amount on the scale of a typical
/// point-to-center distance.
fn perturb<R: Rng + ?Sized>(
    centers: &[Location],
    points: &[WeightedPoint],
    metric: &Metric,
    radius: f64,
    rng: &mut R,
) -> Vec<Location> {
    match metric {
        Metric::Euclidean { dim } => {
            let sigma = radius * rng.random::<f64>() / (*dim as f64).sqrt();
            let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
            centers
                .iter()
                .map(|c| match c {
                    Location::Coords(x) => Location::coords(
                        x.iter().map(|v| v + noise.sample(rng)).collect::<Vec<_>>(),
                    ),
                    Location::Index(_) => c.clone(),
                })
                .collect()
        }
        Metric::Matrix(_) => centers
            .iter()
            .map(|c| {
                if rng.random::<bool>() {
                    points[rng.random_range(0..points.len())].loc.clone()
                } else {
                    c.clone()
                }
            })
            .collect(),
    }
}

/// Relative error `|cost(Ω, S) − cost(P, S)| / cost(P, S)` over `trials`
/// center sets drawn in rotation from three families: uniform `k`-subsets
/// of `P`, D^z-seeded solutions, and perturbations of a near-optimal
/// solution.
pub fn distortion<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    coreset: &Coreset,
    metric: &Metric,
    k: usize,
    z: Objective,
    trials: usize,
    rng: &mut R,
) -> Result<DistortionReport> {
    if trials == 0 {
        return Err(Error::InvalidParams("trials must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput);
    }
    let omega = coreset.points();
    let k = k.min(points.len());
    let good = solve_points(points, metric, k, z, &QueryOptions::default(), rng)?;
    let mass: f64 = points.iter().map(|p| p.weight).sum();
    let radius = (good.total_cost / mass).powf(1.0 / z.z() as f64);

    let mut max_rel_err = 0.0f64;
    let mut sum = 0.0;
    let mut worst_solution = Vec::new();
    for t in 0..trials {
        let centers = match t % 3 {
            0 => sample(rng, points.len(), k)
                .into_iter()
                .map(|i| points[i].loc.clone())
                .collect(),
            1 => d2_seeding(points, metric, k, z, rng)?.centers,
            _ => perturb(&good.centers, points, metric, radius, rng),
        };
        let full = set_cost(points, &centers, metric, z)?;
        let approx = set_cost(&omega, &centers, metric, z)?;
        let err = relative_error(full, approx);
        sum += err;
        if err > max_rel_err || worst_solution.is_empty() {
            max_rel_err = max_rel_err.max(err);
            worst_solution = centers;
        }
    }
    Ok(DistortionReport {
        num_solutions: trials,
        max_rel_err,
        mean_rel_err: sum / trials as f64,
        worst_solution,
    })
}

/// Uniform sample of `n_c` members of `group` without replacement, each
/// weighted `w(p) · |G| / n_c`.
pub fn uniform_sample_coreset<R: Rng + ?Sized>(
    group: &[WeightedPoint],
    n_c: usize,
    rng: &mut R,
) -> Result<Coreset> {
    if n_c > group.len() {
        return Err(Error::SampleTooLarge {
            n_c,
            size: group.len(),
        });
    }
    let scale = group.len() as f64 / n_c as f64;
    let entries = sample(rng, group.len(), n_c)
        .into_iter()
        .map(|i| {
            let p = &group[i];
            CoresetEntry::new(p.with_weight(p.weight * scale), Provenance::Uniform)
        })
        .collect();
    Ok(Coreset::from_entries(entries))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdditiveReport {
    pub holds: bool,
    /// Largest `|cost(Ω,S) − cost(G,S)| / (cost(G,A) + cost(G,S))`.
    pub worst_ratio: f64,
}

/// Checks `|cost(Ω,S) − cost(G,S)| ≤ ε·(cost(G,A) + cost(G,S))` for every
/// `S` in `solutions`.
pub fn additive_form(
    group: &[WeightedPoint],
    omega: &Coreset,
    a: &[Location],
    solutions: &[Vec<Location>],
    metric: &Metric,
    z: Objective,
    epsilon: f64,
) -> Result<AdditiveReport> {
    let base = set_cost(group, a, metric, z)?;
    let pts = omega.points();
    let mut worst_ratio = 0.0f64;
    for s in solutions {
        let full = set_cost(group, s, metric, z)?;
        let approx = set_cost(&pts, s, metric, z)?;
        let denom = base + full;
        let ratio = if denom == 0.0 {
            if approx == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            (approx - full).abs() / denom
        };
        worst_ratio = worst_ratio.max(ratio);
    }
    Ok(AdditiveReport {
        holds: worst_ratio <= epsilon,
        worst_ratio,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChurnAudit {
    pub pass: bool,
    pub insertions: usize,
    pub deletions: usize,
    pub data_insertions: usize,
    pub data_deletions: usize,
}

/// An epoch with `n_i` insertions and `n_d` deletions may insert at most
/// `n_i + n_d` coreset entries and delete at most `n_d`.
pub fn churn_audit(log: &ChurnLog, n_i: usize, n_d: usize) -> ChurnAudit {
    ChurnAudit {
        pass: log.coreset_insertions <= n_i + n_d && log.coreset_deletions <= n_d,
        insertions: log.coreset_insertions,
        deletions: log.coreset_deletions,
        data_insertions: n_i,
        data_deletions: n_d,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityViolation {
    pub removed: Vec<PointId>,
    pub cost_after_removal: f64,
    pub opt_k_after_removal: f64,
    pub link: &'static str,
}

/// Exhaustive check that a `2k`-center solution stays good under removal
/// of up to `k` points.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityReport {
    /// `cost(P, A)`.
    pub cost_a: f64,
    /// `opt_{2k}(P)` over centers in `P`.
    pub opt_2k: f64,
    /// Measured approximation factor `cost(P, A) / opt_{2k}(P)`.
    pub c: f64,
    pub subsets_checked: usize,
    pub violations: Vec<StabilityViolation>,
}

/// Builds `A` with [`bicriteria_init`] and checks, for every `D ⊂ P` with
/// `|D| ≤ k`:
///
/// * `cost(P \ D, A) ≤ bound · opt_k(P \ D)`;
/// * the chain `cost(P \ D, A) ≤ cost(P, A) = c · opt_{2k}(P)` and
///   `opt_{2k}(P) ≤ opt_k(P \ D)`, which together give
///   `cost(P \ D, A) ≤ c · opt_k(P \ D)`.
pub fn bicriteria_stability<R: Rng + ?Sized>(
    points: &[WeightedPoint],
    metric: &Metric,
    k: usize,
    z: Objective,
    bound: f64,
    rng: &mut R,
) -> Result<StabilityReport> {
    let a = bicriteria_init(points, metric, k, z, rng)?.centers;
    let cost_a = set_cost(points, &a, metric, z)?;
    let (opt_2k, _) = brute_opt(points, metric, 2 * k, z)?;
    let c = if opt_2k == 0.0 { 1.0 } else { cost_a / opt_2k };
    let tol = |x: f64| x * (1.0 + 1e-9) + 1e-12;
    let mut violations = Vec::new();
    let mut subsets_checked = 0;
    for size in 0..=k.min(points.len() - 1) {
        for removed in (0..points.len()).combinations(size) {
            subsets_checked += 1;
            let rest: Vec<WeightedPoint> = points
                .iter()
                .enumerate()
                .filter(|(i, _)| !removed.contains(i))
                .map(|(_, p)| p.clone())
                .collect();
            let lhs = set_cost(&rest, &a, metric, z)?;
            let (opt_k, _) = brute_opt(&rest, metric, k, z)?;
            let mut fail = |link: &'static str| {
                violations.push(StabilityViolation {
                    removed: removed.iter().map(|&i| points[i].id).collect(),
                    cost_after_removal: lhs,
                    opt_k_after_removal: opt_k,
                    link,
                })
            };
            if lhs > tol(bound * opt_k) {
                fail("bound");
            }
            if lhs > tol(cost_a) {
                fail("removal can only lower the cost");
            }
            if opt_2k > tol(opt_k) {
                fail("removed points plus a k-solution form a 2k-solution");
            }
            if lhs > tol(c * opt_k) {
                fail("chain");
            }
        }
    }
    Ok(StabilityReport {
        cost_a,
        opt_2k,
        c,
        subsets_checked,
        violations,
    })
}
