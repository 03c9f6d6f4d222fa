//! Checker for the group condition under which uniform sampling is a
//! coreset: point costs agree within a factor 2 and non-empty cluster costs
//! within a factor 8.

use serde::Serialize;

use crate::types::{nearest, Location, Metric, Objective, WeightedPoint};

pub const POINT_COST_RATIO: f64 = 2.0;
pub const CLUSTER_COST_RATIO: f64 = 8.0;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum PropertyViolation {
    PointCost { min: f64, max: f64 },
    ClusterCost { min: f64, max: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PropertyReport {
    pub holds: bool,
    pub violations: Vec<PropertyViolation>,
}

fn ratio_ok(min: f64, max: f64, bound: f64) -> bool {
    if max == 0.0 {
        return true;
    }
    max <= bound * min * (1.0 + 1e-12)
}

/// Checks the condition for `members` (weights already normalized into
/// `[1, 2)`) against centers `centers`.
pub fn check_property(
    members: &[WeightedPoint],
    centers: &[Location],
    metric: &Metric,
    z: Objective,
) -> PropertyReport {
    let mut violations = Vec::new();
    if members.is_empty() || centers.is_empty() {
        return PropertyReport {
            holds: true,
            violations,
        };
    }
    let mut cluster = vec![0.0; centers.len()];
    let mut occupied = vec![false; centers.len()];
    let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
    for p in members {
        let (d, i) = nearest(&p.loc, centers, metric, z);
        let c = p.weight * d;
        pmin = pmin.min(c);
        pmax = pmax.max(c);
        cluster[i] += c;
        occupied[i] = true;
    }
    if !ratio_ok(pmin, pmax, POINT_COST_RATIO) {
        violations.push(PropertyViolation::PointCost {
            min: pmin,
            max: pmax,
        });
    }
    let (mut cmin, mut cmax) = (f64::INFINITY, 0.0f64);
    for (c, _) in cluster.iter().zip(&occupied).filter(|(_, o)| **o) {
        cmin = cmin.min(*c);
        cmax = cmax.max(*c);
    }
    if !ratio_ok(cmin, cmax, CLUSTER_COST_RATIO) {
        violations.push(PropertyViolation::ClusterCost {
            min: cmin,
            max: cmax,
        });
    }
    PropertyReport {
        holds: violations.is_empty(),
        violations,
    }
}
