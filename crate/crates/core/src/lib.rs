//! Fully dynamic coresets for k-median and k-means.
//!
//! Points are inserted and deleted one at a time; a merge-and-reduce tree of
//! epoch structures keeps an ε-coreset of the live set whose content changes
//! by a polylogarithmic number of entries per update. Queries solve the
//! clustering problem on that coreset.

pub mod approx;
pub mod clusterer;
pub mod compare;
pub mod coreset;
pub mod epoch;
pub mod error;
pub mod ops;
pub mod oracle;
pub mod replay;
pub mod stream;
pub mod tree;
pub mod types;
pub mod workload;

pub use approx::{QueryOptions, Solution};
pub use clusterer::{Clusterer, ClustererStats, QueryResult};
pub use compare::{bench_compare, CompareReport, StrategyReport};
pub use coreset::{Coreset, CoresetDelta, CoresetEntry, Provenance};
pub use epoch::{CoresetConfig, EpochState, SizeMode};
pub use error::{Error, Result};
pub use replay::{run, RunConfig, RunSummary};
pub use stream::{format_stream, parse_stream, Located, StreamOp};
pub use tree::{MrTree, TreeEvent, TreeStats};
pub use types::{
    point_cost, set_cost, CostParams, DistanceMatrix, Location, Metric, Objective, PointId,
    SyntheticIds, WeightedPoint,
};
pub use workload::{gen_workload, Profile, WorkloadSpec};
