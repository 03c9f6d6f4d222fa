//! Replays a stream through a [`Clusterer`] and reports JSON Lines.
//!
//! Records, one JSON object per line, each tagged by `record`:
//! `header`, `op_applied`, `epoch_restart`, `rebuild`, `query`, `summary`.
//! With timing disabled the output depends only on the stream, the
//! configuration and the seed.

use std::collections::HashMap;
use std::io::Write;
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::clusterer::{Clusterer, ClustererStats};
use crate::epoch::CoresetConfig;
use crate::error::{Error, Result};
use crate::stream::{Located, StreamOp};
use crate::tree::TreeEvent;
use crate::types::{CostParams, Location, Metric, PointId};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: CostParams,
    pub metric: Metric,
    pub coreset: CoresetConfig,
    /// Also evaluate every query on the full live dataset.
    pub exact: bool,
    /// Include wall-clock timings.
    pub timing: bool,
}

impl RunConfig {
    pub fn new(params: CostParams, metric: Metric) -> Self {
        RunConfig {
            params,
            metric,
            coreset: CoresetConfig::default(),
            exact: false,
            timing: true,
        }
    }

    fn echo(&self) -> Value {
        let metric = match &self.metric {
            Metric::Euclidean { dim } => json!({ "kind": "euclidean", "dim": dim }),
            Metric::Matrix(m) => json!({ "kind": "matrix", "points": m.len() }),
        };
        json!({
            "k": self.params.k,
            "z": self.params.z.z(),
            "epsilon": self.params.epsilon,
            "delta": self.params.delta,
            "seed": self.params.seed,
            "metric": metric,
            "coreset_scale": self.coreset.scale,
            "exact": self.exact,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QueryRecord {
    pub index: usize,
    pub k: usize,
    pub live: usize,
    pub coreset_size: usize,
    pub estimated_cost: f64,
    pub exact_cost: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub ops: usize,
    pub live: usize,
    pub stats: ClustererStats,
    pub queries: Vec<QueryRecord>,
}

/// Location of a stream point under `metric`: coordinates, or a single
/// non-negative integer naming a matrix row.
pub fn location_for(metric: &Metric, coords: &[f64]) -> Result<Location> {
    match metric {
        Metric::Euclidean { .. } => Ok(Location::coords(coords.to_vec())),
        Metric::Matrix(_) => match coords {
            [x] if *x >= 0.0 && x.fract() == 0.0 => Ok(Location::Index(*x as usize)),
            _ => Err(Error::LocationKind),
        },
    }
}

fn emit(out: &mut impl Write, value: &Value) -> Result<()> {
    serde_json::to_writer(&mut *out, value).map_err(|e| Error::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Replays `ops`, writing records to `out`.
pub fn run(ops: &[Located], config: &RunConfig, out: &mut impl Write) -> Result<RunSummary> {
    let mut engine = Clusterer::with_config(
        config.params.clone(),
        config.metric.clone(),
        config.coreset.clone(),
    )?;
    emit(
        out,
        &json!({ "record": "header", "schema": SCHEMA_VERSION, "tool": "dynclust", "config": config.echo() }),
    )?;
    let mut ids: HashMap<u64, PointId> = HashMap::new();
    let mut queries = Vec::new();
    for (index, located) in ops.iter().enumerate() {
        let at = |e: Error| Error::AtOp {
            index,
            line: located.line,
            source: Box::new(e),
        };
        let started = Instant::now();
        let ops_before = engine.stats().update_ops;
        let mut record = match &located.op {
            StreamOp::Insert { id, coords } => {
                let loc = location_for(&config.metric, coords).map_err(at)?;
                let assigned = engine.insert(loc, 1.0).map_err(at)?;
                ids.insert(*id, assigned);
                json!({ "record": "op_applied", "index": index, "op": "insert", "id": id })
            }
            StreamOp::Delete { id } => {
                let assigned = ids
                    .remove(id)
                    .ok_or_else(|| at(Error::UnknownId(PointId(*id))))?;
                engine.delete(assigned).map_err(at)?;
                json!({ "record": "op_applied", "index": index, "op": "delete", "id": id })
            }
            StreamOp::Query { k } => {
                let q = if config.exact {
                    engine.query_exact(Some(*k))
                } else {
                    engine.query(Some(*k))
                }
                .map_err(at)?;
                let rec = QueryRecord {
                    index,
                    k: *k,
                    live: engine.len(),
                    coreset_size: q.coreset_size,
                    estimated_cost: q.estimated_cost,
                    exact_cost: q.exact_cost,
                };
                let mut v = serde_json::to_value(&rec).expect("serializable");
                v["record"] = json!("query");
                v["centers"] = serde_json::to_value(q.centers()).expect("serializable");
                queries.push(rec);
                v
            }
        };
        let elapsed = started.elapsed();
        if !matches!(located.op, StreamOp::Query { .. }) {
            record["live"] = json!(engine.len());
            record["work"] = json!(engine.stats().update_ops - ops_before);
        }
        if config.timing {
            record["nanos"] = json!(elapsed.as_nanos() as u64);
        }
        emit(out, &record)?;
        for event in engine.drain_events() {
            let mut v = serde_json::to_value(&event).expect("serializable");
            let name = match event {
                TreeEvent::EpochRestart { .. } => "epoch_restart",
                TreeEvent::Rebuild { .. } => "rebuild",
            };
            v["record"] = json!(name);
            v["index"] = json!(index);
            if let Some(obj) = v.as_object_mut() {
                obj.remove("event");
            }
            emit(out, &v)?;
        }
    }
    let summary = RunSummary {
        ops: ops.len(),
        live: engine.len(),
        stats: engine.stats().clone(),
        queries,
    };
    emit(
        out,
        &json!({
            "record": "summary",
            "ops": summary.ops,
            "live": summary.live,
            "stats": summary.stats,
            "tree": engine.tree_stats(),
        }),
    )?;
    out.flush()?;
    Ok(summary)
}
