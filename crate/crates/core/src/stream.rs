//! Plain-text update streams.
//!
//! One op per line, whitespace separated:
//!
//! ```text
//! # comment
//! I <id> <x1> ... <xd>
//! D <id>
//! Q <k>
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum StreamOp {
    Insert { id: u64, coords: Vec<f64> },
    Delete { id: u64 },
    Query { k: usize },
}

/// An op with the 1-based line it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Located {
    pub line: usize,
    pub op: StreamOp,
}

fn parse_error(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_line(line: usize, text: &str) -> Result<Option<StreamOp>> {
    let text = text.split('#').next().unwrap_or("");
    let mut fields = text.split_whitespace();
    let Some(tag) = fields.next() else {
        return Ok(None);
    };
    let int = |s: Option<&str>, what: &str| -> Result<u64> {
        let s = s.ok_or_else(|| parse_error(line, format!("missing {what}")))?;
        s.parse()
            .map_err(|_| parse_error(line, format!("bad {what} '{s}'")))
    };
    let op = match tag {
        "I" => {
            let id = int(fields.next(), "id")?;
            let coords = fields
                .map(|s| {
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| parse_error(line, format!("bad coordinate '{s}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            if coords.is_empty() {
                return Err(parse_error(line, "insert without coordinates"));
            }
            return Ok(Some(StreamOp::Insert { id, coords }));
        }
        "D" => StreamOp::Delete {
            id: int(fields.next(), "id")?,
        },
        "Q" => StreamOp::Query {
            k: int(fields.next(), "k")? as usize,
        },
        other => return Err(parse_error(line, format!("unknown op '{other}'"))),
    };
    if let Some(extra) = fields.next() {
        return Err(parse_error(line, format!("unexpected field '{extra}'")));
    }
    Ok(Some(op))
}

/// Parses and validates a stream: insert ids are unique, deletes refer to
/// live points, all inserts share one dimension, query `k` is positive.
pub fn parse_stream(text: &str) -> Result<Vec<Located>> {
    let mut ops = Vec::new();
    let mut seen = HashSet::new();
    let mut live = HashSet::new();
    let mut dim = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let Some(op) = parse_line(line, raw)? else {
            continue;
        };
        match &op {
            StreamOp::Insert { id, coords } => {
                if !seen.insert(*id) {
                    return Err(parse_error(line, format!("duplicate insert id {id}")));
                }
                if *dim.get_or_insert(coords.len()) != coords.len() {
                    return Err(parse_error(
                        line,
                        format!(
                            "expected {} coordinates, got {}",
                            dim.unwrap_or(0),
                            coords.len()
                        ),
                    ));
                }
                live.insert(*id);
            }
            StreamOp::Delete { id } => {
                if !live.remove(id) {
                    return Err(parse_error(line, format!("delete of unknown id {id}")));
                }
            }
            StreamOp::Query { k } => {
                if *k == 0 {
                    return Err(parse_error(line, "query k must be positive"));
                }
            }
        }
        ops.push(Located { line, op });
    }
    Ok(ops)
}

/// Writes ops in the stream format; floats use the shortest representation
/// that parses back to the same value.
pub fn format_stream<'a>(ops: impl IntoIterator<Item = &'a StreamOp>) -> String {
    let mut out = String::new();
    for op in ops {
        match op {
            StreamOp::Insert { id, coords } => {
                let _ = write!(out, "I {id}");
                for c in coords {
                    let _ = write!(out, " {c:?}");
                }
                out.push('\n');
            }
            StreamOp::Delete { id } => {
                let _ = writeln!(out, "D {id}");
            }
            StreamOp::Query { k } => {
                let _ = writeln!(out, "Q {k}");
            }
        }
    }
    out
}
