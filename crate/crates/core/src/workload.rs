//! Synthetic update streams.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::stream::StreamOp;

/// Side of the cube blob centers are drawn from.
const SPAN: f64 = 100.0;
const BLOB_SPREAD: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    InsertOnly,
    /// After each insert beyond `window` live points, the oldest is deleted.
    SlidingWindow {
        window: usize,
    },
    /// Each step deletes a random live point with probability `p_delete`.
    RandomMix {
        p_delete: f64,
    },
    /// Inserts `blobs` Gaussian blobs, then deletes all but one of them
    /// blob by blob, querying before and after each deletion.
    BlobChurn {
        blobs: usize,
    },
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let bad = || Error::InvalidParams(format!("invalid profile '{s}'"));
        let profile = match name {
            "insert_only" if arg.is_none() => Profile::InsertOnly,
            "sliding_window" => Profile::SlidingWindow {
                window: arg.ok_or_else(bad)?.parse().map_err(|_| bad())?,
            },
            "random_mix" => {
                let p_delete: f64 = arg.map_or(Ok(0.3), str::parse).map_err(|_| bad())?;
                if !(0.0..1.0).contains(&p_delete) {
                    return Err(bad());
                }
                Profile::RandomMix { p_delete }
            }
            "blob_churn" => {
                let blobs: usize = arg.map_or(Ok(3), str::parse).map_err(|_| bad())?;
                if blobs == 0 {
                    return Err(bad());
                }
                Profile::BlobChurn { blobs }
            }
            _ => return Err(bad()),
        };
        Ok(profile)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::InsertOnly => write!(f, "insert_only"),
            Profile::SlidingWindow { window } => write!(f, "sliding_window:{window}"),
            Profile::RandomMix { p_delete } => write!(f, "random_mix:{p_delete}"),
            Profile::BlobChurn { blobs } => write!(f, "blob_churn:{blobs}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    pub profile: Profile,
    /// Number of insertions.
    pub n: usize,
    pub dim: usize,
    /// Number of mixture components, and `k` of generated queries.
    pub k: usize,
    /// Emit `Q k` after every this many ops.
    pub query_every: Option<usize>,
    pub seed: u64,
}

struct Mixture {
    centers: Vec<Vec<f64>>,
    noise: Normal<f64>,
}

impl Mixture {
    fn new(components: usize, dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let centers = (0..components)
            .map(|_| (0..dim).map(|_| rng.random::<f64>() * SPAN).collect())
            .collect();
        Mixture {
            centers,
            noise: Normal::new(0.0, BLOB_SPREAD).expect("positive spread"),
        }
    }

    fn draw(&self, component: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.centers[component]
            .iter()
            .map(|c| c + self.noise.sample(rng))
            .collect()
    }
}

struct Builder {
    ops: Vec<StreamOp>,
    live: VecDeque<u64>,
    next_id: u64,
    since_query: usize,
    query_every: Option<usize>,
    k: usize,
}

impl Builder {
    fn push(&mut self, op: StreamOp) {
        self.ops.push(op);
        self.since_query += 1;
        if self.query_every == Some(self.since_query) {
            self.ops.push(StreamOp::Query { k: self.k });
            self.since_query = 0;
        }
    }

    fn insert(&mut self, coords: Vec<f64>) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.live.push_back(id);
        self.push(StreamOp::Insert { id, coords });
        id
    }

    fn delete(&mut self, id: u64) {
        self.push(StreamOp::Delete { id });
    }
}

/// Generates a stream; the same spec always gives the same ops.
pub fn gen_workload(spec: &WorkloadSpec) -> Result<Vec<StreamOp>> {
    if spec.dim == 0 || spec.k == 0 {
        return Err(Error::InvalidParams(
            "dimension and k must be positive".into(),
        ));
    }
    if spec.query_every == Some(0) {
        return Err(Error::InvalidParams(
            "query interval must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let components = match spec.profile {
        Profile::BlobChurn { blobs } => blobs,
        _ => spec.k,
    };
    let mix = Mixture::new(components, spec.dim, &mut rng);
    let mut b = Builder {
        ops: Vec::new(),
        live: VecDeque::new(),
        next_id: 0,
        since_query: 0,
        query_every: spec.query_every,
        k: spec.k,
    };
    match spec.profile {
        Profile::InsertOnly => {
            for _ in 0..spec.n {
                let c = rng.random_range(0..components);
                b.insert(mix.draw(c, &mut rng));
            }
        }
        Profile::SlidingWindow { window } => {
            for _ in 0..spec.n {
                let c = rng.random_range(0..components);
                b.insert(mix.draw(c, &mut rng));
                if b.live.len() > window {
                    let id = b.live.pop_front().expect("nonempty");
                    b.delete(id);
                }
            }
        }
        Profile::RandomMix { p_delete } => {
            let mut inserted = 0;
            while inserted < spec.n {
                if !b.live.is_empty() && rng.random::<f64>() < p_delete {
                    let at = rng.random_range(0..b.live.len());
                    let id = b.live.swap_remove_back(at).expect("in range");
                    b.delete(id);
                } else {
                    let c = rng.random_range(0..components);
                    b.insert(mix.draw(c, &mut rng));
                    inserted += 1;
                }
            }
        }
        Profile::BlobChurn { blobs } => {
            let mut members: Vec<Vec<u64>> = vec![Vec::new(); blobs];
            for i in 0..spec.n {
                let c = i % blobs;
                let id = b.insert(mix.draw(c, &mut rng));
                members[c].push(id);
            }
            for blob in members.iter().take(blobs - 1).filter(|m| !m.is_empty()) {
                b.ops.push(StreamOp::Query { k: spec.k });
                for id in blob {
                    b.delete(*id);
                }
                b.ops.push(StreamOp::Query { k: spec.k });
            }
        }
    }
    Ok(b.ops)
}
