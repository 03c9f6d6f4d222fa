//! Order-statistics treap over random-order keys.
//!
//! Members of a group are kept sorted by an independent uniform 64-bit key
//! (ties broken by id). The treap answers rank and select queries and
//! enumerates the first `n` members, all in expected logarithmic time.
//! Heap priorities are a hash of the key, so the shape is independent of
//! insertion order without consuming extra randomness.

use crate::ops;
use crate::types::PointId;

pub type OrderKey = (u64, PointId);

const NIL: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Node {
    key: OrderKey,
    prio: u64,
    left: u32,
    right: u32,
    size: u32,
}

#[derive(Clone, Debug, Default)]
pub struct OrderTree {
    nodes: Vec<Node>,
    free: Vec<u32>,
    root: Option<u32>,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

impl OrderTree {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.root
            .map_or(0, |r| self.nodes[r as usize].size as usize)
    }

    pub fn is_empty(&self) -> bool {
        self.root.is_none()
    }

    fn size(&self, t: u32) -> u32 {
        if t == NIL {
            0
        } else {
            self.nodes[t as usize].size
        }
    }

    fn pull(&mut self, t: u32) {
        let (l, r) = {
            let n = &self.nodes[t as usize];
            (n.left, n.right)
        };
        let s = 1 + self.size(l) + self.size(r);
        self.nodes[t as usize].size = s;
    }

    /// Splits into keys `< key` (or `<= key` when `inclusive`) and the rest.
    fn split(&mut self, t: u32, key: &OrderKey, inclusive: bool) -> (u32, u32) {
        if t == NIL {
            return (NIL, NIL);
        }
        let node_key = self.nodes[t as usize].key;
        let goes_left = if inclusive {
            node_key <= *key
        } else {
            node_key < *key
        };
        if goes_left {
            let right = self.nodes[t as usize].right;
            let (a, b) = self.split(right, key, inclusive);
            self.nodes[t as usize].right = a;
            self.pull(t);
            (t, b)
        } else {
            let left = self.nodes[t as usize].left;
            let (a, b) = self.split(left, key, inclusive);
            self.nodes[t as usize].left = b;
            self.pull(t);
            (a, t)
        }
    }

    fn merge(&mut self, a: u32, b: u32) -> u32 {
        if a == NIL {
            return b;
        }
        if b == NIL {
            return a;
        }
        if self.nodes[a as usize].prio >= self.nodes[b as usize].prio {
            let ar = self.nodes[a as usize].right;
            let m = self.merge(ar, b);
            self.nodes[a as usize].right = m;
            self.pull(a);
            a
        } else {
            let bl = self.nodes[b as usize].left;
            let m = self.merge(a, bl);
            self.nodes[b as usize].left = m;
            self.pull(b);
            b
        }
    }

    fn alloc(&mut self, key: OrderKey) -> u32 {
        let node = Node {
            key,
            prio: splitmix(key.0 ^ splitmix(key.1 .0)),
            left: NIL,
            right: NIL,
            size: 1,
        };
        if let Some(slot) = self.free.pop() {
            self.nodes[slot as usize] = node;
            slot
        } else {
            self.nodes.push(node);
            (self.nodes.len() - 1) as u32
        }
    }

    /// Inserts `key`; returns false if it was already present.
    pub fn insert(&mut self, key: OrderKey) -> bool {
        ops::add(1);
        if self.rank(&key).is_some() {
            return false;
        }
        let root = self.root.unwrap_or(NIL);
        let (l, r) = self.split(root, &key, false);
        let n = self.alloc(key);
        let left = self.merge(l, n);
        let t = self.merge(left, r);
        self.root = Some(t);
        true
    }

    /// Removes `key`; returns false if it was absent.
    pub fn remove(&mut self, key: &OrderKey) -> bool {
        ops::add(1);
        let Some(root) = self.root else {
            return false;
        };
        let (l, rest) = self.split(root, key, false);
        let (mid, r) = self.split(rest, key, true);
        let t = self.merge(l, r);
        self.root = if t == NIL { None } else { Some(t) };
        if mid == NIL {
            return false;
        }
        self.free.push(mid);
        true
    }

    /// Number of keys strictly smaller than `key`, if `key` is present.
    pub fn rank(&self, key: &OrderKey) -> Option<usize> {
        let mut t = self.root.unwrap_or(NIL);
        let mut acc = 0usize;
        while t != NIL {
            let n = &self.nodes[t as usize];
            match key.cmp(&n.key) {
                std::cmp::Ordering::Less => t = n.left,
                std::cmp::Ordering::Equal => return Some(acc + self.size(n.left) as usize),
                std::cmp::Ordering::Greater => {
                    acc += self.size(n.left) as usize + 1;
                    t = n.right;
                }
            }
        }
        None
    }

    /// Key at 0-based position `rank`.
    pub fn select(&self, rank: usize) -> Option<OrderKey> {
        ops::add(1);
        if rank >= self.len() {
            return None;
        }
        let mut t = self.root.unwrap_or(NIL);
        let mut r = rank as u32;
        while t != NIL {
            let n = &self.nodes[t as usize];
            let ls = self.size(n.left);
            if r < ls {
                t = n.left;
            } else if r == ls {
                return Some(n.key);
            } else {
                r -= ls + 1;
                t = n.right;
            }
        }
        None
    }

    /// The first `n` keys in order.
    pub fn first_n(&self, n: usize) -> Vec<OrderKey> {
        let mut out = Vec::with_capacity(n.min(self.len()));
        let mut stack = Vec::new();
        let mut t = self.root.unwrap_or(NIL);
        while out.len() < n && (t != NIL || !stack.is_empty()) {
            while t != NIL {
                stack.push(t);
                t = self.nodes[t as usize].left;
            }
            let Some(top) = stack.pop() else { break };
            out.push(self.nodes[top as usize].key);
            t = self.nodes[top as usize].right;
        }
        ops::add(out.len() as u64);
        out
    }

    pub fn keys(&self) -> Vec<OrderKey> {
        self.first_n(self.len())
    }
}
