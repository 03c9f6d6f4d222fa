//! Primitive-operation counter.
//!
//! Counts distance evaluations, order-structure operations and coreset entry
//! changes on the current thread. Work is measured by differencing
//! [`count`] around a call, which keeps the figures independent of wall
//! clock noise.

use std::cell::Cell;

thread_local! {
    static OPS: Cell<u64> = const { Cell::new(0) };
}

#[inline]
pub fn add(n: u64) {
    OPS.with(|c| c.set(c.get().wrapping_add(n)));
}

pub fn count() -> u64 {
    OPS.with(|c| c.get())
}

/// Runs `f` and returns its result along with the operations it performed.
pub fn measure<T>(f: impl FnOnce() -> T) -> (T, u64) {
    let before = count();
    let out = f();
    (out, count() - before)
}
