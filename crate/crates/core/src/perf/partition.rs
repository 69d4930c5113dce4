//! Static contiguous work partitioning.
//!
//! Every parallel loop in this crate — first-touch initialization, the ELLPACK
//! row kernels, the micro-kernels — splits its index space with the same
//! function. That identity is what makes first-touch placement effective: the
//! worker that initializes a block is the worker that later computes on it.

use std::ops::Range;

/// Contiguous block of `n` items owned by worker `k` out of `parts`.
/// Remainder items go to the lowest-numbered workers, one each.
pub fn partition(n: usize, parts: usize, k: usize) -> Range<usize> {
    debug_assert!(parts > 0 && k < parts);
    let base = n / parts;
    let rem = n % parts;
    let start = k * base + k.min(rem);
    let end = start + base + usize::from(k < rem);
    start..end
}

/// Like [`partition`] but with every block boundary rounded up to a multiple
/// of `unit` (the final block still ends at `n`). Used by the cache-aligned
/// kernels so that per-worker chunks start on cache-line boundaries.
pub fn partition_aligned(n: usize, parts: usize, k: usize, unit: usize) -> Range<usize> {
    debug_assert!(unit > 0);
    let round = |x: usize| -> usize {
        let r = x.div_ceil(unit) * unit;
        r.min(n)
    };
    let ideal = partition(n, parts, k);
    let start = if k == 0 { 0 } else { round(ideal.start) };
    let end = if k == parts - 1 { n } else { round(ideal.end) };
    start..end.max(start)
}
