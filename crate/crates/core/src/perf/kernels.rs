//! Paired baseline/tuned micro-kernels for the three data-path optimizations.
//!
//! Each kernel exists in two variants that compute the same arithmetic:
//!
//! * `sr` — strength reduction: the baseline divides inside the loop, the
//!   tuned variant multiplies by a precomputed reciprocal. Outputs agree to
//!   within 4 ulp per element (bitwise when the scale is a power of two).
//! * `ft` — first touch: the baseline initializes its arrays serially before
//!   the parallel update loop; the tuned variant first-touches them in
//!   parallel with the identical partition the update loop uses. Checksums
//!   are exactly equal.
//! * `ma` — memory alignment: the baseline streams through deliberately
//!   misaligned buffers with arbitrary chunk boundaries; the tuned variant
//!   uses cache-line-aligned buffers with per-worker chunks padded to line
//!   multiples. Checksums are exactly equal.
//!
//! Only the update loop is timed; allocation and initialization stay outside
//! the clock.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::perf::alloc::{allocate, AlignedBuf, AllocPolicy, InitMode, CACHE_LINE};
use crate::perf::partition::{partition, partition_aligned};
use crate::perf::pool::ThreadPool;

/// Which side of an optimization pair a run exercises.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Baseline,
    Tuned,
}

impl Variant {
    pub const BOTH: [Variant; 2] = [Variant::Baseline, Variant::Tuned];
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Baseline => "baseline",
            Variant::Tuned => "tuned",
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KernelResult {
    pub checksum: f64,
    pub elapsed_seconds: f64,
    pub variant: Variant,
    pub threads: usize,
}

/// Number of f64 elements per cache line.
const ELEMS_PER_LINE: usize = CACHE_LINE / std::mem::size_of::<f64>();

/// Deterministic, strictly positive input pattern shared by both variants.
#[inline]
fn input_value(i: usize) -> f64 {
    1.0 + (i % 101) as f64 * 0.017
}

fn elapsed_positive(start: Instant) -> f64 {
    start.elapsed().as_secs_f64().max(1e-9)
}

/// Serial sum in index order, so the checksum is independent of the worker
/// count and identical across variants whenever the elements are.
fn checksum(buf: &[f64]) -> f64 {
    let mut s = 0.0;
    for &v in buf {
        s += v;
    }
    s
}

/// Strength-reduction pair: `out[i] = in[i] / scale` (baseline) versus
/// `r = 1/scale; out[i] = in[i] * r` (tuned).
pub fn kernel_sr(n: usize, scale: f64, variant: Variant, pool: &ThreadPool) -> Result<KernelResult> {
    let (out, elapsed) = sr_run(n, scale, variant, pool)?;
    Ok(KernelResult {
        checksum: checksum(&out),
        elapsed_seconds: elapsed,
        variant,
        threads: pool.threads(),
    })
}

/// Runs the strength-reduction body and returns the raw output, letting
/// callers compare the two variants element by element.
pub fn sr_outputs(n: usize, scale: f64, variant: Variant, pool: &ThreadPool) -> Result<AlignedBuf<f64>> {
    sr_run(n, scale, variant, pool).map(|(out, _)| out)
}

fn sr_run(
    n: usize,
    scale: f64,
    variant: Variant,
    pool: &ThreadPool,
) -> Result<(AlignedBuf<f64>, f64)> {
    if n == 0 {
        return Err(Error::InvalidDimension { n, reason: "kernel size must be positive" });
    }
    if scale == 0.0 {
        return Err(Error::InvalidScale);
    }
    let policy = AllocPolicy::for_variant(variant);
    let input = fill_pattern(n, &policy, pool)?;
    let out = allocate(n, &policy, pool)?;
    let ip = input.as_ptr() as usize;
    let op = out.send_ptr();
    let start = Instant::now();
    pool.run_partitioned(n, |_, range| {
        let input = ip as *const f64;
        let out = op.get();
        match variant {
            Variant::Baseline => {
                for i in range {
                    unsafe { *out.add(i) = *input.add(i) / scale };
                }
            }
            Variant::Tuned => {
                let r = 1.0 / scale;
                for i in range {
                    unsafe { *out.add(i) = *input.add(i) * r };
                }
            }
        }
    });
    let elapsed = elapsed_positive(start);
    Ok((out, elapsed))
}

/// Allocates under `policy` and then overwrites with the shared input
/// pattern, each worker writing its own partition so page ownership is
/// preserved.
fn fill_pattern(n: usize, policy: &AllocPolicy, pool: &ThreadPool) -> Result<AlignedBuf<f64>> {
    let buf = allocate(n, policy, pool)?;
    let ptr = buf.send_ptr();
    match policy.init_mode {
        InitMode::SerialFill => {
            for i in 0..n {
                unsafe { *ptr.get().add(i) = input_value(i) };
            }
        }
        InitMode::ParallelFirstTouch => {
            pool.run_partitioned(n, |_, range| {
                for i in range {
                    unsafe { *ptr.get().add(i) = input_value(i) };
                }
            });
        }
    }
    Ok(buf)
}

const FT_B_FILL: f64 = 1.0;
const FT_C_FILL: f64 = 2.0;
const FT_SCALAR: f64 = 3.0;
/// Per-element result of the first-touch update loop with constant fills.
pub const FT_EXPECTED_ELEMENT: f64 = FT_B_FILL + FT_SCALAR * FT_C_FILL;

/// First-touch pair: serial versus parallel initialization, identical
/// parallel triad update `a[i] = b[i] + 3 c[i]`.
pub fn kernel_ft(n: usize, variant: Variant, pool: &ThreadPool) -> Result<KernelResult> {
    if n == 0 {
        return Err(Error::InvalidDimension { n, reason: "kernel size must be positive" });
    }
    let init_mode = match variant {
        Variant::Baseline => InitMode::SerialFill,
        Variant::Tuned => InitMode::ParallelFirstTouch,
    };
    // Alignment is held fixed so the pair isolates the placement effect.
    let policy = |fill| AllocPolicy {
        alignment: CACHE_LINE,
        init_mode,
        fill_value: fill,
    };
    let a = allocate(n, &policy(0.0), pool)?;
    let b = allocate(n, &policy(FT_B_FILL), pool)?;
    let c = allocate(n, &policy(FT_C_FILL), pool)?;
    let ap = a.send_ptr();
    let bp = b.as_ptr() as usize;
    let cp = c.as_ptr() as usize;
    let start = Instant::now();
    pool.run_partitioned(n, |_, range| {
        let a = ap.get();
        let b = bp as *const f64;
        let c = cp as *const f64;
        for i in range {
            unsafe { *a.add(i) = *b.add(i) + FT_SCALAR * *c.add(i) };
        }
    });
    let elapsed = elapsed_positive(start);
    Ok(KernelResult {
        checksum: checksum(&a),
        elapsed_seconds: elapsed,
        variant,
        threads: pool.threads(),
    })
}

const MA_PASSES: usize = 4;

/// Memory-alignment pair: misaligned buffers and arbitrary chunk boundaries
/// versus line-aligned buffers and line-padded chunks, identical per-element
/// update.
pub fn kernel_ma(n: usize, variant: Variant, pool: &ThreadPool) -> Result<KernelResult> {
    if n == 0 {
        return Err(Error::InvalidDimension { n, reason: "kernel size must be positive" });
    }
    let policy = AllocPolicy {
        alignment: match variant {
            Variant::Baseline => 1,
            Variant::Tuned => CACHE_LINE,
        },
        init_mode: match variant {
            Variant::Baseline => InitMode::SerialFill,
            Variant::Tuned => InitMode::ParallelFirstTouch,
        },
        fill_value: 1.0,
    };
    let x = allocate(n, &policy, pool)?;
    if variant == Variant::Tuned {
        debug_assert_eq!(x.addr() % CACHE_LINE, 0);
    }
    let xp = x.send_ptr();
    let threads = pool.threads();
    let start = Instant::now();
    pool.run(|w| {
        let range = ma_chunk(n, threads, w, variant);
        let x = xp.get();
        for _ in 0..MA_PASSES {
            for i in range.clone() {
                unsafe { *x.add(i) = *x.add(i) * 0.999_999 + 0.000_001 };
            }
        }
    });
    let elapsed = elapsed_positive(start);
    Ok(KernelResult {
        checksum: checksum(&x),
        elapsed_seconds: elapsed,
        variant,
        threads: pool.threads(),
    })
}

/// Chunk assignment used by `kernel_ma`: plain static blocks for the
/// baseline, line-padded blocks for the tuned variant.
pub fn ma_chunk(n: usize, threads: usize, w: usize, variant: Variant) -> std::ops::Range<usize> {
    match variant {
        Variant::Baseline => partition(n, threads, w),
        Variant::Tuned => partition_aligned(n, threads, w, ELEMS_PER_LINE),
    }
}
