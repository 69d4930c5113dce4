//! ELLPACK sparse matrices and their threshold-pruned kernels.
//!
//! Storage is the classic row-padded two-array layout: an `n x m_max` value
//! array, a parallel column-index array, and a per-row entry count. Slots at
//! or beyond a row's count are never read and hold the canonical filler
//! (value `0.0`, column `0`). Column indices within a row are distinct and
//! stored ascending.
//!
//! All kernels run row-parallel over the worker pool with the static
//! partitioner, accumulate each output row in a per-worker dense scratch row
//! with a touched-index list, and apply the pruning threshold only after the
//! row is fully accumulated (`|value| <= threshold` is dropped). Fixed
//! per-row accumulation order plus fixed worker-order reduction makes every
//! operation bitwise deterministic for a given thread count.
//!
//! Backing arrays are allocated through [`crate::perf::alloc`], so alignment
//! and first-touch behavior follow the benchmark variant that built the
//! engine.

use std::sync::Arc;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::perf::alloc::{allocate_rows, AlignedBuf, AllocPolicy};
use crate::perf::pool::{SendPtr, ThreadPool};

pub struct EllpackMatrix {
    n: usize,
    m_max: usize,
    values: AlignedBuf<f64>,
    col_index: AlignedBuf<usize>,
    row_nnz: Vec<usize>,
    alignment: usize,
}

impl EllpackMatrix {
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn m_max(&self) -> usize {
        self.m_max
    }

    /// Guaranteed start-address alignment of the backing arrays, in bytes.
    #[inline]
    pub fn alignment(&self) -> usize {
        self.alignment
    }

    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_nnz[i]
    }

    pub fn row_counts(&self) -> &[usize] {
        &self.row_nnz
    }

    /// Stored column indices of row `i`, ascending.
    #[inline]
    pub fn row_cols(&self, i: usize) -> &[usize] {
        let start = i * self.m_max;
        &self.col_index.as_slice()[start..start + self.row_nnz[i]]
    }

    /// Stored values of row `i`, parallel to [`Self::row_cols`].
    #[inline]
    pub fn row_vals(&self, i: usize) -> &[f64] {
        let start = i * self.m_max;
        &self.values.as_slice()[start..start + self.row_nnz[i]]
    }

    /// Total stored entries.
    pub fn nnz(&self) -> usize {
        self.row_nnz.iter().sum()
    }

    /// Stored value at `(i, j)`, `0.0` if the slot is not stored.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.row_cols(i).binary_search(&j) {
            Ok(pos) => self.row_vals(i)[pos],
            Err(_) => 0.0,
        }
    }

    /// Sum of stored diagonal entries.
    pub fn trace(&self) -> f64 {
        let mut t = 0.0;
        for i in 0..self.n {
            t += self.get(i, i);
        }
        t
    }

    /// Serial sum of all stored values in row-major stored order; used as
    /// the cross-variant neutrality checksum.
    pub fn checksum(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for &v in self.row_vals(i) {
                s += v;
            }
        }
        s
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n);
        for i in 0..self.n {
            for (&j, &v) in self.row_cols(i).iter().zip(self.row_vals(i)) {
                d.set(i, j, v);
            }
        }
        d
    }

    /// True when both matrices store the identical entry set with bitwise
    /// identical values.
    pub fn bitwise_eq(&self, other: &EllpackMatrix) -> bool {
        if self.n != other.n || self.row_nnz != other.row_nnz {
            return false;
        }
        for i in 0..self.n {
            if self.row_cols(i) != other.row_cols(i) {
                return false;
            }
            let a = self.row_vals(i).iter().map(|v| v.to_bits());
            let b = other.row_vals(i).iter().map(|v| v.to_bits());
            if !a.eq(b) {
                return false;
            }
        }
        true
    }

    /// Checks the structural invariants; test helper.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n {
            let nnz = self.row_nnz[i];
            if nnz > self.m_max {
                return Err(Error::Overflow {
                    row: i,
                    needed: nnz,
                    m_max: self.m_max,
                });
            }
            let cols = self.row_cols(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::InvalidParams("row columns not strictly ascending"));
                }
            }
            if let Some(&last) = cols.last() {
                if last >= self.n {
                    return Err(Error::InvalidParams("column index out of range"));
                }
            }
            // Padding slots hold the canonical filler.
            let start = i * self.m_max;
            for k in nnz..self.m_max {
                if self.values.as_slice()[start + k] != 0.0
                    || self.col_index.as_slice()[start + k] != 0
                {
                    return Err(Error::InvalidParams("padding slot not canonical"));
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Debug for EllpackMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllpackMatrix")
            .field("n", &self.n)
            .field("m_max", &self.m_max)
            .field("nnz", &self.nnz())
            .field("alignment", &self.alignment)
            .finish()
    }
}

/// Result of [`EllpackEngine::x_squared`]: the squared matrix plus both
/// traces picked up in the same pass (`trace_x2` is accumulated before
/// pruning, so it is the exact trace of the product).
pub struct XSquared {
    pub matrix: EllpackMatrix,
    pub trace_x: f64,
    pub trace_x2: f64,
}

/// Dense scratch row with epoch stamps; cleared in O(touched) per row.
struct Scratch {
    acc: Vec<f64>,
    stamp: Vec<u64>,
    epoch: u64,
    touched: Vec<usize>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            acc: vec![0.0; n],
            stamp: vec![0; n],
            epoch: 0,
            touched: Vec::with_capacity(64),
        }
    }

    #[inline]
    fn begin_row(&mut self) {
        self.epoch += 1;
        self.touched.clear();
    }

    #[inline]
    fn add(&mut self, j: usize, v: f64) {
        if self.stamp[j] == self.epoch {
            self.acc[j] += v;
        } else {
            self.stamp[j] = self.epoch;
            self.acc[j] = v;
            self.touched.push(j);
        }
    }

    #[inline]
    fn value(&self, j: usize) -> f64 {
        if self.stamp[j] == self.epoch {
            self.acc[j]
        } else {
            0.0
        }
    }
}

/// Per-worker output of the accumulation pass: pruned rows appended
/// back-to-back, plus the per-worker trace partials.
#[derive(Default)]
struct WorkerRows {
    cols: Vec<usize>,
    vals: Vec<f64>,
    lens: Vec<usize>,
    max_len: usize,
    trace_in: f64,
    trace_out: f64,
    overflow: Option<(usize, usize)>,
}

/// Executes the ELLPACK kernels under one allocation policy and worker pool.
#[derive(Clone)]
pub struct EllpackEngine {
    pool: Arc<ThreadPool>,
    policy: AllocPolicy,
}

impl EllpackEngine {
    pub fn new(pool: Arc<ThreadPool>, policy: AllocPolicy) -> Self {
        Self { pool, policy }
    }

    /// Single-worker engine with cache-line-aligned serial allocation.
    pub fn serial() -> Self {
        Self {
            pool: Arc::new(ThreadPool::serial()),
            policy: AllocPolicy {
                alignment: crate::perf::alloc::CACHE_LINE,
                init_mode: crate::perf::alloc::InitMode::SerialFill,
                fill_value: 0.0,
            },
        }
    }

    pub fn pool(&self) -> &Arc<ThreadPool> {
        &self.pool
    }

    pub fn policy(&self) -> &AllocPolicy {
        &self.policy
    }

    fn alloc_storage(
        &self,
        n: usize,
        m_max: usize,
    ) -> Result<(AlignedBuf<f64>, AlignedBuf<usize>)> {
        let values = allocate_rows(n, m_max, 0.0f64, &self.policy, &self.pool)?;
        let cols = allocate_rows(n, m_max, 0usize, &self.policy, &self.pool)?;
        Ok((values, cols))
    }

    /// Converts a dense matrix, keeping entries with `|value| > threshold`.
    /// `m_max` defaults to `n`, which can never overflow; pass a tight cap to
    /// save memory. Overflow reports the first offending row.
    pub fn from_dense(
        &self,
        d: &DenseMatrix,
        threshold: f64,
        m_max: Option<usize>,
    ) -> Result<EllpackMatrix> {
        if threshold < 0.0 {
            return Err(Error::InvalidParams("threshold must be >= 0"));
        }
        let n = d.n();
        let m_max = m_max.unwrap_or(n);
        let counts: Vec<usize> = (0..n)
            .map(|i| d.row(i).iter().filter(|v| v.abs() > threshold).count())
            .collect();
        if let Some((row, &needed)) = counts.iter().enumerate().find(|(_, &c)| c > m_max) {
            return Err(Error::Overflow {
                row,
                needed,
                m_max,
            });
        }
        let (values, cols) = self.alloc_storage(n, m_max)?;
        let vp = values.send_ptr();
        let cp = cols.send_ptr();
        self.pool.run_partitioned(n, |_, rows| {
            for i in rows {
                let mut k = 0;
                for (j, &v) in d.row(i).iter().enumerate() {
                    if v.abs() > threshold {
                        unsafe {
                            *vp.get().add(i * m_max + k) = v;
                            *cp.get().add(i * m_max + k) = j;
                        }
                        k += 1;
                    }
                }
            }
        });
        Ok(EllpackMatrix {
            n,
            m_max,
            values,
            col_index: cols,
            row_nnz: counts,
            alignment: self.policy.effective_alignment(),
        })
    }

    pub fn identity(&self, n: usize) -> Result<EllpackMatrix> {
        let (mut values, mut cols) = self.alloc_storage(n, 1)?;
        for i in 0..n {
            values.as_mut_slice()[i] = 1.0;
            cols.as_mut_slice()[i] = i;
        }
        Ok(EllpackMatrix {
            n,
            m_max: 1,
            values,
            col_index: cols,
            row_nnz: vec![1; n],
            alignment: self.policy.effective_alignment(),
        })
    }

    /// Builds from coordinate triplets (0-based). Duplicate coordinates are
    /// summed; entries that sum to exactly zero are still stored.
    pub fn from_coo(
        &self,
        n: usize,
        entries: &mut Vec<(usize, usize, f64)>,
    ) -> Result<EllpackMatrix> {
        for &(i, j, _) in entries.iter() {
            if i >= n || j >= n {
                return Err(Error::InvalidDimension {
                    n,
                    reason: "coordinate out of range",
                });
            }
        }
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        entries.dedup_by(|next, prev| {
            if next.0 == prev.0 && next.1 == prev.1 {
                prev.2 += next.2;
                true
            } else {
                false
            }
        });
        let mut row_nnz = vec![0usize; n];
        for &(i, _, _) in entries.iter() {
            row_nnz[i] += 1;
        }
        let m_max = row_nnz.iter().copied().max().unwrap_or(0);
        let (values, cols) = self.alloc_storage(n, m_max)?;
        // Row pointers into the sorted entry list.
        let mut row_ptr = vec![0usize; n + 1];
        for i in 0..n {
            row_ptr[i + 1] = row_ptr[i] + row_nnz[i];
        }
        let vp = values.send_ptr();
        let cp = cols.send_ptr();
        self.pool.run_partitioned(n, |_, rows| {
            for i in rows {
                for (k, &(_, j, v)) in entries[row_ptr[i]..row_ptr[i + 1]].iter().enumerate() {
                    unsafe {
                        *vp.get().add(i * m_max + k) = v;
                        *cp.get().add(i * m_max + k) = j;
                    }
                }
            }
        });
        Ok(EllpackMatrix {
            n,
            m_max,
            values,
            col_index: cols,
            row_nnz,
            alignment: self.policy.effective_alignment(),
        })
    }

    /// Sparse product `A * B` with post-accumulation pruning. `m_max` of
    /// `None` sizes the result to its content; an explicit cap errors with
    /// the first row that does not fit.
    pub fn multiply(
        &self,
        a: &EllpackMatrix,
        b: &EllpackMatrix,
        threshold: f64,
        m_max: Option<usize>,
    ) -> Result<EllpackMatrix> {
        if a.n != b.n {
            return Err(Error::DimensionMismatch {
                op: "multiply",
                left: a.n,
                right: b.n,
            });
        }
        let (matrix, _, _) = self.build_rows(a.n, threshold, m_max, |i, scratch| {
            let mut diag = 0.0;
            for (&k, &av) in a.row_cols(i).iter().zip(a.row_vals(i)) {
                if k == i {
                    diag += av;
                }
                for (&j, &bv) in b.row_cols(k).iter().zip(b.row_vals(k)) {
                    scratch.add(j, av * bv);
                }
            }
            diag
        })?;
        Ok(matrix)
    }

    /// `X^2` with `tr(X)` and `tr(X^2)` picked up in the same pass.
    pub fn x_squared(
        &self,
        x: &EllpackMatrix,
        threshold: f64,
        m_max: Option<usize>,
    ) -> Result<XSquared> {
        let (matrix, trace_x, trace_x2) =
            self.build_rows(x.n, threshold, m_max, |i, scratch| {
                let mut diag = 0.0;
                for (&k, &xv) in x.row_cols(i).iter().zip(x.row_vals(i)) {
                    if k == i {
                        diag += xv;
                    }
                    for (&j, &bv) in x.row_cols(k).iter().zip(x.row_vals(k)) {
                        scratch.add(j, xv * bv);
                    }
                }
                diag
            })?;
        Ok(XSquared {
            matrix,
            trace_x,
            trace_x2,
        })
    }

    /// `alpha A + beta B` with post-accumulation pruning.
    pub fn add_scaled(
        &self,
        alpha: f64,
        a: &EllpackMatrix,
        beta: f64,
        b: &EllpackMatrix,
        threshold: f64,
        m_max: Option<usize>,
    ) -> Result<EllpackMatrix> {
        if a.n != b.n {
            return Err(Error::DimensionMismatch {
                op: "add_scaled",
                left: a.n,
                right: b.n,
            });
        }
        let (matrix, _, _) = self.build_rows(a.n, threshold, m_max, |i, scratch| {
            for (&j, &v) in a.row_cols(i).iter().zip(a.row_vals(i)) {
                scratch.add(j, alpha * v);
            }
            for (&j, &v) in b.row_cols(i).iter().zip(b.row_vals(i)) {
                scratch.add(j, beta * v);
            }
            0.0
        })?;
        Ok(matrix)
    }

    /// Frobenius norm of `A - B`, row-parallel with worker-ordered reduction.
    pub fn fnorm_diff(&self, a: &EllpackMatrix, b: &EllpackMatrix) -> Result<f64> {
        if a.n != b.n {
            return Err(Error::DimensionMismatch {
                op: "fnorm_diff",
                left: a.n,
                right: b.n,
            });
        }
        let threads = self.pool.threads();
        let mut partials = vec![0.0f64; threads];
        let pp = SendPtr(partials.as_mut_ptr());
        self.pool.run_partitioned(a.n, |w, rows| {
            let mut scratch = Scratch::new(a.n);
            let mut sum = 0.0;
            for i in rows {
                scratch.begin_row();
                for (&j, &v) in a.row_cols(i).iter().zip(a.row_vals(i)) {
                    scratch.add(j, v);
                }
                for (&j, &v) in b.row_cols(i).iter().zip(b.row_vals(i)) {
                    scratch.add(j, -v);
                }
                for &j in &scratch.touched {
                    let d = scratch.acc[j];
                    sum += d * d;
                }
            }
            unsafe { *pp.get().add(w) = sum };
        });
        Ok(partials.iter().sum::<f64>().sqrt())
    }

    /// Shared row-building machinery: accumulate each row into scratch,
    /// prune after accumulation, gather per-worker buffers, then size (or
    /// check) `m_max` and copy rows into policy-allocated storage. The
    /// copy is done by the same worker that owns the rows, preserving the
    /// first-touch/compute identity.
    fn build_rows<F>(
        &self,
        n: usize,
        threshold: f64,
        m_max: Option<usize>,
        accumulate: F,
    ) -> Result<(EllpackMatrix, f64, f64)>
    where
        F: Fn(usize, &mut Scratch) -> f64 + Sync,
    {
        if threshold < 0.0 {
            return Err(Error::InvalidParams("threshold must be >= 0"));
        }
        let threads = self.pool.threads();
        let mut slots: Vec<WorkerRows> = (0..threads).map(|_| WorkerRows::default()).collect();
        let sp = SendPtr(slots.as_mut_ptr());
        let cap = m_max;
        self.pool.run_partitioned(n, |w, rows| {
            let mut scratch = Scratch::new(n);
            let mut out = WorkerRows {
                lens: Vec::with_capacity(rows.len()),
                ..WorkerRows::default()
            };
            for i in rows {
                scratch.begin_row();
                out.trace_in += accumulate(i, &mut scratch);
                out.trace_out += scratch.value(i);
                scratch.touched.sort_unstable();
                let mut len = 0usize;
                for &j in &scratch.touched {
                    let v = scratch.acc[j];
                    if v.abs() > threshold {
                        out.cols.push(j);
                        out.vals.push(v);
                        len += 1;
                    }
                }
                if let Some(cap) = cap {
                    if len > cap {
                        // Stop this worker's range at its first overflow;
                        // the minimum over workers is then the first
                        // offending row of the whole matrix.
                        out.overflow = Some((i, len));
                        break;
                    }
                }
                out.lens.push(len);
                out.max_len = out.max_len.max(len);
            }
            unsafe { *sp.get().add(w) = out };
        });
        if let Some(&(row, needed)) = slots.iter().filter_map(|s| s.overflow.as_ref()).min() {
            return Err(Error::Overflow {
                row,
                needed,
                m_max: cap.expect("overflow implies a cap"),
            });
        }
        let m_max = cap.unwrap_or_else(|| slots.iter().map(|s| s.max_len).max().unwrap_or(0));
        let trace_in: f64 = slots.iter().map(|s| s.trace_in).sum();
        let trace_out: f64 = slots.iter().map(|s| s.trace_out).sum();
        let (values, cols) = self.alloc_storage(n, m_max)?;
        let mut row_nnz = vec![0usize; n];
        let vp = values.send_ptr();
        let cp = cols.send_ptr();
        let rp = SendPtr(row_nnz.as_mut_ptr());
        let slots_ref = &slots;
        self.pool.run_partitioned(n, |w, rows| {
            let local = &slots_ref[w];
            let mut off = 0usize;
            for (idx, i) in rows.enumerate() {
                let len = local.lens[idx];
                unsafe {
                    std::ptr::copy_nonoverlapping(
                        local.vals.as_ptr().add(off),
                        vp.get().add(i * m_max),
                        len,
                    );
                    std::ptr::copy_nonoverlapping(
                        local.cols.as_ptr().add(off),
                        cp.get().add(i * m_max),
                        len,
                    );
                    *rp.get().add(i) = len;
                }
                off += len;
            }
        });
        Ok((
            EllpackMatrix {
                n,
                m_max,
                values,
                col_index: cols,
                row_nnz,
                alignment: self.policy.effective_alignment(),
            },
            trace_in,
            trace_out,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::dense_multiply;
    use crate::rng::SplitMix64;

    fn engine(threads: usize) -> EllpackEngine {
        EllpackEngine::new(
            Arc::new(ThreadPool::build(threads, None).unwrap()),
            AllocPolicy::tuned(),
        )
    }

    /// Random symmetric matrix with roughly `fill` fraction nonzero.
    pub(crate) fn random_symmetric(n: usize, fill: f64, rng: &mut SplitMix64) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in i..n {
                if rng.next_f64() < fill {
                    let v = rng.next_symmetric();
                    d.set(i, j, v);
                    d.set(j, i, v);
                }
            }
        }
        d
    }

    #[test]
    fn from_dense_identity() {
        let eng = engine(2);
        let ell = eng.from_dense(&DenseMatrix::identity(3), 0.0, None).unwrap();
        assert_eq!(ell.row_counts(), &[1, 1, 1]);
        for i in 0..3 {
            assert_eq!(ell.row_vals(i), &[1.0]);
            assert_eq!(ell.row_cols(i), &[i]);
        }
        ell.validate().unwrap();
    }

    #[test]
    fn from_dense_zero_matrix() {
        let eng = engine(1);
        let ell = eng.from_dense(&DenseMatrix::zeros(4), 0.0, None).unwrap();
        assert_eq!(ell.row_counts(), &[0, 0, 0, 0]);
        assert_eq!(ell.to_dense(), DenseMatrix::zeros(4));
    }

    #[test]
    fn from_dense_overflow_reports_row() {
        let eng = engine(1);
        let mut d = DenseMatrix::zeros(3);
        d.set(1, 0, 1.0);
        d.set(1, 1, 2.0);
        d.set(1, 2, 3.0);
        match eng.from_dense(&d, 0.0, Some(2)) {
            Err(Error::Overflow { row, needed, m_max }) => {
                assert_eq!((row, needed, m_max), (1, 3, 2));
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn dense_roundtrip_on_random_instances() {
        let mut rng = SplitMix64::new(99);
        let eng = engine(3);
        for _ in 0..10 {
            let d = random_symmetric(64, 0.1, &mut rng);
            let ell = eng.from_dense(&d, 0.0, None).unwrap();
            assert_eq!(ell.to_dense(), d);
            ell.validate().unwrap();
            // Round-trip again through from_dense: identical stored set.
            let again = eng.from_dense(&ell.to_dense(), 0.0, Some(ell.m_max())).unwrap();
            assert!(again.bitwise_eq(&ell));
        }
    }

    #[test]
    fn multiply_identity_is_neutral() {
        let mut rng = SplitMix64::new(7);
        let eng = engine(2);
        let d = random_symmetric(32, 0.2, &mut rng);
        let a = eng.from_dense(&d, 0.0, None).unwrap();
        let id = eng.identity(32).unwrap();
        let prod = eng.multiply(&id, &a, 0.0, None).unwrap();
        assert_eq!(prod.to_dense(), d);
    }

    #[test]
    fn multiply_by_zero_is_zero() {
        let mut rng = SplitMix64::new(8);
        let eng = engine(2);
        let a = eng
            .from_dense(&random_symmetric(16, 0.3, &mut rng), 0.0, None)
            .unwrap();
        let zero = eng.from_dense(&DenseMatrix::zeros(16), 0.0, None).unwrap();
        let prod = eng.multiply(&a, &zero, 0.0, None).unwrap();
        assert_eq!(prod.nnz(), 0);
    }

    #[test]
    fn multiply_matches_dense_oracle() {
        let mut rng = SplitMix64::new(21);
        let eng = engine(4);
        let da = random_symmetric(128, 0.08, &mut rng);
        let db = random_symmetric(128, 0.08, &mut rng);
        let a = eng.from_dense(&da, 0.0, None).unwrap();
        let b = eng.from_dense(&db, 0.0, None).unwrap();
        let prod = eng.multiply(&a, &b, 0.0, None).unwrap();
        let oracle = dense_multiply(&da, &db).unwrap();
        let rel = prod.to_dense().fnorm_diff(&oracle).unwrap() / oracle.frobenius().max(1e-300);
        assert!(rel <= 1e-12, "relative error {rel:e}");
    }

    #[test]
    fn multiply_dimension_mismatch() {
        let eng = engine(1);
        let a = eng.identity(3).unwrap();
        let b = eng.identity(4).unwrap();
        assert!(matches!(
            eng.multiply(&a, &b, 0.0, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn multiply_overflow_with_tight_cap() {
        let eng = engine(2);
        // Dense 4x4 of ones: product rows need 4 slots.
        let mut d = DenseMatrix::zeros(4);
        for i in 0..4 {
            for j in 0..4 {
                d.set(i, j, 1.0);
            }
        }
        let a = eng.from_dense(&d, 0.0, None).unwrap();
        match eng.multiply(&a, &a, 0.0, Some(2)) {
            Err(Error::Overflow { row, needed, m_max }) => {
                assert_eq!(row, 0);
                assert_eq!(needed, 4);
                assert_eq!(m_max, 2);
            }
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn x_squared_identity() {
        let eng = engine(2);
        let id = eng.identity(3).unwrap();
        let sq = eng.x_squared(&id, 0.0, None).unwrap();
        assert_eq!(sq.trace_x, 3.0);
        assert_eq!(sq.trace_x2, 3.0);
        assert_eq!(sq.matrix.to_dense(), DenseMatrix::identity(3));
    }

    #[test]
    fn x_squared_scaled_diagonal() {
        let eng = engine(1);
        let d = DenseMatrix::from_diag(&[0.5, 0.5]);
        let x = eng.from_dense(&d, 0.0, None).unwrap();
        let sq = eng.x_squared(&x, 0.0, None).unwrap();
        assert_eq!(sq.trace_x, 1.0);
        assert_eq!(sq.trace_x2, 0.5);
        assert_eq!(sq.matrix.to_dense(), DenseMatrix::from_diag(&[0.25, 0.25]));
    }

    #[test]
    fn x_squared_equals_multiply() {
        let mut rng = SplitMix64::new(5);
        let eng = engine(3);
        let d = random_symmetric(64, 0.1, &mut rng);
        let x = eng.from_dense(&d, 0.0, None).unwrap();
        let sq = eng.x_squared(&x, 1e-3, None).unwrap();
        let mul = eng.multiply(&x, &x, 1e-3, None).unwrap();
        assert!(sq.matrix.bitwise_eq(&mul));
    }

    #[test]
    fn x_squared_preserves_symmetry() {
        let mut rng = SplitMix64::new(31);
        let eng = engine(4);
        let d = random_symmetric(96, 0.15, &mut rng);
        let x = eng.from_dense(&d, 0.0, None).unwrap();
        let sq = eng.x_squared(&x, 0.0, None).unwrap().matrix.to_dense();
        for i in 0..96 {
            for j in 0..96 {
                assert!((sq.get(i, j) - sq.get(j, i)).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn add_scaled_basics() {
        let mut rng = SplitMix64::new(77);
        let eng = engine(2);
        let da = random_symmetric(32, 0.2, &mut rng);
        let db = random_symmetric(32, 0.2, &mut rng);
        let a = eng.from_dense(&da, 0.0, None).unwrap();
        let b = eng.from_dense(&db, 0.0, None).unwrap();
        // 1*A + 0*B stores exactly A's surviving entries.
        let same = eng.add_scaled(1.0, &a, 0.0, &b, 0.0, None).unwrap();
        assert_eq!(same.to_dense(), da);
        // A - A vanishes entirely at threshold 0.
        let zero = eng.add_scaled(1.0, &a, -1.0, &a, 0.0, None).unwrap();
        assert_eq!(zero.nnz(), 0);
    }

    #[test]
    fn add_scaled_matches_dense_oracle() {
        let mut rng = SplitMix64::new(78);
        let eng = engine(3);
        let da = random_symmetric(64, 0.1, &mut rng);
        let db = random_symmetric(64, 0.1, &mut rng);
        let a = eng.from_dense(&da, 0.0, None).unwrap();
        let b = eng.from_dense(&db, 0.0, None).unwrap();
        let got = eng.add_scaled(2.5, &a, -0.5, &b, 0.0, None).unwrap().to_dense();
        let mut want = DenseMatrix::zeros(64);
        for i in 0..64 {
            for j in 0..64 {
                want.set(i, j, 2.5 * da.get(i, j) - 0.5 * db.get(i, j));
            }
        }
        let rel = got.fnorm_diff(&want).unwrap() / want.frobenius().max(1e-300);
        assert!(rel <= 1e-12);
    }

    #[test]
    fn trace_and_fnorm() {
        let mut rng = SplitMix64::new(15);
        let eng = engine(2);
        let id5 = eng.identity(5).unwrap();
        assert_eq!(id5.trace(), 5.0);
        let zero = eng.from_dense(&DenseMatrix::zeros(5), 0.0, None).unwrap();
        assert_eq!(zero.trace(), 0.0);
        assert_eq!(eng.fnorm_diff(&id5, &id5).unwrap(), 0.0);
        let id2 = eng.identity(2).unwrap();
        let zero2 = eng.from_dense(&DenseMatrix::zeros(2), 0.0, None).unwrap();
        assert!((eng.fnorm_diff(&id2, &zero2).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        // Random trace against the dense diagonal sum, exact.
        let d = random_symmetric(64, 0.2, &mut rng);
        let ell = eng.from_dense(&d, 0.0, None).unwrap();
        let dense_diag: f64 = (0..64).map(|i| d.get(i, i)).sum();
        assert_eq!(ell.trace(), dense_diag);
    }

    #[test]
    fn threshold_monotonicity_of_multiply() {
        let mut rng = SplitMix64::new(40);
        let eng = engine(2);
        let d = random_symmetric(48, 0.2, &mut rng);
        let x = eng.from_dense(&d, 0.0, None).unwrap();
        let mut prev = usize::MAX;
        for tau in [0.0, 1e-6, 1e-3, 1e-1, 0.5] {
            let nnz = eng.multiply(&x, &x, tau, None).unwrap().nnz();
            assert!(nnz <= prev, "nnz must be non-increasing in threshold");
            prev = nnz;
        }
    }

    #[test]
    fn multiply_is_bitwise_deterministic() {
        let mut rng = SplitMix64::new(50);
        let eng = engine(4);
        let da = random_symmetric(96, 0.1, &mut rng);
        let db = random_symmetric(96, 0.1, &mut rng);
        let a = eng.from_dense(&da, 0.0, None).unwrap();
        let b = eng.from_dense(&db, 0.0, None).unwrap();
        let p1 = eng.multiply(&a, &b, 1e-9, None).unwrap();
        let p2 = eng.multiply(&a, &b, 1e-9, None).unwrap();
        assert!(p1.bitwise_eq(&p2));
    }
}
