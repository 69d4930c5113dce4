//! Benchmark orchestration: micro-kernel sweeps, sparse x-squared sweeps over
//! generated systems, and phase-timed SP2 proxy runs, always as
//! baseline/tuned pairs over identical inputs, with CSV emission.
//!
//! Fairness rules: both variants of an instance see the same seed and the
//! same repetition count, one untimed warm-up repetition precedes the timed
//! ones (page faults and frequency ramp would otherwise land on whichever
//! variant runs first), and the order the two variants execute in is
//! randomized per instance to avoid a systematic cache-warmth bias.

use std::path::{Path, PathBuf};

use crate::ellpack::{EllpackEngine, EllpackMatrix};
use crate::error::{Error, Result};
use crate::model::{generate, preset, SystemKind};
use crate::mtx;
use crate::perf::affinity::{pin_map_for_workers, AffinityPolicy, HwSubset, Placement};
use crate::perf::alloc::AllocPolicy;
use crate::perf::kernels::{kernel_ft, kernel_ma, kernel_sr, KernelResult, Variant};
use crate::perf::pool::ThreadPool;
use crate::perf::topology::MachineTopology;
use crate::rng::SplitMix64;
use crate::sp2::{run_proxy_on, Sp2Config, Sp2Report};

pub const CSV_HEADER: &str =
    "experiment,system,n,threads,variant,reps,min_s,median_s,stddev_s,checksum";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BenchSystem {
    Metal,
    Semiconductor,
    SoftMatter,
    Synthetic,
}

impl From<SystemKind> for BenchSystem {
    fn from(kind: SystemKind) -> Self {
        match kind {
            SystemKind::Metal => BenchSystem::Metal,
            SystemKind::Semiconductor => BenchSystem::Semiconductor,
            SystemKind::SoftMatter => BenchSystem::SoftMatter,
        }
    }
}

impl std::fmt::Display for BenchSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchSystem::Metal => "metal",
            BenchSystem::Semiconductor => "semiconductor",
            BenchSystem::SoftMatter => "soft_matter",
            BenchSystem::Synthetic => "synthetic",
        })
    }
}

#[derive(Clone, Debug)]
pub struct BenchResult {
    pub experiment: String,
    pub system: BenchSystem,
    pub n: usize,
    pub threads: usize,
    pub variant: Variant,
    pub reps: usize,
    pub min_s: f64,
    pub median_s: f64,
    pub stddev_s: f64,
    pub checksum: f64,
}

impl BenchResult {
    fn sort_key(&self) -> (String, String, usize, usize, String) {
        (
            self.experiment.clone(),
            self.system.to_string(),
            self.n,
            self.threads,
            self.variant.to_string(),
        )
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.9e},{:.9e},{:.9e},{:e}",
            self.experiment,
            self.system,
            self.n,
            self.threads,
            self.variant,
            self.reps,
            self.min_s,
            self.median_s,
            self.stddev_s,
            self.checksum
        )
    }
}

/// (min, median, stddev) of a timing sample.
pub fn stats(samples: &[f64]) -> (f64, f64, f64) {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let min = sorted[0];
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / sorted.len() as f64;
    (min, median, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MicroKernel {
    Sr,
    Ft,
    Ma,
}

impl MicroKernel {
    pub const ALL: [MicroKernel; 3] = [MicroKernel::Sr, MicroKernel::Ft, MicroKernel::Ma];
}

impl std::fmt::Display for MicroKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MicroKernel::Sr => "sr",
            MicroKernel::Ft => "ft",
            MicroKernel::Ma => "ma",
        })
    }
}

/// Powers of two up to the logical CPU count, plus the count itself.
pub fn default_thread_counts(topo: &MachineTopology) -> Vec<usize> {
    let max = topo.total_logical_cpus().max(1);
    let mut counts = Vec::new();
    let mut t = 1;
    while t <= max {
        counts.push(t);
        t *= 2;
    }
    if *counts.last().unwrap() != max {
        counts.push(max);
    }
    counts
}

fn pool_for_variant(
    variant: Variant,
    threads: usize,
    placement: Placement,
    topo: &MachineTopology,
) -> Result<ThreadPool> {
    match variant {
        Variant::Baseline => ThreadPool::build(threads, None),
        Variant::Tuned => {
            let map = pin_map_for_workers(placement, topo, threads)?;
            ThreadPool::build(threads, Some(map))
        }
    }
}

fn variant_order(rng: &mut SplitMix64) -> [Variant; 2] {
    if rng.next_u64() & 1 == 0 {
        [Variant::Baseline, Variant::Tuned]
    } else {
        [Variant::Tuned, Variant::Baseline]
    }
}

#[derive(Clone, Debug)]
pub struct MicroBenchConfig {
    pub sizes: Vec<usize>,
    pub thread_counts: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub placement: Placement,
    /// Divisor exercised by the strength-reduction pair; not a power of two
    /// so the reciprocal rounds.
    pub sr_scale: f64,
}

impl MicroBenchConfig {
    pub fn new(topo: &MachineTopology) -> Self {
        Self {
            sizes: vec![1 << 20, 1 << 22],
            thread_counts: default_thread_counts(topo),
            reps: 10,
            seed: crate::model::DEFAULT_SEED,
            placement: Placement::Compact,
            sr_scale: 3.0,
        }
    }
}

/// One row per (kernel, size, threads, variant).
pub fn run_microbench(
    kernels: &[MicroKernel],
    cfg: &MicroBenchConfig,
    topo: &MachineTopology,
) -> Result<Vec<BenchResult>> {
    if kernels.is_empty() || cfg.sizes.is_empty() || cfg.thread_counts.is_empty() {
        return Err(Error::InvalidParams("empty micro-benchmark plan"));
    }
    if cfg.reps == 0 {
        return Err(Error::InvalidParams("reps must be >= 1"));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut results = Vec::new();
    for &kernel in kernels {
        for &n in &cfg.sizes {
            for &threads in &cfg.thread_counts {
                for variant in variant_order(&mut rng) {
                    let pool = pool_for_variant(variant, threads, cfg.placement, topo)?;
                    let run = |()| -> Result<KernelResult> {
                        match kernel {
                            MicroKernel::Sr => kernel_sr(n, cfg.sr_scale, variant, &pool),
                            MicroKernel::Ft => kernel_ft(n, variant, &pool),
                            MicroKernel::Ma => kernel_ma(n, variant, &pool),
                        }
                    };
                    run(())?; // warm-up, untimed
                    let mut times = Vec::with_capacity(cfg.reps);
                    let mut checksum = 0.0;
                    for _ in 0..cfg.reps {
                        let r = run(())?;
                        times.push(r.elapsed_seconds);
                        checksum = r.checksum;
                    }
                    let (min_s, median_s, stddev_s) = stats(&times);
                    results.push(BenchResult {
                        experiment: format!("micro_{kernel}"),
                        system: BenchSystem::Synthetic,
                        n,
                        threads,
                        variant,
                        reps: cfg.reps,
                        min_s,
                        median_s,
                        stddev_s,
                        checksum,
                    });
                }
            }
        }
    }
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct SpmmConfig {
    pub systems: Vec<SystemKind>,
    pub sizes: Vec<usize>,
    /// Pruning threshold for conversion and for the x-squared kernel.
    pub threshold: f64,
    pub reps: usize,
    pub threads: usize,
    pub seed: u64,
    pub placement: Placement,
}

impl SpmmConfig {
    pub fn new(topo: &MachineTopology) -> Self {
        Self {
            systems: SystemKind::ALL.to_vec(),
            sizes: vec![1000, 2000, 4000, 8000],
            threshold: 1e-5,
            reps: 10,
            threads: topo.total_logical_cpus().max(1),
            seed: crate::model::DEFAULT_SEED,
            placement: Placement::Compact,
        }
    }
}

/// Times the ELLPACK x-squared kernel per (system, size, variant). Both
/// variants square the same generated Hamiltonian; the warm-up repetition
/// doubles as the sizing probe for the result's row capacity.
pub fn run_spmm_sweep(cfg: &SpmmConfig, topo: &MachineTopology) -> Result<Vec<BenchResult>> {
    if cfg.systems.is_empty() || cfg.sizes.is_empty() {
        return Err(Error::InvalidParams("empty sweep plan"));
    }
    if cfg.reps == 0 {
        return Err(Error::InvalidParams("reps must be >= 1"));
    }
    let mut rng = SplitMix64::new(cfg.seed);
    let mut results = Vec::new();
    for &kind in &cfg.systems {
        for &n in &cfg.sizes {
            let mut params = preset(kind);
            params.seed = cfg.seed;
            let h = generate(n, &params)?;
            let tight = (0..n)
                .map(|i| h.row(i).iter().filter(|v| v.abs() > cfg.threshold).count())
                .max()
                .unwrap_or(0);
            for variant in variant_order(&mut rng) {
                let pool = pool_for_variant(variant, cfg.threads, cfg.placement, topo)?;
                let engine =
                    EllpackEngine::new(std::sync::Arc::new(pool), AllocPolicy::for_variant(variant));
                let ell = engine.from_dense(&h, cfg.threshold, Some(tight))?;
                // Warm-up probes the result width so timed reps run the
                // fixed-capacity path.
                let probe = engine.x_squared(&ell, cfg.threshold, None)?;
                let cap = probe.matrix.m_max();
                drop(probe);
                let mut times = Vec::with_capacity(cfg.reps);
                let mut checksum = 0.0;
                for _ in 0..cfg.reps {
                    let t = std::time::Instant::now();
                    let sq = engine.x_squared(&ell, cfg.threshold, Some(cap))?;
                    times.push(t.elapsed().as_secs_f64().max(1e-9));
                    checksum = sq.matrix.checksum();
                }
                let (min_s, median_s, stddev_s) = stats(&times);
                results.push(BenchResult {
                    experiment: "spmm_x2".to_string(),
                    system: kind.into(),
                    n,
                    threads: cfg.threads,
                    variant,
                    reps: cfg.reps,
                    min_s,
                    median_s,
                    stddev_s,
                    checksum,
                });
            }
        }
    }
    Ok(results)
}

#[derive(Clone, Debug)]
pub struct Sp2BenchConfig {
    /// Gapped systems only: semiconductor and/or soft matter.
    pub systems: Vec<SystemKind>,
    pub n: usize,
    /// Defaults to half filling (`n / 2`).
    pub n_occ: Option<usize>,
    pub threshold: f64,
    pub idempotency_tol: f64,
    pub max_iterations: usize,
    pub reps: usize,
    pub seed: u64,
    pub placement: Placement,
}

impl Sp2BenchConfig {
    pub fn new(n: usize) -> Self {
        Self {
            systems: vec![SystemKind::Semiconductor, SystemKind::SoftMatter],
            n,
            n_occ: None,
            threshold: 0.0,
            idempotency_tol: 1e-8,
            max_iterations: 100,
            reps: 3,
            seed: crate::model::DEFAULT_SEED,
            placement: Placement::Compact,
        }
    }
}

pub struct Sp2BenchRun {
    pub result: BenchResult,
    pub report: Sp2Report,
    pub density: EllpackMatrix,
}

/// Phase-timed SP2 proxy runs per (system, variant). The timed quantity in
/// the result row is the SP2 loop (x2 + norm + misc); full phase splits ride
/// along in the report.
pub fn run_sp2_bench(cfg: &Sp2BenchConfig, topo: &MachineTopology) -> Result<Vec<Sp2BenchRun>> {
    if cfg.systems.is_empty() {
        return Err(Error::InvalidParams("empty sp2 plan"));
    }
    if cfg
        .systems
        .iter()
        .any(|k| *k == SystemKind::Metal)
    {
        return Err(Error::InvalidParams(
            "sp2 benchmarks accept gapped systems only (semiconductor, soft_matter)",
        ));
    }
    if cfg.reps == 0 {
        return Err(Error::InvalidParams("reps must be >= 1"));
    }
    let threads = topo.total_logical_cpus().max(1);
    let subset = HwSubset::full(topo);
    let mut rng = SplitMix64::new(cfg.seed);
    let mut runs = Vec::new();
    for &kind in &cfg.systems {
        let mut params = preset(kind);
        params.seed = cfg.seed;
        let h = generate(cfg.n, &params)?;
        let file = scratch_path(&format!("sp2-{kind}-{}", cfg.n));
        mtx::write_dense(&file, &h, mtx::MtxSymmetry::Symmetric, 0.0)?;
        drop(h);
        let sp2_cfg = Sp2Config {
            n_occ: cfg.n_occ.unwrap_or(cfg.n / 2),
            threshold: cfg.threshold,
            max_iterations: cfg.max_iterations,
            idempotency_tol: cfg.idempotency_tol,
            bounds: None,
        };
        for variant in variant_order(&mut rng) {
            let affinity = AffinityPolicy {
                placement: cfg.placement,
                subset,
                migration_locked: variant == Variant::Tuned,
            };
            let alloc = AllocPolicy::for_variant(variant);
            // Warm-up.
            run_proxy_on(&file, &sp2_cfg, &affinity, alloc, topo)?;
            let mut times = Vec::with_capacity(cfg.reps);
            let mut last = None;
            for _ in 0..cfg.reps {
                let outcome = run_proxy_on(&file, &sp2_cfg, &affinity, alloc, topo)?;
                let p = &outcome.report.phase_times;
                times.push((p.sp2_loop_x2 + p.sp2_loop_norm + p.sp2_loop_misc).max(1e-9));
                last = Some(outcome);
            }
            let outcome = last.expect("reps >= 1");
            let (min_s, median_s, stddev_s) = stats(&times);
            runs.push(Sp2BenchRun {
                result: BenchResult {
                    experiment: "sp2_proxy".to_string(),
                    system: kind.into(),
                    n: cfg.n,
                    threads,
                    variant,
                    reps: cfg.reps,
                    min_s,
                    median_s,
                    stddev_s,
                    checksum: outcome.density.checksum(),
                },
                report: outcome.report,
                density: outcome.density,
            });
        }
        let _ = std::fs::remove_file(&file);
    }
    Ok(runs)
}

fn scratch_path(tag: &str) -> PathBuf {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.subsec_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!(
        "ellbench-{tag}-{}-{nanos}.mtx",
        std::process::id()
    ))
}

/// Writes results sorted by (experiment, system, n, threads, variant) under
/// the fixed header. An empty list produces a header-only file.
pub fn emit_csv(results: &[BenchResult], path: &Path) -> Result<()> {
    let mut sorted: Vec<&BenchResult> = results.iter().collect();
    sorted.sort_by_key(|r| r.sort_key());
    let mut out = String::with_capacity(64 * (sorted.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in sorted {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Parses a results CSV back; inverse of [`emit_csv`] for checking and for
/// the determinism tests.
pub fn read_csv(path: &Path) -> Result<Vec<BenchResult>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::InvalidParams(match other {
                Some(_) => "unexpected CSV header",
                None => "empty CSV",
            }))
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 10 {
            return Err(Error::InvalidParams("malformed CSV row"));
        }
        let system = match f[1] {
            "metal" => BenchSystem::Metal,
            "semiconductor" => BenchSystem::Semiconductor,
            "soft_matter" => BenchSystem::SoftMatter,
            "synthetic" => BenchSystem::Synthetic,
            _ => return Err(Error::InvalidParams("unknown system label")),
        };
        let variant = match f[4] {
            "baseline" => Variant::Baseline,
            "tuned" => Variant::Tuned,
            _ => return Err(Error::InvalidParams("unknown variant label")),
        };
        let parse_f = |s: &str| -> Result<f64> {
            s.parse().map_err(|_| Error::InvalidParams("bad float"))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::InvalidParams("bad integer"))
        };
        rows.push(BenchResult {
            experiment: f[0].to_string(),
            system,
            n: parse_u(f[2])?,
            threads: parse_u(f[3])?,
            variant,
            reps: parse_u(f[5])?,
            min_s: parse_f(f[6])?,
            median_s: parse_f(f[7])?,
            stddev_s: parse_f(f[8])?,
            checksum: parse_f(f[9])?,
        });
    }
    Ok(rows)
}

/// Phase CSV for SP2 proxy runs: exactly the five phase columns after the
/// instance key.
pub const PHASE_CSV_HEADER: &str = "experiment,system,n,threads,variant,iterations,read_hamiltonian_s,init_misc_s,sp2_loop_x2_s,sp2_loop_norm_s,sp2_loop_misc_s";

pub fn emit_phase_csv(runs: &[Sp2BenchRun], path: &Path) -> Result<()> {
    let mut sorted: Vec<&Sp2BenchRun> = runs.iter().collect();
    sorted.sort_by_key(|r| r.result.sort_key());
    let mut out = String::new();
    out.push_str(PHASE_CSV_HEADER);
    out.push('\n');
    for run in sorted {
        let r = &run.result;
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.experiment,
            r.system,
            r.n,
            r.threads,
            r.variant,
            run.report.iterations,
            run.report.phases_csv_line()
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Relative checksum tolerance per experiment: exact everywhere except the
/// strength-reduction pair, whose division/multiplication outputs may differ
/// in the last bits.
pub fn checksum_tolerance(experiment: &str) -> f64 {
    if experiment == "micro_sr" {
        1e-12
    } else {
        0.0
    }
}

/// Baseline/tuned checksum mismatches, one message per violated instance.
pub fn neutrality_violations(results: &[BenchResult]) -> Vec<String> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(String, String, usize, usize), Vec<&BenchResult>> = BTreeMap::new();
    for r in results {
        groups
            .entry((r.experiment.clone(), r.system.to_string(), r.n, r.threads))
            .or_default()
            .push(r);
    }
    let mut violations = Vec::new();
    for ((exp, sys, n, threads), rows) in groups {
        let base = rows.iter().find(|r| r.variant == Variant::Baseline);
        let tuned = rows.iter().find(|r| r.variant == Variant::Tuned);
        let (Some(base), Some(tuned)) = (base, tuned) else {
            continue;
        };
        let tol = checksum_tolerance(&exp);
        let scale = base.checksum.abs().max(tuned.checksum.abs()).max(1.0);
        let diff = (base.checksum - tuned.checksum).abs();
        let ok = if tol == 0.0 {
            base.checksum.to_bits() == tuned.checksum.to_bits()
        } else {
            diff <= tol * scale
        };
        if !ok {
            violations.push(format!(
                "{exp}/{sys} n={n} threads={threads}: baseline {:e} vs tuned {:e}",
                base.checksum, tuned.checksum
            ));
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(variant: Variant, checksum: f64) -> BenchResult {
        BenchResult {
            experiment: "micro_ft".into(),
            system: BenchSystem::Synthetic,
            n: 64,
            threads: 2,
            variant,
            reps: 3,
            min_s: 1e-4,
            median_s: 2e-4,
            stddev_s: 1e-5,
            checksum,
        }
    }

    #[test]
    fn stats_basics() {
        let (min, median, stddev) = stats(&[3.0, 1.0, 2.0]);
        assert_eq!(min, 1.0);
        assert_eq!(median, 2.0);
        assert!(stddev > 0.0);
        let (_, median, _) = stats(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(median, 2.5);
    }

    #[test]
    fn csv_header_and_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        // Empty list: header only.
        emit_csv(&[], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), format!("{CSV_HEADER}\n"));
        // Rows come back identically and in deterministic order.
        let rows = vec![
            sample_row(Variant::Tuned, 7.5),
            sample_row(Variant::Baseline, 7.5),
        ];
        emit_csv(&rows, &path).unwrap();
        let back = read_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].variant, Variant::Baseline);
        assert_eq!(back[1].variant, Variant::Tuned);
        assert_eq!(back[0].checksum, 7.5);
    }

    #[test]
    fn neutrality_checks_bitwise_by_default() {
        let rows = vec![
            sample_row(Variant::Baseline, 7.5),
            sample_row(Variant::Tuned, 7.5 + 1e-9),
        ];
        assert_eq!(neutrality_violations(&rows).len(), 1);
        let rows = vec![
            sample_row(Variant::Baseline, 7.5),
            sample_row(Variant::Tuned, 7.5),
        ];
        assert!(neutrality_violations(&rows).is_empty());
    }

    #[test]
    fn sr_checksums_get_a_relative_band() {
        let mut a = sample_row(Variant::Baseline, 1.0);
        let mut b = sample_row(Variant::Tuned, 1.0 + 1e-14);
        a.experiment = "micro_sr".into();
        b.experiment = "micro_sr".into();
        assert!(neutrality_violations(&[a, b]).is_empty());
    }

    #[test]
    fn micro_bench_smoke() {
        let topo = MachineTopology::detect();
        let cfg = MicroBenchConfig {
            sizes: vec![4096],
            thread_counts: vec![1, 2],
            reps: 2,
            ..MicroBenchConfig::new(&topo)
        };
        let results = run_microbench(&[MicroKernel::Sr], &cfg, &topo).unwrap();
        // 1 kernel x 1 size x 2 thread counts x 2 variants.
        assert_eq!(results.len(), 4);
        assert!(neutrality_violations(&results).is_empty());
        for r in &results {
            assert!(r.min_s <= r.median_s);
            assert!(r.stddev_s >= 0.0);
        }
    }
}
