//! Second-order spectral projection (SP2): computes the density matrix of a
//! symmetric Hamiltonian using only the sparse x-squared, scaled-add, trace
//! and norm kernels.
//!
//! The Hamiltonian is first mapped to `X0 = (eps_max I - H) / (eps_max -
//! eps_min)` using spectral bounds, which places every eigenvalue in `[0, 1]`
//! with the occupied (lowest-energy) states near 1. Each iteration squares
//! `X` and either keeps `X^2` (when `tr(X) > n_occ`, pushing small
//! eigenvalues down) or takes `2X - X^2` (when `tr(X) <= n_occ`, pushing
//! large eigenvalues up). For a gapped spectrum the iteration converges to
//! the projector onto the occupied subspace; convergence is declared when
//! the idempotency error `||X^2 - X||_F` — the norm that is measured anyway
//! for phase timing — falls below the configured tolerance.
//!
//! Fully degenerate spectra (for example `H = 0`) never polarize: the
//! idempotency error stagnates, which a ten-iteration stagnation detector
//! reports as `NoConvergence` instead of looping to the iteration cap.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use crate::ellpack::{EllpackEngine, EllpackMatrix};
use crate::error::{Error, Result};
use crate::mtx;
use crate::perf::affinity::{resolve_pin_map, AffinityPolicy};
use crate::perf::alloc::AllocPolicy;
use crate::perf::pool::ThreadPool;
use crate::perf::topology::MachineTopology;

/// Consecutive iterations without meaningful idempotency-error improvement
/// before the spectrum is declared degenerate at the occupation level.
const STAGNATION_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug)]
pub struct Sp2Config {
    /// Target occupation: trace of the converged density matrix.
    pub n_occ: usize,
    /// ELLPACK pruning threshold applied inside every kernel call.
    pub threshold: f64,
    pub max_iterations: usize,
    /// Convergence tolerance on `||X^2 - X||_F`.
    pub idempotency_tol: f64,
    /// Spectral bounds override; estimated from the matrix when `None`.
    pub bounds: Option<(f64, f64)>,
}

impl Sp2Config {
    pub fn new(n_occ: usize) -> Self {
        Self {
            n_occ,
            threshold: 0.0,
            max_iterations: 100,
            idempotency_tol: 1e-10,
            bounds: None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.n_occ == 0 || self.n_occ >= n {
            return Err(Error::InvalidParams("n_occ must satisfy 0 < n_occ < n"));
        }
        if self.threshold < 0.0 {
            return Err(Error::InvalidParams("threshold must be >= 0"));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParams("max_iterations must be >= 1"));
        }
        if !(self.idempotency_tol > 0.0) {
            return Err(Error::InvalidParams("idempotency_tol must be > 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `X <- X^2`
    Square,
    /// `X <- 2X - X^2`
    Expand,
}

impl std::fmt::Display for Branch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Branch::Square => "square",
            Branch::Expand => "expand",
        })
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IterationRecord {
    pub trace_x: f64,
    pub branch: Branch,
    pub idempotency_error: f64,
}

/// Wall time per run phase, in seconds. Loop misc is everything inside the
/// iteration that is neither the x-squared kernel nor the norm.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct PhaseTimes {
    pub read_hamiltonian: f64,
    pub init_misc: f64,
    pub sp2_loop_x2: f64,
    pub sp2_loop_norm: f64,
    pub sp2_loop_misc: f64,
}

impl PhaseTimes {
    pub const NAMES: [&'static str; 5] = [
        "read_hamiltonian",
        "init_misc",
        "sp2_loop_x2",
        "sp2_loop_norm",
        "sp2_loop_misc",
    ];

    pub fn total(&self) -> f64 {
        self.read_hamiltonian
            + self.init_misc
            + self.sp2_loop_x2
            + self.sp2_loop_norm
            + self.sp2_loop_misc
    }

    pub fn as_map(&self) -> BTreeMap<&'static str, f64> {
        BTreeMap::from([
            ("read_hamiltonian", self.read_hamiltonian),
            ("init_misc", self.init_misc),
            ("sp2_loop_x2", self.sp2_loop_x2),
            ("sp2_loop_norm", self.sp2_loop_norm),
            ("sp2_loop_misc", self.sp2_loop_misc),
        ])
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Sp2Report {
    pub iterations: usize,
    pub per_iteration: Vec<IterationRecord>,
    pub phase_times: PhaseTimes,
}

impl Sp2Report {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }

    /// One CSV line of the phase columns, matching [`PhaseTimes::NAMES`].
    pub fn phases_csv_line(&self) -> String {
        let p = &self.phase_times;
        format!(
            "{:e},{:e},{:e},{:e},{:e}",
            p.read_hamiltonian, p.init_misc, p.sp2_loop_x2, p.sp2_loop_norm, p.sp2_loop_misc
        )
    }
}

/// Row-disc spectral bounds: `min_i (h_ii - R_i)` and `max_i (h_ii + R_i)`
/// with `R_i` the off-diagonal absolute row sum. Contains every eigenvalue
/// of a symmetric matrix.
pub fn gershgorin_bounds(h: &EllpackMatrix) -> (f64, f64) {
    let mut eps_min = f64::INFINITY;
    let mut eps_max = f64::NEG_INFINITY;
    for i in 0..h.n() {
        let mut center = 0.0;
        let mut radius = 0.0;
        for (&j, &v) in h.row_cols(i).iter().zip(h.row_vals(i)) {
            if j == i {
                center = v;
            } else {
                radius += v.abs();
            }
        }
        eps_min = eps_min.min(center - radius);
        eps_max = eps_max.max(center + radius);
    }
    if h.n() == 0 {
        (0.0, 0.0)
    } else {
        (eps_min, eps_max)
    }
}

/// Normalization step: `X0 = (eps_max I - H) / (eps_max - eps_min)`. Maps
/// the spectrum into `[0, 1]` and reverses its order so occupied states land
/// near 1.
pub fn sp2_init(
    engine: &EllpackEngine,
    h: &EllpackMatrix,
    bounds: (f64, f64),
    threshold: f64,
) -> Result<EllpackMatrix> {
    let (eps_min, eps_max) = bounds;
    if !(eps_max > eps_min) {
        return Err(Error::DegenerateBounds { eps_min, eps_max });
    }
    let width = eps_max - eps_min;
    let id = engine.identity(h.n())?;
    engine.add_scaled(eps_max / width, &id, -1.0 / width, h, threshold, None)
}

/// The SP2 iteration. Returns the density matrix and the per-iteration
/// trace/branch/error log with loop-phase timings (`read_hamiltonian` stays
/// zero here; [`run_proxy`] fills it).
pub fn sp2_basic(
    engine: &EllpackEngine,
    h: &EllpackMatrix,
    cfg: &Sp2Config,
) -> Result<(EllpackMatrix, Sp2Report)> {
    let n = h.n();
    cfg.validate(n)?;

    let init_start = Instant::now();
    let bounds = match cfg.bounds {
        Some(b) => b,
        None => gershgorin_bounds(h),
    };
    // A width-zero spectrum (H proportional to I) cannot be normalized;
    // widen artificially and let the iteration report the degeneracy.
    let bounds = if bounds.1 > bounds.0 {
        bounds
    } else {
        (bounds.0 - 0.5, bounds.1 + 0.5)
    };
    let mut x = sp2_init(engine, h, bounds, cfg.threshold)?;
    let init_misc = init_start.elapsed().as_secs_f64();

    let loop_start = Instant::now();
    let mut x2_time = 0.0;
    let mut norm_time = 0.0;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut converged = false;

    while records.len() < cfg.max_iterations {
        let t = Instant::now();
        let sq = engine.x_squared(&x, cfg.threshold, None)?;
        x2_time += t.elapsed().as_secs_f64();

        let t = Instant::now();
        let err = engine.fnorm_diff(&sq.matrix, &x)?;
        norm_time += t.elapsed().as_secs_f64();

        let branch = if sq.trace_x > cfg.n_occ as f64 {
            Branch::Square
        } else {
            Branch::Expand
        };
        records.push(IterationRecord {
            trace_x: sq.trace_x,
            branch,
            idempotency_error: err,
        });

        if err <= cfg.idempotency_tol {
            converged = true;
            break;
        }
        // Less than 10% improvement across a full window means the spectrum
        // is not polarizing (degenerate at the occupation level, or the
        // pruning threshold set an error floor above the tolerance).
        let k = records.len();
        if k > STAGNATION_WINDOW {
            let past = records[k - 1 - STAGNATION_WINDOW].idempotency_error;
            if err >= 0.9 * past {
                let report = finish_report(records, init_misc, loop_start, x2_time, norm_time);
                return Err(Error::NoConvergence {
                    iterations: report.iterations,
                    reason: "idempotency error stagnated over ten iterations",
                    report: Box::new(report),
                });
            }
        }

        x = match branch {
            Branch::Square => sq.matrix,
            Branch::Expand => engine.add_scaled(2.0, &x, -1.0, &sq.matrix, cfg.threshold, None)?,
        };
    }

    let report = finish_report(records, init_misc, loop_start, x2_time, norm_time);
    if !converged {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            reason: "iteration cap reached",
            report: Box::new(report),
        });
    }
    let occ_err = (x.trace() - cfg.n_occ as f64).abs();
    if occ_err > 10.0 * cfg.idempotency_tol * n as f64 {
        return Err(Error::NoConvergence {
            iterations: report.iterations,
            reason: "converged to the wrong occupation",
            report: Box::new(report),
        });
    }
    Ok((x, report))
}

fn finish_report(
    records: Vec<IterationRecord>,
    init_misc: f64,
    loop_start: Instant,
    x2_time: f64,
    norm_time: f64,
) -> Sp2Report {
    let loop_total = loop_start.elapsed().as_secs_f64();
    Sp2Report {
        iterations: records.len(),
        per_iteration: records,
        phase_times: PhaseTimes {
            read_hamiltonian: 0.0,
            init_misc,
            sp2_loop_x2: x2_time,
            sp2_loop_norm: norm_time,
            sp2_loop_misc: (loop_total - x2_time - norm_time).max(0.0),
        },
    }
}

/// Full proxy run: read a Matrix Market Hamiltonian, set up the pool per the
/// affinity and allocation policies, convert, iterate, and account every
/// phase.
pub struct ProxyOutcome {
    pub density: EllpackMatrix,
    pub report: Sp2Report,
}

pub fn run_proxy(
    hamiltonian_file: &Path,
    cfg: &Sp2Config,
    affinity: &AffinityPolicy,
    alloc: AllocPolicy,
) -> Result<ProxyOutcome> {
    let topo = MachineTopology::detect();
    run_proxy_on(hamiltonian_file, cfg, affinity, alloc, &topo)
}

/// [`run_proxy`] against an explicit topology (testable without pinning to
/// real CPUs).
pub fn run_proxy_on(
    hamiltonian_file: &Path,
    cfg: &Sp2Config,
    affinity: &AffinityPolicy,
    alloc: AllocPolicy,
    topo: &MachineTopology,
) -> Result<ProxyOutcome> {
    let t = Instant::now();
    let (n, mut entries) = mtx::read_coo(hamiltonian_file)?;
    let read_hamiltonian = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let workers = affinity.subset.workers();
    let pin_map = if affinity.migration_locked {
        Some(
            resolve_pin_map(affinity, topo)?
                .into_iter()
                .map(|(_, cpu)| cpu)
                .collect::<Vec<_>>(),
        )
    } else {
        None
    };
    let pool = ThreadPool::build(workers, pin_map)?;
    let engine = EllpackEngine::new(std::sync::Arc::new(pool), alloc);
    let h = engine.from_coo(n, &mut entries)?;
    drop(entries);
    let setup = t.elapsed().as_secs_f64();

    let (density, mut report) = sp2_basic(&engine, &h, cfg)?;
    report.phase_times.read_hamiltonian = read_hamiltonian;
    report.phase_times.init_misc += setup;
    Ok(ProxyOutcome { density, report })
}
