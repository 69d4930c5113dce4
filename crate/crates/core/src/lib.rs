//! Sparse linear-algebra kernels in the ELLPACK layout, a second-order
//! spectral-projection (SP2) density-matrix solver, model Hamiltonian
//! generation for three physical system classes, and a benchmark harness
//! that compares "baseline" against "tuned" builds of four thread-level
//! optimizations: strength reduction, NUMA first-touch data placement,
//! cache-line-aligned allocation, and thread affinity/binding.
//!
//! Layout:
//!
//! * [`ellpack`] — row-padded sparse storage and the threshold-pruned
//!   multiply / x-squared / scaled-add / trace / norm kernels.
//! * [`perf`] — worker pool, static partitioner, policy-driven allocation,
//!   topology detection, affinity handling, and the paired micro-kernels.
//! * [`model`] — model Hamiltonian generation, sparsity, density of states.
//! * [`oracle`] — dense reference product, Jacobi eigensolver, exact density
//!   matrix; the independent check for everything above.
//! * [`sp2`] — the SP2 iteration and the phase-timed proxy run.
//! * [`bench`] — baseline/tuned experiment orchestration and CSV emission.
//! * [`mtx`] — Matrix Market coordinate I/O.

pub mod bench;
pub mod dense;
pub mod ellpack;
pub mod error;
pub mod model;
pub mod mtx;
pub mod oracle;
pub mod perf;
pub mod rng;
pub mod sp2;

pub use dense::DenseMatrix;
pub use ellpack::{EllpackEngine, EllpackMatrix, XSquared};
pub use error::{Error, Result};
