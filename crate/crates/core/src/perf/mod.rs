//! Thread-level performance primitives: the worker pool, policy-driven
//! allocation, topology detection, affinity handling, and the paired
//! baseline/tuned micro-kernels.

pub mod affinity;
pub mod alloc;
pub mod kernels;
pub mod partition;
pub mod pool;
pub mod topology;

pub use affinity::{
    format_subset, parse_subset, pin_map_for_workers, placement_order, resolve_pin_map,
    AffinityPolicy, HwSubset, Placement,
};
pub use alloc::{allocate, allocate_elems, allocate_rows, AlignedBuf, AllocPolicy, InitMode};
pub use kernels::{kernel_ft, kernel_ma, kernel_sr, sr_outputs, KernelResult, Variant};
pub use partition::{partition, partition_aligned};
pub use pool::{current_cpu, pin_current_thread, ThreadPool};
pub use topology::MachineTopology;
