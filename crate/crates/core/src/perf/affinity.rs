//! Hardware subsets, placement policies, and worker-to-CPU pin maps.
//!
//! A subset string selects how much of the machine participates, in the
//! `<n>s,<n>t,<n>c` grammar: sockets, threads per core, cores per socket, in
//! any order, each unit at most once, missing units defaulting to 1. So
//! `"1t,2s,24c"` runs 48 workers (one per core on two 24-core sockets) and
//! `"2s,2t,24c"` runs 96.
//!
//! Placement decides where those workers land:
//!
//! * `compact` fills socket 0 core by core before moving to socket 1 —
//!   suited to compute-bound work that benefits from shared cache.
//! * `scatter` deals workers round-robin across sockets — suited to
//!   memory-bound work that wants both memory controllers busy.

use crate::error::{Error, Result};
use crate::perf::topology::MachineTopology;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HwSubset {
    pub sockets: usize,
    pub threads_per_core: usize,
    pub cores_per_socket: usize,
}

impl HwSubset {
    pub fn new(sockets: usize, threads_per_core: usize, cores_per_socket: usize) -> Result<Self> {
        if sockets == 0 || threads_per_core == 0 || cores_per_socket == 0 {
            return Err(Error::InvalidParams("subset counts must be >= 1"));
        }
        Ok(Self {
            sockets,
            threads_per_core,
            cores_per_socket,
        })
    }

    /// Total worker count the subset defines.
    pub fn workers(&self) -> usize {
        self.sockets * self.threads_per_core * self.cores_per_socket
    }

    /// The whole machine.
    pub fn full(topo: &MachineTopology) -> Self {
        Self {
            sockets: topo.socket_count().max(1),
            threads_per_core: topo.min_threads_per_core().max(1),
            cores_per_socket: topo.min_cores_per_socket().max(1),
        }
    }

    /// Canonical string form; `parse_subset(format_subset(s)) == s`.
    pub fn format(&self) -> String {
        format!(
            "{}s,{}t,{}c",
            self.sockets, self.threads_per_core, self.cores_per_socket
        )
    }
}

/// Parses the `s`/`t`/`c` subset grammar. Unknown units, repeated units,
/// malformed counts and empty tokens produce a `Parse` error carrying the
/// offending token.
pub fn parse_subset(s: &str) -> Result<HwSubset> {
    let mut sockets: Option<usize> = None;
    let mut threads: Option<usize> = None;
    let mut cores: Option<usize> = None;
    for token in s.split(',') {
        let token = token.trim();
        let bad = || Error::Parse {
            token: token.to_string(),
        };
        if token.len() < 2 {
            return Err(bad());
        }
        let (digits, unit) = token.split_at(token.len() - 1);
        let count: usize = digits.parse().map_err(|_| bad())?;
        if count == 0 {
            return Err(bad());
        }
        let slot = match unit {
            "s" => &mut sockets,
            "t" => &mut threads,
            "c" => &mut cores,
            _ => return Err(bad()),
        };
        if slot.replace(count).is_some() {
            return Err(bad());
        }
    }
    HwSubset::new(sockets.unwrap_or(1), threads.unwrap_or(1), cores.unwrap_or(1))
}

pub fn format_subset(s: &HwSubset) -> String {
    s.format()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Compact,
    Scatter,
}

impl std::fmt::Display for Placement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Placement::Compact => "compact",
            Placement::Scatter => "scatter",
        })
    }
}

/// Thread placement specification for one worker pool.
#[derive(Clone, Copy, Debug)]
pub struct AffinityPolicy {
    pub placement: Placement,
    pub subset: HwSubset,
    /// When set, each worker is pinned to its CPU for the pool's lifetime.
    pub migration_locked: bool,
}

impl AffinityPolicy {
    /// Compute-bound preset: all hardware threads, compact placement.
    pub fn compute_bound(topo: &MachineTopology) -> Self {
        Self {
            placement: Placement::Compact,
            subset: HwSubset::full(topo),
            migration_locked: true,
        }
    }

    /// Memory-bound preset: half the hardware threads *per socket*, scatter
    /// placement. Halving prefers dropping the second hardware thread per
    /// core; on machines without SMT it halves the cores per socket instead.
    pub fn memory_bound(topo: &MachineTopology) -> Self {
        let full = HwSubset::full(topo);
        let subset = if full.threads_per_core >= 2 {
            HwSubset {
                threads_per_core: full.threads_per_core / 2,
                ..full
            }
        } else {
            HwSubset {
                cores_per_socket: (full.cores_per_socket / 2).max(1),
                ..full
            }
        };
        Self {
            placement: Placement::Scatter,
            subset,
            migration_locked: true,
        }
    }
}

/// Ordered slot list (logical CPUs) of one socket restricted to a subset:
/// first hardware thread of each selected core, then the second, and so on.
/// Consecutive slots therefore land on consecutive cores.
fn socket_slots(
    socket: &crate::perf::topology::SocketTopo,
    cores: usize,
    threads: usize,
) -> Vec<usize> {
    let mut slots = Vec::with_capacity(cores * threads);
    for t in 0..threads {
        for core in &socket.cores[..cores] {
            slots.push(core.cpus[t]);
        }
    }
    slots
}

/// Ordered CPU list for the subset under a placement; length is
/// `subset.workers()`.
pub fn placement_order(
    policy_placement: Placement,
    subset: &HwSubset,
    topo: &MachineTopology,
) -> Result<Vec<usize>> {
    if subset.sockets > topo.socket_count() {
        return Err(Error::TopologyExceeded {
            what: "sockets",
            requested: subset.sockets,
            available: topo.socket_count(),
        });
    }
    let selected = &topo.sockets()[..subset.sockets];
    for socket in selected {
        if subset.cores_per_socket > socket.cores.len() {
            return Err(Error::TopologyExceeded {
                what: "cores per socket",
                requested: subset.cores_per_socket,
                available: socket.cores.len(),
            });
        }
        for core in &socket.cores[..subset.cores_per_socket] {
            if subset.threads_per_core > core.cpus.len() {
                return Err(Error::TopologyExceeded {
                    what: "threads per core",
                    requested: subset.threads_per_core,
                    available: core.cpus.len(),
                });
            }
        }
    }
    let per_socket: Vec<Vec<usize>> = selected
        .iter()
        .map(|s| socket_slots(s, subset.cores_per_socket, subset.threads_per_core))
        .collect();
    let total = subset.workers();
    let mut order = Vec::with_capacity(total);
    match policy_placement {
        Placement::Compact => {
            for slots in &per_socket {
                order.extend_from_slice(slots);
            }
        }
        Placement::Scatter => {
            // Worker i goes to socket (i mod sockets).
            for i in 0..total {
                let s = i % subset.sockets;
                order.push(per_socket[s][i / subset.sockets]);
            }
        }
    }
    Ok(order)
}

/// Pin map for a policy: worker index paired with its logical CPU.
pub fn resolve_pin_map(
    policy: &AffinityPolicy,
    topo: &MachineTopology,
) -> Result<Vec<(usize, usize)>> {
    let order = placement_order(policy.placement, &policy.subset, topo)?;
    Ok(order.into_iter().enumerate().collect())
}

/// First `workers` CPUs of the full-machine placement enumeration. Lets the
/// harness build pinned pools for arbitrary thread counts that do not factor
/// into an exact subset. Worker counts beyond the machine wrap around the
/// enumeration, so oversubscribed sweeps stay runnable (and pinned) on small
/// hosts.
pub fn pin_map_for_workers(
    placement: Placement,
    topo: &MachineTopology,
    workers: usize,
) -> Result<Vec<usize>> {
    if workers == 0 {
        return Err(Error::InvalidParams("worker count must be >= 1"));
    }
    let full = HwSubset::full(topo);
    let order = placement_order(placement, &full, topo)?;
    Ok((0..workers).map(|w| order[w % order.len()]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_worked_examples() {
        assert_eq!(parse_subset("2s,2t,24c").unwrap().workers(), 96);
        assert_eq!(parse_subset("1t,2s,24c").unwrap().workers(), 48);
        let one = parse_subset("1s").unwrap();
        assert_eq!(
            one,
            HwSubset {
                sockets: 1,
                threads_per_core: 1,
                cores_per_socket: 1
            }
        );
        assert_eq!(one.workers(), 1);
    }

    #[test]
    fn parse_rejects_bad_tokens() {
        for bad in ["", "2x", "s", "2s,3s", "-1s", "0c", "24"] {
            let err = parse_subset(bad).unwrap_err();
            match err {
                Error::Parse { .. } | Error::InvalidParams(_) => {}
                other => panic!("unexpected error {other:?}"),
            }
        }
    }

    #[test]
    fn format_parse_roundtrip() {
        let s = HwSubset::new(2, 2, 24).unwrap();
        assert_eq!(parse_subset(&s.format()).unwrap(), s);
    }

    #[test]
    fn scatter_alternates_sockets() {
        let topo = MachineTopology::synthetic(2, 2, 1);
        let subset = HwSubset::new(2, 1, 2).unwrap();
        let order = placement_order(Placement::Scatter, &subset, &topo).unwrap();
        let sockets: Vec<usize> = order
            .iter()
            .map(|&cpu| topo.socket_of_cpu(cpu).unwrap())
            .collect();
        assert_eq!(sockets, vec![0, 1, 0, 1]);
    }

    #[test]
    fn compact_fills_first_socket_first() {
        let topo = MachineTopology::synthetic(2, 2, 1);
        let subset = HwSubset::new(2, 1, 2).unwrap();
        let order = placement_order(Placement::Compact, &subset, &topo).unwrap();
        let sockets: Vec<usize> = order
            .iter()
            .map(|&cpu| topo.socket_of_cpu(cpu).unwrap())
            .collect();
        assert_eq!(sockets, vec![0, 0, 1, 1]);
    }

    #[test]
    fn single_worker_lands_on_socket_zero_core_zero() {
        let topo = MachineTopology::synthetic(2, 2, 1);
        let subset = HwSubset::new(1, 1, 1).unwrap();
        for placement in [Placement::Compact, Placement::Scatter] {
            let order = placement_order(placement, &subset, &topo).unwrap();
            assert_eq!(order, vec![0]);
        }
    }

    #[test]
    fn oversized_subset_is_rejected() {
        let topo = MachineTopology::synthetic(1, 2, 1);
        let subset = HwSubset::new(2, 1, 2).unwrap();
        let err = placement_order(Placement::Compact, &subset, &topo).unwrap_err();
        assert!(matches!(err, Error::TopologyExceeded { .. }));
    }

    #[test]
    fn memory_bound_halves_threads() {
        let topo = MachineTopology::synthetic(2, 24, 2);
        let p = AffinityPolicy::memory_bound(&topo);
        assert_eq!(p.placement, Placement::Scatter);
        assert_eq!(p.subset.workers(), 48);
        // No SMT: halve cores instead.
        let topo1 = MachineTopology::synthetic(2, 24, 1);
        let p1 = AffinityPolicy::memory_bound(&topo1);
        assert_eq!(p1.subset.workers(), 24);
    }

    #[test]
    fn pin_map_prefix_for_arbitrary_counts() {
        let topo = MachineTopology::synthetic(2, 4, 1);
        let map = pin_map_for_workers(Placement::Scatter, &topo, 3).unwrap();
        let sockets: Vec<usize> = map
            .iter()
            .map(|&cpu| topo.socket_of_cpu(cpu).unwrap())
            .collect();
        assert_eq!(sockets, vec![0, 1, 0]);
        // Oversubscription wraps around the enumeration.
        let wrapped = pin_map_for_workers(Placement::Compact, &topo, 9).unwrap();
        assert_eq!(wrapped.len(), 9);
        assert_eq!(wrapped[8], wrapped[0]);
    }
}
