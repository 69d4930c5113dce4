//! Machine topology: sockets, cores, hardware threads.
//!
//! Detection reads the Linux sysfs CPU enumeration. When socket information
//! is unavailable (non-Linux, containers with masked sysfs) the machine is
//! treated as a single socket of single-thread cores; scatter placement then
//! degenerates to compact, which is documented behavior rather than an error.

use std::path::Path;

#[derive(Clone, Debug)]
pub struct CoreTopo {
    pub id: usize,
    /// Logical CPUs (hardware threads) of this core, ascending.
    pub cpus: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct SocketTopo {
    pub id: usize,
    pub cores: Vec<CoreTopo>,
}

#[derive(Clone, Debug)]
pub struct MachineTopology {
    sockets: Vec<SocketTopo>,
}

impl MachineTopology {
    pub fn detect() -> Self {
        #[cfg(target_os = "linux")]
        {
            if let Some(t) = Self::from_sysfs(Path::new("/sys/devices/system/cpu")) {
                return t;
            }
        }
        Self::fallback()
    }

    /// Synthetic topology for tests: logical CPU ids are assigned
    /// socket-major, then core, then hardware thread.
    pub fn synthetic(sockets: usize, cores_per_socket: usize, threads_per_core: usize) -> Self {
        let mut cpu = 0;
        let sockets = (0..sockets)
            .map(|s| SocketTopo {
                id: s,
                cores: (0..cores_per_socket)
                    .map(|c| CoreTopo {
                        id: c,
                        cpus: (0..threads_per_core)
                            .map(|_| {
                                let id = cpu;
                                cpu += 1;
                                id
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        Self { sockets }
    }

    fn fallback() -> Self {
        let cpus = std::thread::available_parallelism()
            .map(|p| p.get())
            .unwrap_or(1);
        Self::synthetic(1, cpus, 1)
    }

    #[cfg(target_os = "linux")]
    fn from_sysfs(base: &Path) -> Option<Self> {
        use std::collections::BTreeMap;

        let online = std::fs::read_to_string(base.join("online")).ok()?;
        let cpus = parse_id_list(online.trim())?;
        if cpus.is_empty() {
            return None;
        }
        // (package, core) -> cpus
        let mut map: BTreeMap<usize, BTreeMap<usize, Vec<usize>>> = BTreeMap::new();
        for cpu in cpus {
            let topo = base.join(format!("cpu{cpu}/topology"));
            let pkg: usize = std::fs::read_to_string(topo.join("physical_package_id"))
                .ok()?
                .trim()
                .parse()
                .ok()?;
            let core: usize = std::fs::read_to_string(topo.join("core_id"))
                .ok()?
                .trim()
                .parse()
                .ok()?;
            map.entry(pkg).or_default().entry(core).or_default().push(cpu);
        }
        let sockets = map
            .into_iter()
            .map(|(id, cores)| SocketTopo {
                id,
                cores: cores
                    .into_iter()
                    .map(|(id, mut cpus)| {
                        cpus.sort_unstable();
                        CoreTopo { id, cpus }
                    })
                    .collect(),
            })
            .collect();
        Some(Self { sockets })
    }

    pub fn sockets(&self) -> &[SocketTopo] {
        &self.sockets
    }

    pub fn socket_count(&self) -> usize {
        self.sockets.len()
    }

    pub fn is_multi_socket(&self) -> bool {
        self.sockets.len() > 1
    }

    pub fn total_logical_cpus(&self) -> usize {
        self.sockets
            .iter()
            .flat_map(|s| &s.cores)
            .map(|c| c.cpus.len())
            .sum()
    }

    pub fn min_cores_per_socket(&self) -> usize {
        self.sockets.iter().map(|s| s.cores.len()).min().unwrap_or(0)
    }

    pub fn min_threads_per_core(&self) -> usize {
        self.sockets
            .iter()
            .flat_map(|s| &s.cores)
            .map(|c| c.cpus.len())
            .min()
            .unwrap_or(0)
    }

    /// Socket index (position, not id) a logical CPU belongs to.
    pub fn socket_of_cpu(&self, cpu: usize) -> Option<usize> {
        self.sockets.iter().position(|s| {
            s.cores.iter().any(|c| c.cpus.contains(&cpu))
        })
    }
}

/// Parses sysfs id lists like `0-3,8-11`.
#[cfg_attr(not(target_os = "linux"), allow(dead_code))]
fn parse_id_list(s: &str) -> Option<Vec<usize>> {
    let mut ids = Vec::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        if let Some((lo, hi)) = part.split_once('-') {
            let lo: usize = lo.parse().ok()?;
            let hi: usize = hi.parse().ok()?;
            ids.extend(lo..=hi);
        } else {
            ids.push(part.parse().ok()?);
        }
    }
    Some(ids)
}
