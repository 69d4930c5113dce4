//! Long-lived worker pool with optional CPU pinning.
//!
//! Workers are spawned once (typically once per benchmark variant), optionally
//! pinned to logical CPUs, and then reused for every parallel region. Work is
//! always split with the static partitioner — there is no work stealing, since
//! stealing would break the guarantee that the worker which first-touched a
//! block is the worker that computes on it.

use std::ops::Range;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Mutex;
use std::thread::JoinHandle;

use crate::error::Result;
use crate::perf::partition::partition;

/// Raw pointer wrapper that may cross thread boundaries. Used to hand each
/// worker a distinct slot or slice region; callers must guarantee disjoint
/// access.
pub(crate) struct SendPtr<T>(pub *mut T);

impl<T> Clone for SendPtr<T> {
    fn clone(&self) -> Self {
        *self
    }
}

impl<T> Copy for SendPtr<T> {}

unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}

impl<T> SendPtr<T> {
    #[inline]
    pub(crate) fn get(self) -> *mut T {
        self.0
    }
}

type Task = *const (dyn Fn(usize) + Sync);

struct Job(Task);
unsafe impl Send for Job {}

enum Message {
    Run(Job),
    Exit,
}

struct Dispatch {
    senders: Vec<Sender<Message>>,
    done: Receiver<bool>,
}

pub struct ThreadPool {
    inner: Mutex<Dispatch>,
    threads: usize,
    pin_map: Option<Vec<usize>>,
    handles: Vec<JoinHandle<()>>,
}

impl ThreadPool {
    /// Spawns `threads` workers. When `pin_map` is given (one logical CPU per
    /// worker) each worker binds itself to its CPU before accepting work and
    /// stays there for the pool's lifetime.
    pub fn build(threads: usize, pin_map: Option<Vec<usize>>) -> Result<Self> {
        assert!(threads >= 1, "a pool needs at least one worker");
        if let Some(map) = &pin_map {
            assert_eq!(map.len(), threads, "pin map must cover every worker");
        }
        let (done_tx, done_rx) = channel::<bool>();
        let mut senders = Vec::with_capacity(threads);
        let mut handles = Vec::with_capacity(threads);
        for w in 0..threads {
            let (tx, rx) = channel::<Message>();
            senders.push(tx);
            let done = done_tx.clone();
            let cpu = pin_map.as_ref().map(|m| m[w]);
            let handle = std::thread::Builder::new()
                .name(format!("worker-{w}"))
                .spawn(move || {
                    if let Some(cpu) = cpu {
                        pin_current_thread(cpu);
                    }
                    while let Ok(msg) = rx.recv() {
                        match msg {
                            Message::Run(job) => {
                                let ok = catch_unwind(AssertUnwindSafe(|| {
                                    // The pointer stays valid for the whole
                                    // job: `run` blocks until every worker
                                    // reports completion.
                                    let f = unsafe { &*job.0 };
                                    f(w);
                                }))
                                .is_ok();
                                if done.send(ok).is_err() {
                                    return;
                                }
                            }
                            Message::Exit => return,
                        }
                    }
                })
                .expect("failed to spawn worker thread");
            handles.push(handle);
        }
        Ok(Self {
            inner: Mutex::new(Dispatch {
                senders,
                done: done_rx,
            }),
            threads,
            pin_map,
            handles,
        })
    }

    /// Unpinned pool with one worker; useful for tests and serial paths.
    pub fn serial() -> Self {
        Self::build(1, None).expect("serial pool")
    }

    #[inline]
    pub fn threads(&self) -> usize {
        self.threads
    }

    pub fn pin_map(&self) -> Option<&[usize]> {
        self.pin_map.as_deref()
    }

    /// Runs `f(worker_index)` on every worker and blocks until all finish.
    pub fn run<F>(&self, f: F)
    where
        F: Fn(usize) + Sync,
    {
        let guard = self.inner.lock().expect("pool dispatch poisoned");
        let task: *const (dyn Fn(usize) + Sync + '_) = &f;
        // Lifetime erasure: the borrow outlives the dispatch because this
        // function does not return until all `threads` completions arrive.
        let task: Task = unsafe { std::mem::transmute(task) };
        for tx in &guard.senders {
            tx.send(Message::Run(Job(task))).expect("worker hung up");
        }
        let mut ok = true;
        for _ in 0..self.threads {
            ok &= guard.done.recv().expect("worker hung up");
        }
        drop(guard);
        if !ok {
            panic!("a pool worker panicked");
        }
    }

    /// Runs `f(worker, range)` where `range` is the worker's static share of
    /// `0..n`.
    pub fn run_partitioned<F>(&self, n: usize, f: F)
    where
        F: Fn(usize, Range<usize>) + Sync,
    {
        let threads = self.threads;
        self.run(|w| f(w, partition(n, threads, w)));
    }

    /// Logical CPU each worker currently runs on, in worker order. Linux
    /// only; elsewhere the entries are `None`.
    pub fn observed_cpus(&self) -> Vec<Option<usize>> {
        let mut cpus = vec![None; self.threads];
        let slot = SendPtr(cpus.as_mut_ptr());
        self.run(|w| {
            let v = current_cpu();
            unsafe { *slot.get().add(w) = v };
        });
        cpus
    }
}

impl Drop for ThreadPool {
    fn drop(&mut self) {
        if let Ok(guard) = self.inner.lock() {
            for tx in &guard.senders {
                let _ = tx.send(Message::Exit);
            }
        }
        for handle in self.handles.drain(..) {
            let _ = handle.join();
        }
    }
}

/// Binds the calling thread to one logical CPU. Best effort: on failure (or
/// off Linux) the thread simply stays unpinned.
#[cfg(target_os = "linux")]
pub fn pin_current_thread(cpu: usize) -> bool {
    unsafe {
        let mut set: libc::cpu_set_t = std::mem::zeroed();
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, std::mem::size_of::<libc::cpu_set_t>(), &set) == 0
    }
}

#[cfg(not(target_os = "linux"))]
pub fn pin_current_thread(_cpu: usize) -> bool {
    false
}

/// Logical CPU the calling thread is executing on, if the OS exposes it.
#[cfg(target_os = "linux")]
pub fn current_cpu() -> Option<usize> {
    let cpu = unsafe { libc::sched_getcpu() };
    (cpu >= 0).then_some(cpu as usize)
}

#[cfg(not(target_os = "linux"))]
pub fn current_cpu() -> Option<usize> {
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    #[test]
    fn all_workers_run() {
        let pool = ThreadPool::build(4, None).unwrap();
        let counter = AtomicUsize::new(0);
        pool.run(|_| {
            counter.fetch_add(1, Ordering::SeqCst);
        });
        assert_eq!(counter.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn partitioned_ranges_cover_input() {
        let pool = ThreadPool::build(3, None).unwrap();
        let n = 1000;
        let mut flags = vec![false; n];
        let ptr = SendPtr(flags.as_mut_ptr());
        pool.run_partitioned(n, |_, range| {
            for i in range {
                unsafe { *ptr.get().add(i) = true };
            }
        });
        assert!(flags.iter().all(|&b| b));
    }

    #[test]
    fn pool_is_reusable() {
        let pool = ThreadPool::build(2, None).unwrap();
        let counter = AtomicUsize::new(0);
        for _ in 0..50 {
            pool.run(|_| {
                counter.fetch_add(1, Ordering::SeqCst);
            });
        }
        assert_eq!(counter.load(Ordering::SeqCst), 100);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn pinned_worker_stays_on_its_cpu() {
        // Pin every worker to CPU 0; both observations must agree.
        let pool = ThreadPool::build(2, Some(vec![0, 0])).unwrap();
        let before = pool.observed_cpus();
        pool.run(|_| {
            let mut x = 0u64;
            for i in 0..100_000u64 {
                x = x.wrapping_add(i * i);
            }
            std::hint::black_box(x);
        });
        let after = pool.observed_cpus();
        assert_eq!(before, after);
        assert!(before.iter().all(|c| *c == Some(0)));
    }
}
