//! Fan-out of independent jobs over scoped worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::thread;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "ENSEMBLE_LAB_THREADS";

/// Worker count: `ENSEMBLE_LAB_THREADS` when it is a positive integer,
/// otherwise the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
}

/// `f(0), …, f(count-1)` computed on at most `threads` workers, returned
/// in index order.
pub fn map_indexed<T, F>(count: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = threads.clamp(1, count.max(1));
    let next = AtomicUsize::new(0);
    let mut done: Vec<(usize, T)> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let k = next.fetch_add(1, Ordering::Relaxed);
                        if k >= count {
                            break local;
                        }
                        local.push((k, f(k)));
                    }
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    done.sort_by_key(|(k, _)| *k);
    done.into_iter().map(|(_, t)| t).collect()
}
