//! Experiment harness: configuration, bound certification, training runs,
//! desk-scale studies, and plot emission. The binary is a thin dispatcher
//! over this crate so the test suites can drive the same entry points.

pub mod commands;
pub mod config;
pub mod report;
pub mod svg;

use std::sync::Mutex;

/// Map a closure over items on up to `threads` workers, preserving order.
/// Each item carries its own seed, so scheduling cannot change results.
pub fn parallel_map<T: Sync, R: Send>(
    threads: usize,
    items: &[T],
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    let results: Vec<Mutex<Option<R>>> = items.iter().map(|_| Mutex::new(None)).collect();
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker completed"))
        .collect()
}
