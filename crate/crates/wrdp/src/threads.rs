//! Thread-pool construction honoring the `WRDP_THREADS` cap.

use rayon::{ThreadPool, ThreadPoolBuilder};

/// Builds a rayon pool sized by `WRDP_THREADS` (unset or invalid means the
/// rayon default). All internal parallelism runs inside such a pool, and all
/// parallel reductions are order-fixed, so results never depend on the size.
pub fn thread_pool() -> ThreadPool {
    let threads = std::env::var("WRDP_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(0);
    ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool construction cannot fail with a sane configuration")
}
