//! Execution of independent trials, sequentially or in parallel.
//!
//! Every parallel entry point in this crate is deterministic: work is split
//! into chunks whose boundaries depend only on the input size, each chunk is
//! processed with its own derived seed, and partial results are folded in
//! chunk order. Outputs are therefore bit-identical across [`ExecMode`]s and
//! thread counts.

/// How a batch of independent trials is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    /// One trial after another on the calling thread.
    Sequential,
    /// Data-parallel over a rayon pool. Without the `parallel` feature this
    /// falls back to sequential execution.
    Parallel,
}

impl ExecMode {
    /// The default mode: parallel when compiled in, sequential otherwise.
    pub fn auto() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// Reads the `PRIDDA_THREADS` concurrency cap from the environment.
///
/// Unset, empty, zero, or unparseable values mean "no cap".
pub fn thread_cap_from_env() -> Option<usize> {
    std::env::var("PRIDDA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
}

/// Maps `f` over `items`, preserving order.
pub fn map_indexed<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    map_indexed_capped(mode, None, items, f)
}

/// Like [`map_indexed`] with an optional thread cap (e.g. `PRIDDA_THREADS`).
pub fn map_indexed_capped<T, U, F>(
    mode: ExecMode,
    thread_cap: Option<usize>,
    items: &[T],
    f: F,
) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    match mode {
        ExecMode::Sequential => items.iter().enumerate().map(|(i, t)| f(i, t)).collect(),
        ExecMode::Parallel => parallel_map(thread_cap, items, f),
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, U, F>(thread_cap: Option<usize>, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    use rayon::prelude::*;
    let run = || items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    match thread_cap {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(_) => run(),
        },
        None => run(),
    }
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, U, F>(_thread_cap: Option<usize>, items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> U + Sync,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Fixed chunking for deterministic parallel reductions.
///
/// Returns `(start, len)` pairs covering `0..total`; boundaries depend only
/// on `total`, never on the thread count.
pub fn fixed_chunks(total: usize) -> Vec<(usize, usize)> {
    const TARGET_CHUNKS: usize = 64;
    if total == 0 {
        return Vec::new();
    }
    let chunks = TARGET_CHUNKS.min(total);
    let base = total / chunks;
    let rem = total % chunks;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    for c in 0..chunks {
        let len = base + usize::from(c < rem);
        out.push((start, len));
        start += len;
    }
    out
}
