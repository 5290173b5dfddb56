//! Thread-count control.
//!
//! Every parallel kernel in this crate either produces integer/boolean output
//! or reduces in a fixed order per output element, so results are identical
//! at any thread count.

/// Environment variable capping internal parallelism.
pub const THREADS_ENV: &str = "VOXELGRAPH_THREADS";

/// Thread count from [`THREADS_ENV`], defaulting to 1.
pub fn threads_from_env() -> Result<usize, String> {
    match std::env::var(THREADS_ENV) {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("{THREADS_ENV}={s:?} is not a positive integer")),
        },
        Err(_) => Ok(1),
    }
}

/// Run `f` on a dedicated pool of `threads` workers.
pub fn with_threads<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .expect("failed to build thread pool")
        .install(f)
}
