//! Command-line tool around the MPI stereo engine: file formats, MPI
//! archives, job configuration, conversion, benchmarking and evaluation.

pub mod archive;
pub mod bench;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;

pub use error::{CliError, Result};

/// Environment variable bounding the worker pool.
pub const THREADS_ENV: &str = "MPI_STEREO_THREADS";

/// Sizes the global worker pool from `MPI_STEREO_THREADS` when set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| {
            CliError::Config(format!(
                "{THREADS_ENV} must be a positive integer, got {value:?}"
            ))
        })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}

/// Keeps freed frame-sized buffers in the process heap instead of returning
/// them to the kernel, so per-plane allocations do not page-fault on reuse.
pub fn tune_allocator() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}
