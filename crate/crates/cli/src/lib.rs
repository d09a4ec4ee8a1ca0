//! Library side of the `multiview` binary: config parsing, the end-to-end
//! pipeline and the standalone subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod extremes;
pub mod outputs;
pub mod pipeline;
pub mod regress;
pub mod sources;

pub use error::{CliError, Result};

/// Sizes the worker pool. Dense linear algebra always runs single-threaded
/// so results do not depend on the thread count.
pub fn init_runtime(threads: Option<usize>) {
    faer::set_global_parallelism(faer::Par::Seq);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        builder = builder.num_threads(t.max(1));
    }
    if let Err(e) = builder.build_global() {
        log::debug!("thread pool already initialized: {e}");
    }
}
