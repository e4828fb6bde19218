//! Command-line front end for multi-context PCA.
//!
//! Every command is a plain function over an argument struct so it can be
//! driven from tests as well as from `main`.

pub mod commands;
pub mod error;
pub mod model_file;
pub mod table;

pub use commands::{Cli, Command};
pub use error::{CliError, Result};
pub use model_file::ModelFile;

/// Cap the global worker pool from `MCPCA_THREADS` (unset or 0 keeps the default).
pub fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var("MCPCA_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("MCPCA_THREADS must be a non-negative integer, got {value:?}")))?;
    if threads > 0 {
        // A pool that already exists (e.g. in tests) keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    Ok(())
}
