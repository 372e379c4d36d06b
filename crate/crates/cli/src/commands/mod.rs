pub mod evaluate;
pub mod fit;
pub mod forecast;
pub mod simulate;
pub mod sweep;

use crate::errors::{CliError, CliResult};

/// Creates the output directory and returns it.
pub fn ensure_out_dir(flag: Option<&std::path::Path>) -> CliResult<std::path::PathBuf> {
    let dir = crate::config::resolve_out_dir(flag);
    std::fs::create_dir_all(&dir)
        .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

/// A process-entropy seed when none was given; always recorded in manifests.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>) -> u64 {
    flag.or(config).unwrap_or_else(rand::random)
}
