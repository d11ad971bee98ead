pub mod canon;
pub mod discover;
pub mod sample;
pub mod stats;
pub mod timemap;

use std::path::Path;

use anyhow::{Context, Result};

use crate::config::RunConfig;

/// Config from `path` if given, otherwise defaults.
pub(crate) fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
