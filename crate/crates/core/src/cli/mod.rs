//! The `emoseq` command-line tool: synthetic data, frame extraction,
//! training, evaluation and CTC decoding.

mod commands;
pub mod config;
pub mod dataset;
pub mod manifest;
pub mod synth;

pub use commands::{main_with_args, run, run_args, Cli, Command};

use std::io::Write;
use std::path::Path;

use crate::{Error, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(dir.to_path_buf(), e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::Io(dir.to_path_buf(), e))?;
    tmp.write_all(bytes).map_err(|e| Error::Io(path.to_path_buf(), e))?;
    tmp.persist(path).map_err(|e| Error::Io(path.to_path_buf(), e.error))?;
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io(path.to_path_buf(), e))
}
