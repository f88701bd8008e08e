//! File formats: configuration, event files, density-matrix series and the
//! CSV tables written by the command-line tool.

pub mod config;
pub mod events;
pub mod series;

use std::io::Write;
use std::path::Path;

use crate::error::Result;

pub use config::Config;
pub use events::EventFile;
pub use series::{MatrixSeries, SeriesRow};

/// Writes via a temporary file in the target directory and renames it into
/// place, so readers never see a half-written file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Comment line heading every CSV output.
pub fn provenance_line(config_hash: &str) -> String {
    format!("# qdcascade {} config-hash={config_hash}", crate::VERSION)
}
