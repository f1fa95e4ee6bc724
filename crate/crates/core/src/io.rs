//! Small file helpers shared by the artifact writers.

use std::io::Write;
use std::path::Path;

use crate::error::{KwsError, Result};

/// Writes `bytes` to a temp file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| KwsError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| KwsError::io(path, e))?;
    tmp.flush().map_err(|e| KwsError::io(path, e))?;
    tmp.persist(path).map_err(|e| KwsError::io(path, e.error))?;
    Ok(())
}

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| KwsError::io(path, e))
}
