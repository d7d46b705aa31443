//! Atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::OUT_DIR_ENV;

/// Relative paths are placed under `COLLAPSE_OUT_DIR` when it is set.
pub fn resolve(path: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if path.is_relative() && !dir.is_empty() => PathBuf::from(dir).join(path),
        _ => path.to_path_buf(),
    }
}

/// Writes through a temporary file in the target directory and renames it
/// into place. Returns the final path.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<PathBuf, String> {
    let target = resolve(path);
    let dir = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| format!("cannot write in {}: {e}", dir.display()))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| format!("cannot write {}: {e}", target.display()))?;
    tmp.persist(&target)
        .map_err(|e| format!("cannot move report into {}: {}", target.display(), e.error))?;
    Ok(target)
}
