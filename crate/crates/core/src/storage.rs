//! Chain files on disk.
//!
//! A chain file holds the canonical JSON document `{"blocks":[...]}` followed
//! by a newline. Writes go to a temporary file in the same directory which is
//! then renamed over the target, so readers only ever see a complete chain.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::ledger::{Blockchain, LedgerError};

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> LedgerError + '_ {
    move |source| LedgerError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_chain(path: &Path) -> Result<Blockchain, LedgerError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Blockchain::from_json(&bytes)
}

pub fn save_chain(path: &Path, chain: &Blockchain) -> Result<(), LedgerError> {
    write_atomic(path, &chain_file_bytes(chain), || Ok(()))
}

pub fn chain_file_bytes(chain: &Blockchain) -> Vec<u8> {
    let mut bytes = chain.to_canonical_json();
    bytes.push(b'\n');
    bytes
}

/// Writes `bytes` to a temp file, runs `before_rename`, then renames into
/// place. An error from `before_rename` aborts the write and removes the temp
/// file, leaving `path` as it was.
pub(crate) fn write_atomic(
    path: &Path,
    bytes: &[u8],
    before_rename: impl FnOnce() -> io::Result<()>,
) -> Result<(), LedgerError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::Builder::new()
        .prefix(".chain-")
        .suffix(".tmp")
        .tempfile_in(dir)
        .map_err(io_err(dir))?;
    tmp.write_all(bytes).map_err(io_err(tmp.path()))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    before_rename().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| io_err(path)(e.error))?;
    Ok(())
}

/// Exclusive writer lock on a chain file, held as `<chain>.lock` and removed
/// on drop.
#[derive(Debug)]
pub struct ChainLock {
    path: PathBuf,
    _file: File,
}

impl ChainLock {
    pub fn acquire(chain_path: &Path) -> Result<Self, LedgerError> {
        let mut name = chain_path.as_os_str().to_owned();
        name.push(".lock");
        let path = PathBuf::from(name);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                let _ = writeln!(file, "{}", std::process::id());
                Ok(ChainLock { path, _file: file })
            }
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => {
                Err(LedgerError::Locked(chain_path.display().to_string()))
            }
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for ChainLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
