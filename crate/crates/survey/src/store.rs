//! Append-only JSONL rating store.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use skintone_core::protocol::{entry_line, read_store, ProtocolError, StoreEntry};

/// Single appender over the store file. Every entry is written as one
/// complete line.
#[derive(Debug)]
pub struct Store {
    path: PathBuf,
    file: Mutex<File>,
    sync: bool,
}

impl Store {
    /// Opens `path` for appending, creating it when absent, and returns the
    /// entries already present. A torn final line is cut off first.
    pub fn open(path: impl AsRef<Path>, sync: bool) -> Result<(Self, Vec<StoreEntry>), ProtocolError> {
        let path = path.as_ref().to_path_buf();
        let existing = if path.exists() { snapshot(&path)? } else { Vec::new() };
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let complete = std::fs::read(&path)?.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        file.set_len(complete as u64)?;
        Ok((Self { path, file: Mutex::new(file), sync }, existing))
    }

    pub fn append(&self, entry: &StoreEntry) -> io::Result<()> {
        let line = entry_line(entry);
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(line.as_bytes())?;
        f.flush()?;
        if self.sync {
            f.sync_data()?;
        }
        Ok(())
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Current contents, read without taking the appender lock.
    pub fn snapshot(&self) -> Result<Vec<StoreEntry>, ProtocolError> {
        snapshot(&self.path)
    }
}

/// Parses the complete lines of a store file. A trailing partial line (an
/// append in flight or a torn write) is ignored.
pub fn snapshot(path: &Path) -> Result<Vec<StoreEntry>, ProtocolError> {
    let bytes = std::fs::read(path)?;
    let end = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    read_store(&bytes[..end])
}
