//! Memory bank and transcript files (JSON lines).

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use fastslow_core::slow::{MemoryBank, MemoryEntry, TranscriptEntry};

use crate::{Error, Result};

/// Load a bank; a missing file gives an empty bank.
pub fn load_bank(path: &Path, capacity: usize) -> Result<MemoryBank> {
    let mut bank = MemoryBank::with_capacity(capacity);
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(bank),
        Err(e) => return Err(Error::io(path, e)),
    };
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: MemoryEntry = serde_json::from_str(&line)
            .map_err(|e| Error::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        bank.push(entry);
    }
    Ok(bank)
}

/// Write the whole bank, oldest entry first.
pub fn save_bank(path: &Path, bank: &MemoryBank) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in bank.iter() {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Append transcript entries to `path`.
pub fn append_transcript(path: &Path, entries: &[TranscriptEntry]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
