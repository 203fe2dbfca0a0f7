//! Append-only metadata log: one checksummed JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Durability, Tombstone};
use crate::error::StoreError;
use crate::model::TimelineEntry;

pub(crate) const LOG_FILE: &str = "timeline.log";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub(crate) enum LogRecord {
    Entry(TimelineEntry),
    Tombstone(Tombstone),
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    rec: LogRecord,
    sum: String,
}

fn checksum(rec: &LogRecord) -> Result<String, StoreError> {
    let bytes = serde_json::to_vec(rec).map_err(std::io::Error::other)?;
    Ok(hex::encode(&Sha256::digest(&bytes)[..8]))
}

pub(crate) fn encode(rec: &LogRecord) -> Result<Vec<u8>, StoreError> {
    let line = LogLine { sum: checksum(rec)?, rec: rec.clone() };
    let mut bytes = serde_json::to_vec(&line).map_err(std::io::Error::other)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn decode(line: &[u8]) -> Option<LogRecord> {
    let parsed: LogLine = serde_json::from_slice(line).ok()?;
    (checksum(&parsed.rec).ok()? == parsed.sum).then_some(parsed.rec)
}

pub(crate) struct MetaLog {
    path: PathBuf,
    file: File,
    len: u64,
    durability: Durability,
}

impl MetaLog {
    /// Opens the log and returns every intact record. A torn or corrupt tail
    /// is cut off; `accept` decides whether a decoded record is consistent
    /// with the records before it.
    pub(crate) fn open(
        dir: &Path,
        durability: Durability,
        mut accept: impl FnMut(&LogRecord) -> bool,
    ) -> Result<(MetaLog, Vec<LogRecord>), StoreError> {
        let path = dir.join(LOG_FILE);
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut records = Vec::new();
        let mut good = 0u64;
        {
            let mut reader = BufReader::new(&mut file);
            reader.seek(SeekFrom::Start(0))?;
            let mut buf = Vec::new();
            loop {
                buf.clear();
                let n = reader.read_until(b'\n', &mut buf)?;
                if n == 0 || buf.last() != Some(&b'\n') {
                    break;
                }
                match decode(&buf[..n - 1]) {
                    Some(rec) if accept(&rec) => {
                        records.push(rec);
                        good += n as u64;
                    }
                    _ => break,
                }
            }
        }
        if file.metadata()?.len() != good {
            file.set_len(good)?;
            file.sync_all()?;
        }
        Ok((MetaLog { path, file, len: good, durability }, records))
    }

    /// Appends one record; durable before return under `Durability::Sync`.
    /// On failure the log is rolled back to its previous length.
    pub(crate) fn append(&mut self, rec: &LogRecord) -> Result<(), StoreError> {
        let bytes = encode(rec)?;
        let result = self.file.write_all(&bytes).and_then(|_| match self.durability {
            Durability::Sync => self.file.sync_data(),
            Durability::Relaxed => Ok(()),
        });
        match result {
            Ok(()) => {
                self.len += bytes.len() as u64;
                Ok(())
            }
            Err(e) => {
                let _ = self.file.set_len(self.len);
                Err(StoreError::Io(e))
            }
        }
    }

    pub(crate) fn path(&self) -> &Path {
        &self.path
    }
}
