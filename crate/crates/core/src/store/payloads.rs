//! Content-addressed payload files.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::Durability;
use crate::error::StoreError;
use crate::model::PayloadRef;

pub(crate) const PAYLOAD_DIR: &str = "payloads";
const TMP_PREFIX: &str = ".tmp-";

pub fn content_ref(bytes: &[u8]) -> PayloadRef {
    PayloadRef(hex::encode(Sha256::digest(bytes)))
}

pub(crate) enum Payloads {
    Memory(HashMap<PayloadRef, Vec<u8>>),
    Dir { dir: PathBuf, durability: Durability },
}

impl Payloads {
    pub(crate) fn open_dir(root: &Path, durability: Durability) -> Result<Self, StoreError> {
        let dir = root.join(PAYLOAD_DIR);
        fs::create_dir_all(&dir)?;
        Ok(Payloads::Dir { dir, durability })
    }

    pub(crate) fn put(&mut self, bytes: &[u8]) -> Result<PayloadRef, StoreError> {
        let r = content_ref(bytes);
        match self {
            Payloads::Memory(map) => {
                map.entry(r.clone()).or_insert_with(|| bytes.to_vec());
            }
            Payloads::Dir { dir, durability } => {
                let path = dir.join(&r.0);
                if !path.exists() {
                    let tmp = dir.join(format!("{TMP_PREFIX}{}", r.0));
                    let mut f = File::create(&tmp)?;
                    f.write_all(bytes)?;
                    if *durability == Durability::Sync {
                        f.sync_all()?;
                    }
                    fs::rename(&tmp, &path)?;
                    if *durability == Durability::Sync {
                        File::open(&*dir)?.sync_all()?;
                    }
                }
            }
        }
        Ok(r)
    }

    pub(crate) fn get(&self, r: &PayloadRef) -> Result<Vec<u8>, StoreError> {
        match self {
            Payloads::Memory(map) => map
                .get(r)
                .cloned()
                .ok_or_else(|| StoreError::Io(std::io::Error::new(std::io::ErrorKind::NotFound, r.0.clone()))),
            Payloads::Dir { dir, .. } => Ok(fs::read(dir.join(&r.0))?),
        }
    }

    /// Overwrites the bytes before removing them so the content does not
    /// survive in the file.
    pub(crate) fn purge(&mut self, r: &PayloadRef) -> Result<(), StoreError> {
        match self {
            Payloads::Memory(map) => {
                if let Some(mut bytes) = map.remove(r) {
                    bytes.fill(0);
                }
                Ok(())
            }
            Payloads::Dir { dir, durability } => shred(&dir.join(&r.0), *durability == Durability::Sync),
        }
    }

    /// Shreds every file in the payload directory that is not in `live`,
    /// including leftovers of interrupted writes.
    pub(crate) fn sweep(&mut self, live: &HashMap<PayloadRef, usize>) -> Result<usize, StoreError> {
        let Payloads::Dir { dir, durability } = self else { return Ok(0) };
        let mut swept = 0;
        for item in fs::read_dir(&*dir)? {
            let item = item?;
            let name = item.file_name().to_string_lossy().into_owned();
            if !live.contains_key(&PayloadRef(name)) {
                shred(&item.path(), *durability == Durability::Sync)?;
                swept += 1;
            }
        }
        Ok(swept)
    }

    pub(crate) fn iter_memory(&self) -> Option<impl Iterator<Item = (&PayloadRef, &Vec<u8>)>> {
        match self {
            Payloads::Memory(map) => Some(map.iter()),
            Payloads::Dir { .. } => None,
        }
    }
}

fn shred(path: &Path, sync: bool) -> Result<(), StoreError> {
    let len = match fs::metadata(path) {
        Ok(m) => m.len(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    {
        let mut f = OpenOptions::new().write(true).open(path)?;
        let zeros = vec![0u8; 8192];
        let mut left = len;
        while left > 0 {
            let n = left.min(zeros.len() as u64) as usize;
            f.write_all(&zeros[..n])?;
            left -= n as u64;
        }
        f.sync_all()?;
    }
    fs::remove_file(path)?;
    if sync {
        if let Some(parent) = path.parent() {
            File::open(parent)?.sync_all()?;
        }
    }
    Ok(())
}
