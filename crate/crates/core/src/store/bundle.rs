//! Export bundles: a zip archive (stored, uncompressed) holding
//! `manifest.json` and one `payloads/<hash>` member per live payload.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{Cursor, Read, Seek, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, ZipArchive, ZipWriter};

use super::{digest_entries, Durability, Store};
use crate::error::StoreError;
use crate::model::TimelineEntry;

pub const MANIFEST_NAME: &str = "manifest.json";
const FORMAT: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub format: u32,
    pub digest: String,
    pub entries: Vec<TimelineEntry>,
}

fn zip_err(e: zip::result::ZipError) -> StoreError {
    StoreError::Bundle(e.to_string())
}

/// Writes all metadata and every non-redacted payload.
pub fn export_bundle<W: Write + Seek>(store: &Store, out: W) -> Result<W, StoreError> {
    let manifest =
        BundleManifest { format: FORMAT, digest: store.digest(), entries: store.entries().to_vec() };
    let opts = SimpleFileOptions::default().compression_method(CompressionMethod::Stored);
    let mut zip = ZipWriter::new(out);
    zip.start_file(MANIFEST_NAME, opts).map_err(zip_err)?;
    serde_json::to_writer_pretty(&mut zip, &manifest).map_err(std::io::Error::other)?;
    for (r, bytes) in store.live_payloads()? {
        zip.start_file(format!("payloads/{r}"), opts).map_err(zip_err)?;
        zip.write_all(&bytes)?;
    }
    zip.finish().map_err(zip_err)
}

/// Rebuilds a store from a bundle, either in memory or into `dir`. The
/// rebuilt digest must equal the manifest's.
pub fn import_bundle<R: Read + Seek>(input: R, dir: Option<(&Path, Durability)>) -> Result<Store, StoreError> {
    let mut zip = ZipArchive::new(input).map_err(zip_err)?;
    let manifest: BundleManifest = {
        let member = zip.by_name(MANIFEST_NAME).map_err(zip_err)?;
        serde_json::from_reader(member).map_err(|e| StoreError::Bundle(e.to_string()))?
    };
    if manifest.format != FORMAT {
        return Err(StoreError::Bundle(format!("unsupported bundle format {}", manifest.format)));
    }
    if digest_entries(&manifest.entries) != manifest.digest {
        return Err(StoreError::Bundle("manifest digest mismatch".into()));
    }
    let mut payloads: HashMap<String, Vec<u8>> = HashMap::new();
    for i in 0..zip.len() {
        let mut member = zip.by_index(i).map_err(zip_err)?;
        if let Some(name) = member.name().strip_prefix("payloads/") {
            let name = name.to_string();
            let mut bytes = Vec::new();
            member.read_to_end(&mut bytes)?;
            payloads.insert(name, bytes);
        }
    }
    let mut store = match dir {
        Some((path, durability)) => {
            let store = Store::open(path, durability)?;
            if !store.is_empty() {
                return Err(StoreError::Bundle(format!("{} is not an empty store", path.display())));
            }
            store
        }
        None => Store::in_memory(),
    };
    for entry in manifest.entries {
        let payload = entry.payload_ref.as_ref().and_then(|r| payloads.get(&r.0)).map(Vec::as_slice);
        store.restore(entry, payload)?;
    }
    debug_assert_eq!(store.digest(), manifest.digest);
    Ok(store)
}

impl Store {
    pub fn export_bytes(&self) -> Result<Vec<u8>, StoreError> {
        Ok(export_bundle(self, Cursor::new(Vec::new()))?.into_inner())
    }

    /// Writes the bundle to `path` atomically.
    pub fn export(&self, path: impl AsRef<Path>) -> Result<(), StoreError> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        let file = File::create(&tmp)?;
        export_bundle(self, file)?.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn import(path: impl AsRef<Path>, dir: Option<(&Path, Durability)>) -> Result<Store, StoreError> {
        import_bundle(File::open(path)?, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CaptureSource, EntryDetail, OriginSemantic, TagSet, Timestamp};
    use crate::store::NewEntry;

    fn photo(ts: u64, bytes: &[u8]) -> NewEntry {
        NewEntry::new(
            Timestamp(ts),
            "cam",
            EntryDetail::Photo { tags: "object".parse::<TagSet>().unwrap(), source: CaptureSource::Manual },
        )
        .with_semantic(OriginSemantic::Manual)
        .with_payload(bytes.to_vec())
    }

    #[test]
    fn empty_bundle_round_trips() {
        let store = Store::in_memory();
        let bytes = store.export_bytes().unwrap();
        let back = import_bundle(Cursor::new(bytes), None).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.digest(), store.digest());
    }

    #[test]
    fn round_trip_preserves_digest_and_excludes_redacted() {
        let mut store = Store::in_memory();
        store.append(photo(1, b"PAYLOAD-ONE-keep")).unwrap();
        store.append(photo(2, b"PAYLOAD-TWO-gone")).unwrap();
        store.redact(2, "p1", Timestamp(3)).unwrap();
        let bytes = store.export_bytes().unwrap();
        assert!(bytes.windows(16).any(|w| w == b"PAYLOAD-ONE-keep"));
        assert!(!bytes.windows(16).any(|w| w == b"PAYLOAD-TWO-gone"));

        let dir = tempfile::tempdir().unwrap();
        let back = import_bundle(Cursor::new(bytes), Some((dir.path(), Durability::Sync))).unwrap();
        assert_eq!(back.digest(), store.digest());
        assert_eq!(back.payload(1).unwrap(), b"PAYLOAD-ONE-keep");
        let reopened = Store::open(dir.path(), Durability::Sync).unwrap();
        assert_eq!(reopened.digest(), store.digest());
    }

    #[test]
    fn unwritable_destination_is_an_error() {
        let store = Store::in_memory();
        assert!(store.export("/nonexistent-dir/bundle.zip").is_err());
    }
}
