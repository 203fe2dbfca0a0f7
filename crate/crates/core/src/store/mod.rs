//! Append-only timeline store with participant redaction and annotation.
//!
//! On disk a store directory holds `timeline.log`, one checksummed metadata
//! record per line, and `payloads/`, one file per payload named by its
//! SHA-256. Redaction appends a tombstone record and then overwrites and
//! removes the payload file; reopening finishes any purge a crash
//! interrupted.

mod bundle;
mod log;
mod payloads;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use bundle::{export_bundle, import_bundle, BundleManifest};
pub use payloads::content_ref;

use crate::error::StoreError;
use crate::model::{
    Annotation, EntryDetail, EntryKind, OriginSemantic, PayloadRef, Redaction, TimelineEntry, Timestamp,
};
use crate::pipeline::{semantic_of, CaptureOutcome};
use log::{LogRecord, MetaLog};
use payloads::Payloads;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Durability {
    /// fsync every record before acknowledging it.
    Sync,
    /// Leave flushing to the OS. Records are still written in order.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tombstone {
    pub entry_seq: u64,
    pub actor: String,
    pub ts: Timestamp,
}

/// An entry before the store assigns its sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct NewEntry {
    pub ts: Timestamp,
    pub node: String,
    pub semantic: Option<OriginSemantic>,
    pub detail: EntryDetail,
    pub payload: Option<Vec<u8>>,
}

impl NewEntry {
    pub fn new(ts: Timestamp, node: impl Into<String>, detail: EntryDetail) -> Self {
        NewEntry { ts, node: node.into(), semantic: None, detail, payload: None }
    }

    pub fn with_semantic(mut self, semantic: OriginSemantic) -> Self {
        self.semantic = Some(semantic);
        self
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = Some(payload);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimelineQuery {
    pub from: Option<Timestamp>,
    pub to: Option<Timestamp>,
    pub kinds: Option<BTreeSet<EntryKind>>,
    pub include_redacted_metadata: bool,
}

impl TimelineQuery {
    pub fn all() -> Self {
        TimelineQuery { include_redacted_metadata: true, ..Default::default() }
    }
}

pub const EMPTY_DIGEST: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";

pub struct Store {
    entries: Vec<TimelineEntry>,
    refcounts: HashMap<PayloadRef, usize>,
    payloads: Payloads,
    log: Option<MetaLog>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store")
            .field("entries", &self.entries.len())
            .field("log", &self.log.as_ref().map(|l| l.path().to_path_buf()))
            .finish()
    }
}

impl Store {
    pub fn in_memory() -> Self {
        Store { entries: Vec::new(), refcounts: HashMap::new(), payloads: Payloads::Memory(HashMap::new()), log: None }
    }

    /// Opens or creates a store directory, recovering the longest intact
    /// prefix of the log and shredding payloads no live entry references.
    pub fn open(dir: impl AsRef<Path>, durability: Durability) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        let mut entries: Vec<TimelineEntry> = Vec::new();
        let (log, _) = MetaLog::open(dir, durability, |rec| match rec {
            LogRecord::Entry(e) => {
                let ok = e.seq == entries.len() as u64 + 1 && e.check().is_ok();
                if ok {
                    entries.push(e.clone());
                }
                ok
            }
            LogRecord::Tombstone(t) => match entries.get_mut(t.entry_seq.wrapping_sub(1) as usize) {
                Some(e) if e.kind != EntryKind::Annotation => {
                    apply_tombstone(e, t);
                    true
                }
                _ => false,
            },
        })?;
        let mut store = Store { entries, refcounts: HashMap::new(), payloads: Payloads::open_dir(dir, durability)?, log: Some(log) };
        store.rebuild_refcounts();
        store.payloads.sweep(&store.refcounts)?;
        Ok(store)
    }

    fn rebuild_refcounts(&mut self) {
        self.refcounts.clear();
        for r in self.entries.iter().filter_map(|e| e.payload_ref.as_ref()) {
            *self.refcounts.entry(r.clone()).or_default() += 1;
        }
    }

    pub fn is_persistent(&self) -> bool {
        self.log.is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in sequence order.
    pub fn entries(&self) -> &[TimelineEntry] {
        &self.entries
    }

    pub fn get(&self, seq: u64) -> Option<&TimelineEntry> {
        seq.checked_sub(1).and_then(|i| self.entries.get(i as usize))
    }

    pub fn next_seq(&self) -> u64 {
        self.entries.len() as u64 + 1
    }

    /// Appends an entry and returns its sequence number. The payload, if any,
    /// is written before the metadata record, so a crash leaves at worst an
    /// unreferenced payload that the next open shreds.
    pub fn append(&mut self, new: NewEntry) -> Result<u64, StoreError> {
        let seq = self.next_seq();
        let payload_ref = match &new.payload {
            Some(bytes) => Some(self.payloads.put(bytes)?),
            None => None,
        };
        let entry = TimelineEntry {
            seq,
            ts: new.ts,
            kind: new.detail.kind(),
            node: new.node,
            semantic: new.semantic,
            payload_ref: payload_ref.clone(),
            redacted: false,
            redaction: None,
            detail: new.detail,
        };
        entry.check().map_err(|e| StoreError::Corrupt { path: Default::default(), reason: e.to_string() })?;
        if let Some(log) = &mut self.log {
            if let Err(e) = log.append(&LogRecord::Entry(entry.clone())) {
                if let Some(r) = &payload_ref {
                    if !self.refcounts.contains_key(r) {
                        let _ = self.payloads.purge(r);
                    }
                }
                return Err(e);
            }
        }
        if let Some(r) = payload_ref {
            *self.refcounts.entry(r).or_default() += 1;
        }
        self.entries.push(entry);
        Ok(seq)
    }

    /// Redacts an entry's payload irrecoverably and leaves a tombstone.
    /// Redacting twice returns the original tombstone.
    pub fn redact(&mut self, seq: u64, actor: &str, ts: Timestamp) -> Result<Tombstone, StoreError> {
        let entry = self.get(seq).ok_or(StoreError::NotFound(seq))?;
        if let Some(r) = &entry.redaction {
            return Ok(Tombstone { entry_seq: seq, actor: r.actor.clone(), ts: r.ts });
        }
        if entry.kind == EntryKind::Annotation || (entry.kind != EntryKind::Photo && entry.payload_ref.is_none()) {
            return Err(StoreError::NotRedactable { seq, kind: entry.kind });
        }
        let tomb = Tombstone { entry_seq: seq, actor: actor.to_string(), ts };
        if let Some(log) = &mut self.log {
            log.append(&LogRecord::Tombstone(tomb.clone()))?;
        }
        let entry = &mut self.entries[seq as usize - 1];
        let purged = entry.payload_ref.clone();
        apply_tombstone(entry, &tomb);
        if let Some(r) = purged {
            let count = self.refcounts.get_mut(&r).map(|c| {
                *c -= 1;
                *c
            });
            if count == Some(0) {
                self.refcounts.remove(&r);
                self.payloads.purge(&r)?;
            }
        }
        Ok(tomb)
    }

    /// Links a participant note to an entry, redacted or not. The note is
    /// itself stored as an annotation entry whose seq is the returned id.
    pub fn annotate(&mut self, seq: u64, actor: &str, text: &str, ts: Timestamp) -> Result<Annotation, StoreError> {
        if self.get(seq).is_none() {
            return Err(StoreError::NotFound(seq));
        }
        if text.trim().is_empty() {
            return Err(StoreError::EmptyAnnotation);
        }
        let detail = EntryDetail::Annotation { target: seq, actor: actor.to_string(), text: text.to_string() };
        let id = self.append(NewEntry::new(ts, actor, detail))?;
        Ok(Annotation { id, entry_seq: seq, actor: actor.to_string(), ts, text: text.to_string() })
    }

    pub fn annotations_for(&self, seq: u64) -> Vec<Annotation> {
        self.entries
            .iter()
            .filter_map(|e| match &e.detail {
                EntryDetail::Annotation { target, actor, text } if *target == seq => Some(Annotation {
                    id: e.seq,
                    entry_seq: seq,
                    actor: actor.clone(),
                    ts: e.ts,
                    text: text.clone(),
                }),
                _ => None,
            })
            .collect()
    }

    /// Entries in `[from, to]` sorted by `(ts, seq)`.
    pub fn timeline(&self, q: &TimelineQuery) -> Vec<TimelineEntry> {
        if let (Some(from), Some(to)) = (q.from, q.to) {
            if from > to {
                return Vec::new();
            }
        }
        let mut out: Vec<TimelineEntry> = self
            .entries
            .iter()
            .filter(|e| q.from.is_none_or(|f| e.ts >= f) && q.to.is_none_or(|t| e.ts <= t))
            .filter(|e| q.kinds.as_ref().is_none_or(|k| k.contains(&e.kind)))
            .filter(|e| q.include_redacted_metadata || !e.redacted)
            .cloned()
            .collect();
        out.sort_by_key(|e| (e.ts, e.seq));
        out
    }

    /// Payload bytes of a live entry. Redacted entries never yield bytes.
    pub fn payload(&self, seq: u64) -> Result<Vec<u8>, StoreError> {
        let entry = self.get(seq).ok_or(StoreError::NotFound(seq))?;
        match (&entry.payload_ref, entry.redacted) {
            (Some(r), false) => self.payloads.get(r),
            _ => Err(StoreError::PayloadUnavailable(seq)),
        }
    }

    /// SHA-256 over `(seq, ts, kind, semantic, redacted)` of every entry in
    /// sequence order. Payload bytes do not contribute.
    pub fn digest(&self) -> String {
        digest_entries(&self.entries)
    }

    /// Re-reads every entry's stored payload; used by exports.
    pub(crate) fn live_payloads(&self) -> Result<Vec<(PayloadRef, Vec<u8>)>, StoreError> {
        let mut refs: Vec<&PayloadRef> = self.refcounts.keys().collect();
        refs.sort();
        refs.into_iter().map(|r| Ok((r.clone(), self.payloads.get(r)?))).collect()
    }

    /// Payload bytes currently held by an in-memory store.
    pub fn memory_payloads(&self) -> Vec<Vec<u8>> {
        self.payloads.iter_memory().map(|it| it.map(|(_, b)| b.clone()).collect()).unwrap_or_default()
    }

    /// Inserts a fully formed entry; only used when rebuilding from a bundle.
    pub(crate) fn restore(&mut self, entry: TimelineEntry, payload: Option<&[u8]>) -> Result<(), StoreError> {
        if entry.seq != self.next_seq() {
            return Err(StoreError::Bundle(format!("entry {} out of sequence", entry.seq)));
        }
        entry.check().map_err(|e| StoreError::Bundle(e.to_string()))?;
        if let (Some(r), Some(bytes)) = (&entry.payload_ref, payload) {
            let written = self.payloads.put(bytes)?;
            if &written != r {
                return Err(StoreError::Bundle(format!("payload of entry {} does not match its hash", entry.seq)));
            }
        } else if entry.payload_ref.is_some() {
            return Err(StoreError::Bundle(format!("payload of entry {} missing", entry.seq)));
        }
        if let Some(log) = &mut self.log {
            log.append(&LogRecord::Entry(entry.clone()))?;
        }
        if let Some(r) = &entry.payload_ref {
            *self.refcounts.entry(r.clone()).or_default() += 1;
        }
        self.entries.push(entry);
        Ok(())
    }
}

fn apply_tombstone(entry: &mut TimelineEntry, tomb: &Tombstone) {
    entry.redacted = true;
    entry.redaction = Some(Redaction { actor: tomb.actor.clone(), ts: tomb.ts });
    entry.payload_ref = None;
    if entry.kind == EntryKind::Photo {
        entry.semantic = Some(semantic_of(CaptureOutcome::Redacted));
    }
}

pub fn digest_entries<'a>(entries: impl IntoIterator<Item = &'a TimelineEntry>) -> String {
    let mut h = Sha256::new();
    for e in entries {
        let semantic = e.semantic.map_or("-", |s| s.as_str());
        h.update(format!("{}\t{}\t{}\t{}\t{}\n", e.seq, e.ts.0, e.kind.as_str(), semantic, u8::from(e.redacted)));
    }
    hex::encode(h.finalize())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CaptureSource, NoticeKind, TagSet};

    fn photo(ts: u64, bytes: &[u8]) -> NewEntry {
        NewEntry::new(
            Timestamp(ts),
            "cam",
            EntryDetail::Photo { tags: "object".parse::<TagSet>().unwrap(), source: CaptureSource::Cadence },
        )
        .with_semantic(OriginSemantic::Available)
        .with_payload(bytes.to_vec())
    }

    fn notice(ts: u64) -> NewEntry {
        NewEntry::new(Timestamp(ts), "hub", EntryDetail::Notice { notice: NoticeKind::CaptureNotice })
    }

    #[test]
    fn seqs_start_at_one_and_increase() {
        let mut s = Store::in_memory();
        assert_eq!(s.append(notice(1)).unwrap(), 1);
        assert_eq!(s.append(notice(1)).unwrap(), 2);
    }

    #[test]
    fn redaction_hides_payload_and_is_idempotent() {
        let mut s = Store::in_memory();
        s.append(notice(0)).unwrap();
        let seq = s.append(photo(1, b"secret-bytes")).unwrap();
        assert_eq!(s.payload(seq).unwrap(), b"secret-bytes");
        let t1 = s.redact(seq, "p1", Timestamp(5)).unwrap();
        let t2 = s.redact(seq, "p2", Timestamp(9)).unwrap();
        assert_eq!(t1, t2);
        assert!(matches!(s.payload(seq), Err(StoreError::PayloadUnavailable(_))));
        let e = s.get(seq).unwrap();
        assert!(e.redacted && e.payload_ref.is_none());
        assert_eq!(e.semantic, Some(OriginSemantic::DeletedByParticipant));
        assert!(s.memory_payloads().is_empty());
    }

    #[test]
    fn redaction_errors() {
        let mut s = Store::in_memory();
        let n = s.append(notice(0)).unwrap();
        let a = s.annotate(n, "p1", "hello", Timestamp(1)).unwrap();
        assert!(matches!(s.redact(99, "p", Timestamp(0)), Err(StoreError::NotFound(99))));
        assert!(matches!(s.redact(a.id, "p", Timestamp(0)), Err(StoreError::NotRedactable { .. })));
        assert!(matches!(s.redact(n, "p", Timestamp(0)), Err(StoreError::NotRedactable { .. })));
    }

    #[test]
    fn annotations() {
        let mut s = Store::in_memory();
        let p = s.append(photo(1, b"shoes")).unwrap();
        let a = s.annotate(p, "p1", "went to gym", Timestamp(2)).unwrap();
        assert_eq!(s.annotations_for(p), vec![a]);
        s.redact(p, "p1", Timestamp(3)).unwrap();
        assert!(s.annotate(p, "p1", "deleted because of guests", Timestamp(4)).is_ok());
        assert!(matches!(s.annotate(p, "p1", "  ", Timestamp(4)), Err(StoreError::EmptyAnnotation)));
        assert!(matches!(s.annotate(42, "p1", "x", Timestamp(4)), Err(StoreError::NotFound(42))));
    }

    #[test]
    fn timeline_filters_and_orders() {
        let mut s = Store::in_memory();
        assert!(s.timeline(&TimelineQuery::all()).is_empty());
        s.append(notice(30)).unwrap();
        s.append(photo(10, b"a")).unwrap();
        s.append(notice(10)).unwrap();
        let all = s.timeline(&TimelineQuery::all());
        let order: Vec<u64> = all.iter().map(|e| e.seq).collect();
        assert_eq!(order, vec![2, 3, 1]);
        let photos = s.timeline(&TimelineQuery {
            kinds: Some([EntryKind::Photo].into_iter().collect()),
            ..TimelineQuery::all()
        });
        assert_eq!(photos.len(), 1);
        let window = s.timeline(&TimelineQuery { from: Some(Timestamp(11)), to: Some(Timestamp(30)), ..TimelineQuery::all() });
        assert_eq!(window.len(), 1);
        s.redact(2, "p", Timestamp(40)).unwrap();
        assert_eq!(s.timeline(&TimelineQuery::default()).len(), 2);
    }

    #[test]
    fn digest_properties() {
        let mut s = Store::in_memory();
        assert_eq!(s.digest(), EMPTY_DIGEST);
        let p = s.append(photo(1, b"x")).unwrap();
        let before = s.digest();
        s.redact(p, "p", Timestamp(2)).unwrap();
        assert_ne!(before, s.digest());
    }

    #[test]
    fn persistent_store_reopens_and_continues() {
        let dir = tempfile::tempdir().unwrap();
        let digest = {
            let mut s = Store::open(dir.path(), Durability::Sync).unwrap();
            s.append(photo(1, b"first")).unwrap();
            s.append(photo(2, b"second")).unwrap();
            s.redact(1, "p", Timestamp(3)).unwrap();
            s.digest()
        };
        let mut s = Store::open(dir.path(), Durability::Sync).unwrap();
        assert_eq!(s.digest(), digest);
        assert_eq!(s.payload(2).unwrap(), b"second");
        assert_eq!(s.append(notice(4)).unwrap(), 3);
        let files: Vec<_> = fs::read_dir(dir.path().join("payloads")).unwrap().collect();
        assert_eq!(files.len(), 1);
    }

    #[test]
    fn torn_tail_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut s = Store::open(dir.path(), Durability::Sync).unwrap();
            s.append(photo(1, b"kept")).unwrap();
            s.append(photo(2, b"torn")).unwrap();
        }
        let log = dir.path().join("timeline.log");
        let bytes = fs::read(&log).unwrap();
        fs::write(&log, &bytes[..bytes.len() - 7]).unwrap();
        let s = Store::open(dir.path(), Durability::Sync).unwrap();
        assert_eq!(s.len(), 1);
        let files: Vec<_> = fs::read_dir(dir.path().join("payloads")).unwrap().collect();
        assert_eq!(files.len(), 1, "orphaned payload shredded");
    }

    #[test]
    fn shared_content_survives_one_redaction() {
        let mut s = Store::in_memory();
        let a = s.append(photo(1, b"same")).unwrap();
        let b = s.append(photo(2, b"same")).unwrap();
        s.redact(a, "p", Timestamp(3)).unwrap();
        assert_eq!(s.payload(b).unwrap(), b"same");
        s.redact(b, "p", Timestamp(4)).unwrap();
        assert!(s.memory_payloads().is_empty());
    }
}
