//! A seeded write schedule for crash testing: a child process applies it to
//! a durable store and reports each acknowledged step, the parent kills it
//! at a random moment and checks what survived.

use hub_core::model::{CaptureSource, EntryDetail, OriginSemantic, TagSet, Timestamp};
use hub_core::store::NewEntry;
use hub_core::{StoreError, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, PartialEq)]
pub enum WriteOp {
    Append(NewEntry),
    Redact(u64),
}

pub fn schedule(seed: u64, len: usize) -> Vec<WriteOp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut photos: Vec<u64> = Vec::new();
    let mut next_seq = 1;
    let mut ops = Vec::with_capacity(len);
    for i in 0..len as u64 {
        let roll = rng.random_range(0..10);
        if roll < 2 && !photos.is_empty() {
            ops.push(WriteOp::Redact(photos[rng.random_range(0..photos.len())]));
            continue;
        }
        let entry = if roll < 7 {
            let mut bytes = vec![0u8; rng.random_range(64..4096)];
            rng.fill(bytes.as_mut_slice());
            photos.push(next_seq);
            let tags: TagSet = "object".parse().expect("tag");
            NewEntry::new(Timestamp(i * 10), "cam0", EntryDetail::Photo { tags, source: CaptureSource::Manual })
                .with_semantic(OriginSemantic::Manual)
                .with_payload(bytes)
        } else {
            let value = rng.random_range(0.0..1000.0);
            let detail = EntryDetail::Reading { channel: "lux".into(), value, normalized: None, unit: "lx".into() };
            NewEntry::new(Timestamp(i * 10), "sensor1", detail)
        };
        next_seq += 1;
        ops.push(WriteOp::Append(entry));
    }
    ops
}

pub fn apply(store: &mut Store, op: &WriteOp) -> Result<(), StoreError> {
    match op {
        WriteOp::Append(e) => store.append(e.clone()).map(drop),
        WriteOp::Redact(seq) => store.redact(*seq, "p1", Timestamp(0)).map(drop),
    }
}

/// Digest of a fresh in-memory store after the first `n` operations.
pub fn prefix_digest(ops: &[WriteOp], n: usize) -> String {
    let mut store = Store::in_memory();
    for op in &ops[..n] {
        apply(&mut store, op).expect("schedule applies cleanly");
    }
    store.digest()
}
