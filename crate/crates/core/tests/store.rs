use hub_core::model::{EntryDetail, Timestamp};
use hub_core::store::NewEntry;
use hub_core::{Durability, Store};
use proptest::prelude::*;

fn reading(ts: u64, value: f64) -> NewEntry {
    let detail = EntryDetail::Reading { channel: "lux".into(), value, normalized: Some(value / 1e3), unit: "lx".into() };
    NewEntry::new(Timestamp(ts), "sensor1", detail)
}

#[test]
fn awkward_floats_survive_a_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = Store::open(dir.path(), Durability::Relaxed).unwrap();
    store.append(reading(0, 906.2699184619701)).unwrap();
    store.append(reading(1, 142.48552240661616)).unwrap();
    let digest = store.digest();
    drop(store);
    let again = Store::open(dir.path(), Durability::Relaxed).unwrap();
    assert_eq!((again.len(), again.digest()), (2, digest));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn readings_reload_bit_for_bit(values in prop::collection::vec(-1e12f64..1e12, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = Store::open(dir.path(), Durability::Relaxed).unwrap();
        for (i, v) in values.iter().enumerate() {
            store.append(reading(i as u64, *v)).unwrap();
        }
        let digest = store.digest();
        drop(store);
        let again = Store::open(dir.path(), Durability::Relaxed).unwrap();
        prop_assert_eq!(again.len(), values.len());
        prop_assert_eq!(again.digest(), digest);
    }
}
