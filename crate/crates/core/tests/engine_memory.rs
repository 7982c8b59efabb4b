//! Kept in its own binary so no other test allocates while RSS is sampled.

mod common;

use hsearch::bench::probe::{release_free_memory, rss_bytes};
use hsearch::engine::{index_bytes_on_disk, load_indexes, save_indexes, EngineConfig, LoadOptions};

#[test]
fn loaded_indexes_stay_mostly_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    {
        let data = common::synth(10_000, 23);
        let handle = data.build_handle(&EngineConfig::default()).unwrap();
        save_indexes(&handle, dir.path()).unwrap();
    }
    let on_disk = index_bytes_on_disk(dir.path()).unwrap();
    release_free_memory();
    let before = rss_bytes().unwrap();
    let handle = load_indexes(dir.path(), &LoadOptions::default()).unwrap();
    let after = rss_bytes().unwrap();
    let grown = after.saturating_sub(before);
    assert!(handle.tensors.as_ref().unwrap().is_file_backed());
    assert!(
        (grown as f64) < 0.5 * on_disk as f64,
        "resident growth {grown} vs {on_disk} bytes on disk"
    );
    assert!((handle.resident_index_bytes() as f64) < 0.5 * on_disk as f64);
    eprintln!("on disk {on_disk} B, resident growth {grown} B");
}
