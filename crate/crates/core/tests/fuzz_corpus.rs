//! The checked-in fuzz seeds are valid inputs; keep them that way.

use std::fs;
use std::path::PathBuf;

use qdiscord::circuit::read_renormalized_csv;
use qdiscord::cli::Manifest;
use qdiscord::dataset;
use qdiscord::features::read_kernels_csv;
use qdiscord::network::{decode_checkpoint, CheckpointMeta};

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn dataset_seeds_decode() {
    for (p, b) in seeds("dataset_decode") {
        assert!(dataset::decode(&b).is_ok(), "{}", p.display());
    }
}

#[test]
fn checkpoint_seeds_decode() {
    for (p, b) in seeds("checkpoint_decode") {
        assert!(decode_checkpoint(&b).is_ok(), "{}", p.display());
    }
}

#[test]
fn csv_seeds_parse() {
    for (p, b) in seeds("kernels_csv") {
        assert!(read_kernels_csv(b.as_slice()).is_ok(), "{}", p.display());
    }
    for (p, b) in seeds("renormalized_csv") {
        assert!(read_renormalized_csv(b.as_slice()).is_ok(), "{}", p.display());
    }
}

#[test]
fn json_seeds_parse() {
    for (p, b) in seeds("manifest_json") {
        let manifest = serde_json::from_slice::<Manifest>(&b).is_ok();
        let meta = serde_json::from_slice::<CheckpointMeta>(&b).is_ok();
        assert!(manifest || meta, "{}", p.display());
    }
}
