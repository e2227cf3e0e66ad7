#![no_main]

use libfuzzer_sys::fuzz_target;
use qdiscord::cli::Manifest;
use qdiscord::network::CheckpointMeta;

fuzz_target!(|data: &[u8]| {
    let _ = serde_json::from_slice::<Manifest>(data);
    let _ = serde_json::from_slice::<CheckpointMeta>(data);
});
