#![no_main]

use libfuzzer_sys::fuzz_target;
use qdiscord::dataset;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = dataset::decode(data) {
        // Anything accepted must survive a round trip unchanged.
        let again = dataset::decode(&dataset::encode(&samples)).expect("re-encoded dataset decodes");
        assert_eq!(again, samples);
    }
});
