#![no_main]

use libfuzzer_sys::fuzz_target;
use qdiscord::features::read_kernels_csv;

fuzz_target!(|data: &[u8]| {
    let _ = read_kernels_csv(data);
});
