#![no_main]

use libfuzzer_sys::fuzz_target;
use qdiscord::circuit::{read_renormalized_csv, rotation_for};

fuzz_target!(|data: &[u8]| {
    if let Ok(bank) = read_renormalized_csv(data) {
        for r in bank.layer1.iter().chain(&bank.layer2) {
            assert!(rotation_for(r).unitarity_deviation() < 1e-9);
        }
        let _ = bank.to_kernel_bank();
    }
});
