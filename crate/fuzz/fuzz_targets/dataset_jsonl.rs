#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_core::record::{parse_dataset, validate_mask};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ds) = parse_dataset(text) {
        for r in &ds.records {
            assert!(validate_mask(r.mask()));
        }
    }
});
