#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_annotate::parse_log;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_log(text);
    }
});
