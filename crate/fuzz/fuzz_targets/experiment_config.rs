#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_cli::Config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = Config::parse(text) {
        let _ = cfg.validate();
    }
});
