#![no_main]
use libfuzzer_sys::fuzz_target;
use quadfuse_core::embed::store::{decode_vector, encode_vector};

fuzz_target!(|data: &[u8]| {
    if let Ok(v) = decode_vector(data) {
        assert_eq!(v.len() * 4, data.len());
        if v.iter().all(|x| x.is_finite()) {
            let wide: Vec<f64> = v.iter().map(|&x| f64::from(x)).collect();
            assert_eq!(encode_vector(&wide), data);
        }
    }
});
