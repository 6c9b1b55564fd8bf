#![no_main]

use isokit::io::{decode_raw, encode_raw};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(h) = decode_raw(data) {
        assert_eq!(encode_raw(&h), data);
    }
});
