#![no_main]

use isokit::io::{encode_csv, parse_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(h) = parse_csv(data) {
        // anything accepted must survive a write/read cycle unchanged
        let again = parse_csv(encode_csv(&h).as_bytes()).expect("re-encoded CSV parses");
        assert_eq!(again.to_row_major(), h.to_row_major());
    }
});
