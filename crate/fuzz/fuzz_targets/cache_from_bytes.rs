#![no_main]

use isokit::normalize::MomentCache;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cache) = MomentCache::from_bytes(data) {
        assert_eq!(cache.to_bytes(), data);
    }
});
