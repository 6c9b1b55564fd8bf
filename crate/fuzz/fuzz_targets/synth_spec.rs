#![no_main]

use isokit::synth::SyntheticSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<SyntheticSpec>(data) {
        // validation only; generating could allocate without bound
        let _ = spec.validate();
    }
});
