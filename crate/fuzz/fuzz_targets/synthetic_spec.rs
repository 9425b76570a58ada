#![no_main]

use hetcrf::graph::synthetic::SyntheticSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(spec) = serde_json::from_slice::<SyntheticSpec>(data) {
        let _ = spec.validate();
    }
});
