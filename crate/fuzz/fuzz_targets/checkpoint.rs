#![no_main]

use hetcrf::trainer::checkpoint::{decode_checkpoint, encode_checkpoint};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(state) = decode_checkpoint(data) {
        let bytes = encode_checkpoint(&state);
        let again = decode_checkpoint(&bytes).expect("re-encoded checkpoint decodes");
        assert_eq!(encode_checkpoint(&again), bytes);
    }
});
