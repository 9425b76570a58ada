#![no_main]

use hetcrf::graph::io::parse_schema;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(schema) = parse_schema(text) {
            // Whatever parses must survive a round trip.
            let again = serde_json::to_string(&schema).unwrap();
            assert_eq!(parse_schema(&again).unwrap(), schema);
        }
    }
});
