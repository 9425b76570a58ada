#![no_main]

use hetcrf::graph::io::parse_features;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [n, rest @ ..] = data else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(m) = parse_features(text, "features.csv", *n as usize) {
        assert_eq!(m.nrows(), *n as usize);
        assert!(m.iter().all(|v| v.is_finite()));
    }
});
