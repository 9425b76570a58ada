#![no_main]

use hetcrf::graph::io::parse_labels;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [n, rest @ ..] = data else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    if let Ok(labels) = parse_labels(text, "labels.tsv", *n as usize) {
        assert_eq!(labels.len(), *n as usize);
    }
});
