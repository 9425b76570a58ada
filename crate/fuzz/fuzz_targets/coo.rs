#![no_main]

use hetcrf::graph::io::{format_coo, parse_coo};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok((matrix, metapath, adj)) = parse_coo(text, "dump.tsv") {
        let (m2, p2, again) = parse_coo(&format_coo(&adj, &matrix, &metapath), "dump.tsv").unwrap();
        assert_eq!((m2, p2), (matrix, metapath));
        assert_eq!(again, adj);
    }
});
