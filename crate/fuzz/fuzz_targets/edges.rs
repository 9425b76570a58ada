//! First two bytes pick the adjacency shape, the rest is the edge list.

#![no_main]

use hetcrf::graph::io::parse_edges;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let [r, c, rest @ ..] = data else { return };
    let Ok(text) = std::str::from_utf8(rest) else { return };
    let (rows, cols) = (*r as usize, *c as usize);
    if let Ok(adj) = parse_edges(text, "edges.tsv", rows, cols) {
        assert_eq!((adj.rows(), adj.cols()), (rows, cols));
        for (i, j, v) in adj.iter() {
            assert!(i < rows && j < cols && v == 1.0);
        }
    }
});
