//! Replays the checked-in fuzz corpus through the parser entry points.
//! Every seed is a well-formed input except `checkpoint/future_version`.

use std::fs;
use std::path::PathBuf;

use hetcrf::graph::io::{format_coo, parse_coo, parse_edges, parse_features, parse_labels, parse_schema, parse_splits};
use hetcrf::graph::synthetic::SyntheticSpec;
use hetcrf::trainer::checkpoint::{decode_checkpoint, encode_checkpoint};
use hetcrf::trainer::TrainConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap()
}

#[test]
fn graph_file_seeds_parse() {
    for (name, b) in seeds("schema") {
        let s = parse_schema(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_schema(&serde_json::to_string(&s).unwrap()).unwrap(), s);
    }
    for (name, b) in seeds("edges") {
        let adj = parse_edges(text(&b[2..]), &name, b[0] as usize, b[1] as usize).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(adj.nnz() > 0, "{name}");
    }
    for (name, b) in seeds("features") {
        let m = parse_features(text(&b[1..]), &name, b[0] as usize).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(m.nrows(), b[0] as usize);
    }
    for (name, b) in seeds("labels") {
        assert_eq!(parse_labels(text(&b[1..]), &name, b[0] as usize).unwrap_or_else(|e| panic!("{name}: {e}")).len(), b[0] as usize);
    }
    for (name, b) in seeds("splits") {
        assert!(!parse_splits(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}")).is_empty());
    }
    for (name, b) in seeds("coo") {
        let (m, p, adj) = parse_coo(text(&b), &name).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(parse_coo(&format_coo(&adj, &m, &p), &name).unwrap(), (m, p, adj));
    }
}

#[test]
fn checkpoint_seeds_decode_or_reject() {
    for (name, b) in seeds("checkpoint") {
        match decode_checkpoint(&b) {
            Ok(state) => {
                assert_ne!(name, "future_version");
                let bytes = encode_checkpoint(&state);
                assert_eq!(bytes, b, "{name} does not re-encode to itself");
            }
            Err(e) => assert_eq!(name, "future_version", "{e}"),
        }
    }
}

#[test]
fn config_seeds_parse() {
    for (name, b) in seeds("train_config") {
        let cfg = TrainConfig::from_json(text(&b)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(TrainConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
    for (name, b) in seeds("synthetic_spec") {
        let spec: SyntheticSpec = serde_json::from_slice(&b).unwrap_or_else(|e| panic!("{name}: {e}"));
        spec.validate().unwrap();
    }
}
