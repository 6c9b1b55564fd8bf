//! Replays the checked-in fuzz corpus through every decoder on stable, with
//! the same round-trip assertions the fuzz targets make.

use std::fs;
use std::path::PathBuf;

use isokit::io::{decode_raw, encode_csv, encode_raw, parse_csv, parse_labels};
use isokit::normalize::MomentCache;
use isokit::synth::SyntheticSpec;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|entry| {
            let path = entry.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn csv_seeds() {
    let mut accepted = 0;
    for (name, bytes) in seeds("parse_csv") {
        if let Ok(h) = parse_csv(&bytes) {
            let again = parse_csv(encode_csv(&h).as_bytes()).unwrap();
            assert_eq!(again.to_row_major(), h.to_row_major(), "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn raw_seeds() {
    for (name, bytes) in seeds("decode_raw") {
        if let Ok(h) = decode_raw(&bytes) {
            assert_eq!(encode_raw(&h), bytes, "{name}");
        }
    }
}

#[test]
fn cache_seeds() {
    let results: Vec<(String, bool)> = seeds("cache_from_bytes")
        .into_iter()
        .map(|(name, bytes)| {
            let decoded = MomentCache::from_bytes(&bytes);
            if let Ok(cache) = &decoded {
                assert_eq!(cache.to_bytes(), bytes, "{name}");
            }
            (name, decoded.is_ok())
        })
        .collect();
    for (name, ok) in results {
        assert_eq!(ok, !matches!(name.as_str(), "asymmetric" | "overflow_dim"), "{name}");
    }
}

#[test]
fn label_and_spec_seeds() {
    for (name, bytes) in seeds("parse_labels") {
        let parsed = parse_labels(&bytes);
        assert_eq!(parsed.is_ok(), matches!(name.as_str(), "simple" | "header"), "{name}");
    }
    for (name, bytes) in seeds("synth_spec") {
        let valid = serde_json::from_slice::<SyntheticSpec>(&bytes)
            .map(|spec| spec.validate().is_ok())
            .unwrap_or(false);
        assert_eq!(valid, matches!(name.as_str(), "default" | "blocks" | "labels"), "{name}");
    }
}
