//! Replays the checked-in fuzz seeds through the decoders on stable.

use std::path::PathBuf;

use diamond::io::{decode_edge_array_bin, decode_samples_bin, read_edge_array_csv, read_limit_table, read_samples_csv, read_schedule};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn edge_array_seeds() {
    for (name, data) in seeds("edge_array_csv") {
        // one seed is deliberately a value short
        assert_eq!(read_edge_array_csv(data.as_slice()).is_ok(), name != "short", "{name}");
    }
    for (name, data) in seeds("edge_array_bin") {
        let a = decode_edge_array_bin(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(a.values.len(), a.b.pow(2 * a.level));
    }
}

#[test]
fn sample_seeds() {
    for (name, data) in seeds("samples_csv") {
        assert!(read_samples_csv(data.as_slice()).is_ok(), "{name}");
    }
    for (name, data) in seeds("samples_bin") {
        assert!(decode_samples_bin(&data).is_ok(), "{name}");
    }
}

#[test]
fn table_seeds() {
    for (name, data) in seeds("limit_table_csv") {
        let (m, rows) = read_limit_table(data.as_slice()).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(rows.iter().all(|r| r.higher.len() == m - 2));
    }
    for (name, data) in seeds("schedule_csv") {
        assert!(read_schedule(data.as_slice()).is_ok(), "{name}");
    }
}
