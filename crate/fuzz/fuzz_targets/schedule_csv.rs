#![no_main]

use diamond::io::{read_schedule, write_schedule};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(rows) = read_schedule(data) else { return };
    let mut buf = Vec::new();
    write_schedule(&rows, &mut buf).unwrap();
    let again = read_schedule(buf.as_slice()).expect("written schedule reads back");
    assert_eq!(again.len(), rows.len());
    assert!(again.iter().zip(&rows).all(|(a, b)| a.n == b.n));
});
