#![no_main]

use diamond::io::{read_edge_array_csv, write_edge_array_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(a) = read_edge_array_csv(data) else { return };
    let mut buf = Vec::new();
    write_edge_array_csv(&a, &mut buf).expect("a parsed array writes back");
    let back = read_edge_array_csv(buf.as_slice()).expect("written array reads back");
    assert_eq!((back.b, back.level), (a.b, a.level));
    assert!(back.values.iter().zip(&a.values).all(|(x, y)| x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan())));
});
