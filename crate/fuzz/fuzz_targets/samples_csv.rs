#![no_main]

use diamond::io::{read_samples_csv, write_samples_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(xs) = read_samples_csv(data) else { return };
    let mut buf = Vec::new();
    write_samples_csv(&xs, &mut buf).unwrap();
    let ys = read_samples_csv(buf.as_slice()).expect("written samples read back");
    assert_eq!(xs.len(), ys.len());
    for (x, y) in xs.iter().zip(&ys) {
        assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()));
    }
});
