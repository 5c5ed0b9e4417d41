#![no_main]

use diamond::io::{decode_edge_array_bin, write_edge_array_bin};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(a) = decode_edge_array_bin(data) {
        // the layout has no slack, so a valid input is its own encoding
        let mut buf = Vec::new();
        write_edge_array_bin(&a, &mut buf).unwrap();
        assert_eq!(buf, data);
    }
});
