#![no_main]

use diamond::io::{decode_samples_bin, write_samples_bin};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(xs) = decode_samples_bin(data) {
        let mut buf = Vec::new();
        write_samples_bin(&xs, &mut buf).unwrap();
        assert_eq!(buf, data);
    }
});
