#![no_main]

use diamond::io::{read_limit_table, write_limit_rows};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok((m_max, rows)) = read_limit_table(data) else { return };
    let mut buf = Vec::new();
    write_limit_rows(m_max, &rows, &mut buf).expect("parsed rows have the right width");
    let (m2, again) = read_limit_table(buf.as_slice()).expect("written table reads back");
    assert_eq!((m2, again.len()), (m_max, rows.len()));
});
