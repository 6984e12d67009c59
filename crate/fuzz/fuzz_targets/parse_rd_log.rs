#![no_main]

use libfuzzer_sys::fuzz_target;
use vpcc_rc::rdlog::{parse_rd_log_bytes, write_rd_log};

fuzz_target!(|data: &[u8]| {
    if let Ok(log) = parse_rd_log_bytes(data) {
        let rows = log.rows();
        let mut out = Vec::new();
        write_rd_log(&mut out, &rows).unwrap();
        let again = parse_rd_log_bytes(&out).unwrap();
        assert_eq!(again.rows(), rows);
    }
});
