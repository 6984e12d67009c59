#![no_main]

use libfuzzer_sys::fuzz_target;
use vpcc_rc::metrics::bd_rate;
use vpcc_rc::rdlog::{parse_rate_curve_bytes, write_rate_curve};

fuzz_target!(|data: &[u8]| {
    if let Ok(curve) = parse_rate_curve_bytes(data) {
        let mut out = Vec::new();
        write_rate_curve(&mut out, &curve).unwrap();
        assert_eq!(parse_rate_curve_bytes(&out).unwrap(), curve);
        let _ = bd_rate(&curve, &curve);
    }
});
