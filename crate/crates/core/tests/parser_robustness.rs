use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use vpcc_rc::config::ExperimentConfig;
use vpcc_rc::rdlog::{parse_rate_curve_bytes, parse_rd_log_bytes, write_rate_curve, write_rd_log};

fn rd_log_round_trip(data: &[u8]) {
    if let Ok(log) = parse_rd_log_bytes(data) {
        let rows = log.rows();
        let mut out = Vec::new();
        write_rd_log(&mut out, &rows).unwrap();
        assert_eq!(parse_rd_log_bytes(&out).unwrap().rows(), rows);
    }
}

fn curve_round_trip(data: &[u8]) {
    if let Ok(curve) = parse_rate_curve_bytes(data) {
        let mut out = Vec::new();
        write_rate_curve(&mut out, &curve).unwrap();
        assert_eq!(parse_rate_curve_bytes(&out).unwrap(), curve);
    }
}

fn config_round_trip(data: &[u8]) {
    if let Ok(cfg) = std::str::from_utf8(data)
        .map_err(|_| ())
        .and_then(|t| ExperimentConfig::from_toml_str(t).map_err(|_| ()))
    {
        assert_eq!(ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
    }
}

fn corpus(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    files.into_iter().map(|p| (p.clone(), fs::read(p).unwrap())).collect()
}

#[test]
fn fuzz_seeds_replay_cleanly() {
    let logs = corpus("parse_rd_log");
    let curves = corpus("parse_rate_curve");
    let configs = corpus("parse_config");
    assert!(!logs.is_empty() && !curves.is_empty() && !configs.is_empty());
    for (_, d) in &logs {
        rd_log_round_trip(d);
    }
    for (_, d) in &curves {
        curve_round_trip(d);
    }
    for (_, d) in &configs {
        config_round_trip(d);
    }
    let valid = logs.iter().find(|(p, _)| p.ends_with("valid")).unwrap();
    assert_eq!(parse_rd_log_bytes(&valid.1).unwrap().len(), 4);
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(data in prop::collection::vec(any::<u8>(), 0..256)) {
        rd_log_round_trip(&data);
        curve_round_trip(&data);
        config_round_trip(&data);
    }

    #[test]
    fn near_valid_logs_never_panic(
        fields in prop::collection::vec("[a-z0-9.eE+-]{0,8}", 7),
        stream in prop::sample::select(vec!["geometry", "color", "occ", "patch", "x"]),
    ) {
        let mut f = fields.clone();
        f[1] = stream.to_string();
        let text = format!("sequence,stream,frame_index,frame_type,qp,bits,psnr\n{}\n", f.join(","));
        rd_log_round_trip(text.as_bytes());
    }
}
