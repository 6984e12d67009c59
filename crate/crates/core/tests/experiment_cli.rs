use std::fs;
use std::path::Path;
use std::process::Command;

use vpcc_rc::config::{ExperimentConfig, TargetSource};
use vpcc_rc::error::Stage;
use vpcc_rc::experiment::{read_report, run_experiment, totals_from_rows, write_reports};
use vpcc_rc::rdlog::{parse_rd_log, write_rd_log, RdLogRow};
use vpcc_rc::stream::Substream;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vpcc-rc"))
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn ledger_round_trips_through_the_parser() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        seed: 11,
        ..Default::default()
    };
    cfg.sequence.noise_sigma = Some(0.1);
    let b = run_experiment(&cfg).unwrap();
    write_reports(&b, dir.path()).unwrap();
    let log = parse_rd_log(dir.path().join("ledger.csv")).unwrap();
    assert_eq!(log.rows(), b.ledger);
    assert_eq!(log.len(), 64 + 64 + 32 + 32);
    assert_eq!(read_report(dir.path()).unwrap(), b);
}

#[test]
fn accounting_balances_exactly() {
    let b = run_experiment(&ExperimentConfig::default()).unwrap();
    let t = totals_from_rows(&b.ledger);
    let sum = |s: Substream| b.ledger.iter().filter(|r| r.stream == s).map(|r| r.bits).sum::<f64>();
    let parts = sum(Substream::Geometry) + sum(Substream::Color) + sum(Substream::Occ) + sum(Substream::Patch);
    assert_eq!(b.row("total").unwrap().actual_bits, parts);
    assert_eq!(t.total_bits, parts);
    assert!(b.total_error() <= 0.005);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig {
        seed: 3,
        ..Default::default()
    };
    cfg.sequence.noise_sigma = Some(0.05);
    cfg.output.dir = "out".into();
    write_reports(&run_experiment(&cfg).unwrap(), a.path()).unwrap();
    write_reports(&run_experiment(&cfg).unwrap(), c.path()).unwrap();
    assert_eq!(read_dir_sorted(a.path()), read_dir_sorted(c.path()));
}

#[test]
fn budget_failure_is_labelled() {
    let mut cfg = ExperimentConfig::default();
    cfg.target.source = TargetSource::Explicit;
    cfg.target.bits = Some(704_000.0);
    let e = run_experiment(&cfg).unwrap_err();
    assert_eq!(e.stage(), Some(Stage::Budget));
}

#[test]
fn rd_log_drives_the_model_fit() {
    let dir = tempfile::tempdir().unwrap();
    // D_G = -2/R + 70 and D_C = 100 R^0.1 - 80, R in Mbit, over two frames per QP
    let mut rows = Vec::new();
    for (i, r) in [1.0f64, 2.0, 4.0, 8.0].iter().enumerate() {
        for (stream, psnr) in [
            (Substream::Geometry, -2.0 / r + 70.0),
            (Substream::Color, 100.0 * r.powf(0.1) - 80.0),
        ] {
            for f in 0..2 {
                rows.push(RdLogRow {
                    sequence: "loot".into(),
                    stream,
                    frame_index: f,
                    frame_type: Some(if f == 0 {
                        vpcc_rc::FrameType::I
                    } else {
                        vpcc_rc::FrameType::P
                    }),
                    qp: 40 - 5 * i as u8,
                    bits: r * 5e5,
                    psnr: Some(psnr),
                });
            }
        }
    }
    let path = dir.path().join("log.csv");
    write_rd_log(fs::File::create(&path).unwrap(), &rows).unwrap();
    fs::write(dir.path().join("cfg.toml"), "[sequence]\nrd_log = \"log.csv\"\n").unwrap();
    let cfg = ExperimentConfig::load(dir.path().join("cfg.toml")).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert!((b.models.theta_g - 2.0).abs() < 1e-9);
    assert!((b.models.theta_c - 10.0).abs() < 1e-9);

    let out = bin().args(["fit", path.to_str().unwrap()]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("theta_g 2.000"));
}

#[test]
fn cli_simulate_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let st = bin()
        .args(["simulate", "--seed", "9", "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
    for f in [
        "ledger.csv",
        "summary.txt",
        "report.json",
        "curves.csv",
        "rd_points.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&st.stdout), summary);
    assert!(summary.contains("seed = 9"));
    let rep = bin().args(["report", out.to_str().unwrap()]).output().unwrap();
    assert!(rep.status.success());
    assert_eq!(String::from_utf8_lossy(&rep.stdout), summary);
}

#[test]
fn cli_failures_exit_nonzero_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let st = bin()
        .args([
            "simulate",
            "--target-bits",
            "1000",
            "--out",
            dir.path().to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!st.status.success());
    assert!(String::from_utf8_lossy(&st.stderr).contains("budget stage failed"));

    let st = bin()
        .args(["simulate", "--config", "/no/such/config.toml"])
        .output()
        .unwrap();
    assert!(!st.status.success());
}

#[test]
fn cli_allocate_and_bdrate() {
    let st = bin()
        .args([
            "allocate",
            "--theta-g",
            "1",
            "--theta-c",
            "1",
            "--weight",
            "25",
            "--kappa",
            "0.3",
        ])
        .output()
        .unwrap();
    assert!(st.status.success());
    assert!(String::from_utf8_lossy(&st.stdout).contains("lambda"));

    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let t = dir.path().join("t.csv");
    fs::write(&a, "rate,psnr\n100,30\n200,33\n400,36\n800,39\n").unwrap();
    fs::write(&t, "rate,psnr\n110,30\n220,33\n440,36\n880,39\n").unwrap();
    let st = bin()
        .args(["bdrate", a.to_str().unwrap(), t.to_str().unwrap()])
        .output()
        .unwrap();
    assert!(st.status.success());
    assert_eq!(String::from_utf8_lossy(&st.stdout).trim(), "10.00%");
}
