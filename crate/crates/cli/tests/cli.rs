use proptest::prelude::*;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use graftlab_cli::output::{emit_csv, parse_csv, Cell, Table};
use graftlab_cli::run;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn graftlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_graftlab"))
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn validate_presets_passes() {
    let out = graftlab(&["validate", "presets"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().skip(1).all(|l| l.contains(",true,")), "{text}");
}

#[test]
fn approx_has_a_row_per_t_and_branch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("approx.csv");
    let cfg = configs().join("approx.json");
    assert_eq!(
        run([
            "graftlab",
            "approx",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        0
    );
    let (header, rows) = parse_csv(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(
        header,
        ["t", "branch_id", "w_i", "m_i", "error_i", "D_achieved"]
    );
    assert_eq!(rows.len(), 4 * 9);
    // No temporary files are left behind.
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
}

#[test]
fn malformed_json_reports_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, r#"{"track": "genus2-track-A", "L": "genus2-track-A/L", "M": "genus2-track-A/M", "delta": 0.01, "t_grid": [100, "x"]}"#).unwrap();
    let out = graftlab(&["qc-experiment", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("`t_grid[1]`") && err.contains("line 1"),
        "{err}"
    );

    std::fs::write(&cfg, "{\"deltas\": [0.1,").unwrap();
    assert_eq!(
        graftlab(&["xi-bench", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn out_of_range_values_are_validation_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"deltas": [0.7]}"#).unwrap();
    let out = graftlab(&["xi-bench", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("deltas[0]"));
    std::fs::write(&cfg, "{}").unwrap();
    assert_eq!(
        graftlab(&[
            "xi-bench",
            "--config",
            cfg.to_str().unwrap(),
            "--samples",
            "100"
        ])
        .status
        .code(),
        Some(1)
    );
}

#[test]
fn unknown_subcommand_and_missing_config() {
    assert_eq!(run(["graftlab", "frobnicate"]), 1);
    assert_eq!(run(["graftlab", "approx"]), 1);
    assert_eq!(run(["graftlab", "--help"]), 0);
}

#[test]
fn bad_thread_count_is_rejected() {
    let out = Command::new(env!("CARGO_BIN_EXE_graftlab"))
        .args(["validate", "presets"])
        .env("GRAFTLAB_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn short_leaves_flush_partial_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("qc.json");
    let csv = dir.path().join("qc.csv");
    std::fs::write(
        &cfg,
        r#"{"track": "genus2-track-A", "L": "genus2-track-A/L", "M": "genus2-track-A/M", "delta": 0.01, "t_grid": [100, 2], "samples": 256}"#,
    )
    .unwrap();
    let out = graftlab(&[
        "qc-experiment",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let (_, rows) = parse_csv(&std::fs::read_to_string(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][7], "ok");
    assert!(rows[1][7].starts_with("error:") && rows[1][1].is_empty());
}

#[test]
fn svg_is_written_next_to_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("xi.csv");
    let cfg = configs().join("xi-bench.json");
    let code = run([
        "graftlab",
        "xi-bench",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        "--samples",
        "512",
    ]);
    assert_eq!(code, 0);
    let svg = std::fs::read_to_string(csv.with_extension("svg")).unwrap();
    assert!(
        svg.starts_with("<svg") && svg.contains(">delta</text>") && svg.contains(">A_est</text>")
    );
}

#[test]
fn graft_summary_area() {
    let cfg = configs().join("graft.json");
    let out = graftlab(&["graft", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (_, rows) = parse_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    let total: f64 = rows.last().unwrap()[4].parse().unwrap();
    assert!((total - (4.0 * std::f64::consts::PI + 6.0)).abs() < 1e-12);
}

#[test]
fn empty_and_small_reports() {
    let mut t = Table::new(&["t", "x"]);
    assert_eq!(emit_csv(&t).unwrap(), "t,x\n");
    for k in 0..3 {
        t.push(vec![Cell::Float(k as f64), Cell::Int(k)]);
    }
    assert_eq!(emit_csv(&t).unwrap().lines().count(), 4);
}

proptest! {
    #[test]
    fn csv_round_trips_exactly(xs in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 0..20)) {
        let mut t = Table::new(&["x"]);
        for &x in &xs {
            t.push(vec![Cell::Float(x)]);
        }
        let (_, rows) = parse_csv(&emit_csv(&t).unwrap()).unwrap();
        let back: Vec<f64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), xs.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }
}
