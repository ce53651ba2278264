//! Wiring tests: the binary must behave like a thin adapter over the
//! library, with the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_optolayer"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn optolayer")
}

fn write_structure(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("s.json");
    std::fs::write(
        &path,
        r#"{"layers":[{"material":"toy_n2.0","thickness_nm":87.5},{"material":"toy_n1.5","thickness_nm":120.0}]}"#,
    )
    .unwrap();
    path
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn missing_file_is_runtime_error() {
    let out = run(&[
        "simulate",
        "--structure",
        "/nonexistent/s.json",
        "--toy-materials",
        "--out",
        "/nonexistent/out.csv",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn simulate_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let structure = write_structure(dir.path());
    let out_csv = dir.path().join("spec.csv");
    let out = run(&[
        "simulate",
        "--structure",
        structure.to_str().unwrap(),
        "--toy-materials",
        "--out",
        out_csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{:?}", out);

    let db = optolayer::MaterialDb::toy();
    let s = optolayer::Structure::from_pairs(&[(2, 87.5), (1, 120.0)]);
    let grid = optolayer::WavelengthGrid::default();
    let expect = optolayer::simulate(&db, &s, &grid, &optolayer::AmbientConfig::default()).unwrap();

    let text = std::fs::read_to_string(&out_csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("wavelength_nm,R,T"));
    let mut rows = 0;
    for (j, line) in lines.enumerate() {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(f[0], grid.values()[j]);
        assert_eq!(f[1].to_bits(), expect.r[j].to_bits());
        assert_eq!(f[2].to_bits(), expect.t[j].to_bits());
        rows += 1;
    }
    assert_eq!(rows, 71);
}

#[test]
fn gen_data_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        vec![
            "gen-data".to_string(),
            "--toy-materials".into(),
            "--count".into(),
            "100".into(),
            "--seed".into(),
            "7".into(),
            "--max-layers".into(),
            "4".into(),
            "--bins".into(),
            "10:100:10".into(),
            "--out".into(),
            out.to_str().unwrap().into(),
        ]
    };
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    assert_eq!(bin().args(args(&a)).status().unwrap().code(), Some(0));
    assert_eq!(bin().args(args(&b)).status().unwrap().code(), Some(0));
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ma: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a.manifest.json")).unwrap())
            .unwrap();
    let mb: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("b.manifest.json")).unwrap())
            .unwrap();
    assert_eq!(ma["data_sha256"], mb["data_sha256"]);
}

#[test]
fn validate_data_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    assert_eq!(
        run(&[
            "gen-data",
            "--toy-materials",
            "--count",
            "50",
            "--seed",
            "3",
            "--max-layers",
            "4",
            "--bins",
            "10:100:10",
            "--out",
            data.to_str().unwrap(),
        ])
        .status
        .code(),
        Some(0)
    );
    let ok = run(&[
        "validate-data",
        "--data",
        data.to_str().unwrap(),
        "--toy-materials",
        "--fraction",
        "1.0",
    ]);
    assert_eq!(ok.status.code(), Some(0), "{:?}", ok);

    let mut bytes = std::fs::read(&data).unwrap();
    let pos = bytes.iter().position(|&b| b == b'7').unwrap_or(20);
    bytes[pos] = b'8';
    std::fs::write(&data, &bytes).unwrap();
    let bad = run(&[
        "validate-data",
        "--data",
        data.to_str().unwrap(),
        "--toy-materials",
    ]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("checksum"));
}

#[test]
fn threads_env_is_respected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.jsonl");
    let out = bin()
        .env("OL_THREADS", "1")
        .args([
            "gen-data",
            "--toy-materials",
            "--count",
            "20",
            "--seed",
            "3",
            "--max-layers",
            "4",
            "--bins",
            "10:100:10",
            "--out",
            data.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
}
