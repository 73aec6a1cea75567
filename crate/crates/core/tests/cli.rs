use std::path::Path;
use std::process::{Command, Output};

fn aihs(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aihs"))
        .arg("--out")
        .arg(dir)
        .args(args)
        .env("AIHS_LOG", "error")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, json: &str) -> String {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p.to_string_lossy().into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn build_then_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = aihs(dir.path(), &["build"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["certificate.json", "summary.csv", "resolvents.csv"] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let cert = dir.path().join("certificate.json");
    let v = aihs(dir.path(), &["verify", cert.to_str().unwrap()]);
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8_lossy(&v.stdout).contains("max relative difference"));
}

#[test]
fn tampered_certificate_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&aihs(dir.path(), &["build"])), 0);
    let path = dir.path().join("certificate.json");
    let mut cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cert["metrics"]["ai_residual"] = serde_json::json!("0x1p-20");
    std::fs::write(&path, serde_json::to_string(&cert).unwrap()).unwrap();
    assert_eq!(code(&aihs(dir.path(), &["verify", path.to_str().unwrap()])), 1);
}

#[test]
fn tampered_basis_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&aihs(dir.path(), &["build"])), 0);
    let path = dir.path().join("certificate.json");
    let mut cert: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    cert["basis"]["columns"][0][3][0] = serde_json::json!("0x1p-1");
    std::fs::write(&path, serde_json::to_string(&cert).unwrap()).unwrap();
    assert_eq!(code(&aihs(dir.path(), &["verify", path.to_str().unwrap()])), 1);
}

#[test]
fn missing_certificate_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = aihs(dir.path(), &["verify", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("io error"));
}

#[test]
fn divergent_norms_leave_the_hypothesis_unverified() {
    let dir = tempfile::tempdir().unwrap();
    // unit weights give r_n = 1, so sum r_n / n diverges
    let cfg = write_config(
        dir.path(),
        r#"{"operator": {"family": "forward-weighted-shift",
             "weights": {"kind": "constant", "params": {"value": 1}}, "dim": 128},
            "construction": "blaschke", "m": 2, "k_max": 2}"#,
    );
    let out = aihs(dir.path(), &["--config", &cfg, "build"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["hypothesis_verified"], false);
}

#[test]
fn config_out_directory_is_used_without_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-config");
    let cfg = write_config(
        dir.path(),
        &format!(
            r#"{{"operator": {{"family": "forward-weighted-shift",
                 "weights": {{"kind": "geometric", "params": {{"ratio": 0.5}}}}, "dim": 32}},
                "out": {}}}"#,
            serde_json::to_string(&target).unwrap()
        ),
    );
    let status = Command::new(env!("CARGO_BIN_EXE_aihs"))
        .args(["--config", &cfg, "probe-dense"])
        .env("AIHS_LOG", "error")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(target.join("probe.csv").is_file());
}

#[test]
fn seed_and_tolerance_flags_reach_the_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let out = aihs(dir.path(), &["--seed", "42", "--tol-ai", "1e-7", "build"]);
    assert_eq!(code(&out), 0);
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert_eq!(cert["config"]["seed"], 42);
    assert_eq!(cert["config"]["tolerances"]["tol_ai"], 1e-7);
}

#[test]
fn bad_config_exits_nonzero_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"operator": {"family": "forward-weighted-shift", "dim": 8}, "m": 0}"#);
    let out = aihs(dir.path(), &["--config", &cfg, "build"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    assert!(!dir.path().join("certificate.json").exists());
}

#[test]
fn blaschke_build_writes_the_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"operator": {"family": "forward-weighted-shift",
             "weights": {"kind": "geometric", "params": {"ratio": 0.5}}, "dim": 32},
            "construction": "blaschke", "m": 3, "k_max": 2}"#,
    );
    let out = aihs(dir.path(), &["--config", &cfg, "build"]);
    assert!([0, 1, 2].contains(&code(&out)), "{}", String::from_utf8_lossy(&out.stderr));
    let table = std::fs::read_to_string(dir.path().join("fm_table.csv")).unwrap();
    assert!(table.starts_with("m,n,re,im"));
    let cert: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("certificate.json")).unwrap()).unwrap();
    assert!(cert["blaschke"].is_object());
}

#[test]
fn identity_chain_reports_an_invariant_subspace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"operator": {"family": "dense-matrix", "matrix": {"kind": "identity"}, "dim": 8},
            "chain": {"depth": 4}}"#,
    );
    let out = aihs(dir.path(), &["--config", &cfg, "chain"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let chain: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("chain.json")).unwrap()).unwrap();
    assert_eq!(chain["transcript"]["reached_depth"], 1);
}

#[test]
fn shift_chain_with_codimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"operator": {"family": "forward-weighted-shift",
             "weights": {"kind": "constant", "params": {"value": 1}}, "dim": 24},
            "chain": {"depth": 6, "codim": 3}}"#,
    );
    let out = aihs(dir.path(), &["--config", &cfg, "chain"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let chain: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("chain.json")).unwrap()).unwrap();
    assert_eq!(chain["transcript"]["reached_depth"], 6);
    assert_eq!(chain["codim"]["codimension"], 3);
}

fn sweep_config(dir: &Path, dims: &str) -> String {
    write_config(
        dir,
        &format!(
            r#"{{"operator": {{"family": "forward-weighted-shift",
                 "weights": {{"kind": "geometric", "params": {{"ratio": 0.5}}}}, "dim": 16}},
                "sweep": {{"kind": "dims", "dims": {dims}}}}}"#
        ),
    )
}

#[test]
fn dimension_sweep_has_a_row_per_size() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = sweep_config(dir.path(), "[64, 128, 256]");
    let out = aihs(dir.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn sweep_records_failures_and_continues() {
    let dir = tempfile::tempdir().unwrap();
    // N = 8 has too few orbit vectors for degree 4 with k_max 3
    let cfg = sweep_config(dir.path(), "[8, 16]");
    let out = aihs(dir.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(code(&out), 1);
    let mut rows = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let records: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert!(records[0][20].starts_with("error:"));
    assert_eq!(&records[1][6], "0");
}

#[test]
fn round_trip_sweep_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"operator": {"family": "dense-matrix", "matrix": {"kind": "identity"}, "dim": 4},
            "sweep": {"kind": "round-trip", "count": 10, "max_dim": 16}}"#,
    );
    let out = aihs(dir.path(), &["--config", &cfg, "sweep"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert!(text.starts_with("seed,N,dimY,dimF,rankK,residual_fwd,residual_bwd"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn probe_writes_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = aihs(dir.path(), &["probe-dense"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert!(text.starts_with("n,err_e1,err_e2"));
    assert_eq!(text.lines().count(), 13);
}
