use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn ccam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccam"))
        .args(args)
        .env_remove("CCAM_SEED")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn golden_overlay() -> String {
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(fixtures().join("golden/golden.json")).unwrap()).unwrap();
    doc["overlay_rgb_sha256"]["record_comprehensive"].as_str().unwrap().to_string()
}

fn explain(record: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["explain", "--record", path_str(record), "--out", path_str(out)];
    args.extend_from_slice(extra);
    ccam(&args)
}

#[test]
fn explain_golden_record_matches_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let prefix = tmp.path().join("run/fixture");
    let out = explain(
        &fixtures().join("record"),
        &prefix,
        &["--mode", "comprehensive", "--weights", "score", "--alpha", "1.0"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let saliency = fs::read(tmp.path().join("run/fixture.saliency.cct")).unwrap();
    let golden = fs::read(fixtures().join("golden/record_comprehensive.cct")).unwrap();
    assert_eq!(saliency, golden);

    let sidecar: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/fixture.json")).unwrap()).unwrap();
    assert_eq!(sidecar["overlay_rgb_sha256"].as_str().unwrap(), golden_overlay());
    for key in ["weights", "evidence", "conceptor", "complementary_conceptor", "fused_conceptor", "saliency"] {
        assert_eq!(sidecar["checksums"][key].as_str().unwrap().len(), 64, "{key}");
    }
    assert_eq!(sidecar["tanh_enabled"], false);

    let png = image::open(tmp.path().join("run/fixture.overlay.png")).unwrap().to_rgb8();
    use sha2::Digest;
    assert_eq!(hex::encode(sha2::Sha256::digest(png.as_raw())), golden_overlay());
}

#[test]
fn explain_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let record = fixtures().join("record");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for prefix in [&a, &b] {
        assert!(explain(&record, prefix, &["--mode", "positive", "--alpha", "0.5"]).status.success());
    }
    for suffix in [".saliency.cct", ".overlay.png"] {
        let read = |p: &Path| fs::read(format!("{}{suffix}", p.display())).unwrap();
        assert_eq!(read(&a), read(&b), "{suffix}");
    }
    let sidecar = |p: &Path| {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(format!("{}.json", p.display())).unwrap()).unwrap();
        v["checksums"].clone()
    };
    assert_eq!(sidecar(&a), sidecar(&b));
}

#[test]
fn explain_runs_every_mode() {
    let tmp = tempfile::tempdir().unwrap();
    for mode in ["baseline", "positive", "complementary", "comprehensive"] {
        let out = explain(&fixtures().join("record"), &tmp.path().join(mode), &["--mode", mode, "--tanh", "on"]);
        assert!(out.status.success(), "{mode}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn logit_space_uses_the_live_model() {
    let tmp = tempfile::tempdir().unwrap();
    let out = explain(&fixtures().join("record"), &tmp.path().join("logit"), &["--score-space", "logit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_gradients_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = explain(&fixtures().join("record"), &tmp.path().join("g"), &["--weights", "grad"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("gradients"));
}

#[test]
fn bogus_mode_exits_two_with_usage() {
    let out = ccam(&["explain", "--record", "r", "--mode", "bogus", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("Usage:"), "{err}");
    assert!(out.stdout.is_empty());
}

#[test]
fn alpha_outside_range_exits_two() {
    for alpha in ["-0.5", "100.5", "nan"] {
        let out = ccam(&["explain", "--record", "r", "--alpha", alpha, "--out", "o"]);
        assert_eq!(out.status.code(), Some(2), "{alpha}");
    }
}

#[test]
fn unreadable_record_exits_three() {
    let tmp = tempfile::tempdir().unwrap();
    let out = explain(&tmp.path().join("absent"), &tmp.path().join("o"), &[]);
    assert_eq!(out.status.code(), Some(3));

    let bad = tmp.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(bad.join("record.json"), "{ not json").unwrap();
    assert_eq!(explain(&bad, &tmp.path().join("o"), &[]).status.code(), Some(3));
}

#[test]
fn verify_passes() {
    let out = ccam(&["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
}

#[test]
fn verify_seed_env_overrides_flag() {
    let out = Command::new(env!("CARGO_BIN_EXE_ccam"))
        .args(["verify", "--seed", "3"])
        .env("CCAM_SEED", "41")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("seed 41\n"));

    let out = Command::new(env!("CARGO_BIN_EXE_ccam"))
        .args(["verify"])
        .env("CCAM_SEED", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn eval_writes_report_and_table() {
    let tmp = tempfile::tempdir().unwrap();
    let report = tmp.path().join("out/report.json");
    let manifest = fixtures().join("eval/manifest.json");
    let out = ccam(&["eval", "--manifest", path_str(&manifest), "--jobs", "2", "--out", path_str(&report)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(doc["n"], 2);
    assert_eq!(doc["average_increase"].as_f64(), Some(50.0));
    assert_eq!(doc["average_drop"].as_f64(), Some(6.25));
    let table = fs::read_to_string(tmp.path().join("out/report.txt")).unwrap();
    assert!(table.contains("AI = 50.00  AD = 6.25"), "{table}");
}

#[test]
fn eval_of_empty_manifest_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tmp.path().join("m.json");
    fs::write(&manifest, "[]").unwrap();
    let out = ccam(&["eval", "--manifest", path_str(&manifest), "--out", path_str(&tmp.path().join("r.json"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("empty manifest"));
}
