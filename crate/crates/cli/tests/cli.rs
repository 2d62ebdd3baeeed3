use std::path::Path;
use std::process::{Command, Output};

fn meshsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meshsim")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Vec<u8> {
    let o = meshsim(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o.stdout
}

#[test]
fn identical_flags_give_identical_bytes() {
    for args in [
        &["bench", "latency"][..],
        &["bench", "stencil", "--cores", "2x2", "--rows", "40", "--cols", "30", "--iters", "5", "--format", "json"],
        &["bench", "matmul", "--size", "64", "--cores", "4x4", "--format", "json"],
        &["bench", "elink", "--writers", "4"],
    ] {
        assert_eq!(ok(args), ok(args), "{args:?}");
    }
}

#[test]
fn invalid_spec_is_a_usage_error() {
    for args in [
        &["bench", "stencil", "--cores", "9x9"][..],
        &["bench", "stencil", "--rows", "7", "--cols", "8", "--cores", "2x2"],
        &["bench", "matmul", "--cores", "2x4"],
        &["bench", "elink", "--writers", "0"],
        &["bench", "stencil", "--cores", "8by8"],
        &["bench", "nonsense"],
    ] {
        let o = meshsim(args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn csv_has_unit_bearing_header() {
    let out = String::from_utf8(ok(&["bench", "bandwidth"])).unwrap();
    let mut lines = out.lines();
    assert_eq!(lines.next().unwrap(), "label,bytes,direct_write_ns,dma_ns,direct_write_gbps,dma_gbps");
    assert_eq!(lines.count(), 15);
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> String {
    let p = dir.join(name);
    std::fs::write(&p, bytes).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn report_exit_status_follows_mandatory_checks() {
    let dir = tempfile::tempdir().unwrap();
    let good = write(dir.path(), "latency.json", &ok(&["bench", "latency", "--format", "json"]));
    let o = meshsim(&["report", "--in", &good]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("overall PASS"));

    // Slow every link down tenfold: the latency checks must fail.
    let mut cfg: serde_json::Value =
        serde_json::from_str(include_str!("../../core/config/default.json")).unwrap();
    let hop = cfg["timing"]["hop_latency_cycles"].as_f64().unwrap();
    cfg["timing"]["hop_latency_cycles"] = serde_json::json!(hop * 10.0);
    let cfg_path = write(dir.path(), "slow.json", cfg.to_string().as_bytes());
    let bad = write(
        dir.path(),
        "slow-latency.json",
        &ok(&["bench", "latency", "--format", "json", "--config", &cfg_path]),
    );
    let table = dir.path().join("table.csv");
    let o = meshsim(&["report", "--in", &good, &bad, "--csv", table.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let csv = std::fs::read_to_string(table).unwrap();
    assert!(csv.starts_with("id,source,description,unit,measured,reference,tolerance,mandatory,verdict"));
    assert!(csv.contains("FAIL"));
}

#[test]
fn svg_written_for_curves() {
    let dir = tempfile::tempdir().unwrap();
    let svg = dir.path().join("lat.svg");
    ok(&["bench", "latency", "--svg", svg.to_str().unwrap()]);
    let text = std::fs::read_to_string(svg).unwrap();
    assert!(text.starts_with("<svg") && text.contains("<polyline"));
}

#[test]
fn calibrate_reproduces_the_shipped_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.json");
    ok(&["calibrate", "--out", out.to_str().unwrap()]);
    let a: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    let b: serde_json::Value = serde_json::from_str(include_str!("../../core/config/default.json")).unwrap();
    assert_eq!(a, b);
}
