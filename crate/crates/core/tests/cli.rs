use std::path::Path;
use std::process::{Command, Output};

use fan_core::providers::scenarios;
use serde_json::Value;

fn fan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fan"))
        .args(args)
        .env("FAN_LOG_LEVEL", "error")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_queries(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("queries.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn quiet_scene(dir: &Path) -> std::path::PathBuf {
    let p = dir.join("still.json");
    std::fs::write(&p, scenarios::stationary(3, 0.0).to_json()).unwrap();
    p
}

#[test]
fn exit_codes() {
    assert_eq!(code(&fan(&["--help"])), 0);
    assert_eq!(code(&fan(&["--version"])), 0);
    assert_eq!(code(&fan(&[])), 1);
    assert_eq!(code(&fan(&["detect", "--scene", "tunnel"])), 1);
    assert_eq!(code(&fan(&["bench", "--sizes", "big"])), 1);
    let missing = fan(&["eval", "--log", "/definitely/not/here.json"]);
    assert_eq!(code(&missing), 2);
    assert!(!missing.stderr.is_empty());
}

#[test]
fn detect_finds_target_on_noiseless_scene() {
    let dir = tempfile::tempdir().unwrap();
    let scene = quiet_scene(dir.path());
    let q = write_queries(dir.path(), r#"[{"label":"robot","class":1},{"label":"ground","class":0}]"#);
    let out = dir.path().join("out");
    for mode in ["coarse", "mask"] {
        let o = fan(&["detect", "--scene", s(&scene), "--queries", s(&q), "--mode", mode, "--out", s(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let ann: Value = serde_json::from_str(&std::fs::read_to_string(out.join("annotations.json")).unwrap()).unwrap();
        let robots: Vec<&Value> = ann["regions"].as_array().unwrap().iter().filter(|a| a["label"] == "robot").collect();
        assert_eq!(robots.len(), 1, "{mode}: {ann}");
        let b = &robots[0]["bbox"];
        let (x, y, w, h) = (b[0].as_u64().unwrap(), b[1].as_u64().unwrap(), b[2].as_u64().unwrap(), b[3].as_u64().unwrap());
        assert!(x <= 80 && 80 < x + w && y <= 60 && 60 < y + h, "{mode}: {b}");
        assert_eq!(ann["mode"], mode);
        assert!(out.join("overlay.png").exists());
        assert!(out.join("regions.fanm").exists());
    }
}

#[test]
fn follow_then_eval_perfect_log() {
    let dir = tempfile::tempdir().unwrap();
    let scene = quiet_scene(dir.path());
    let out = dir.path().join("run");
    let o = fan(&["follow", "--scene", s(&scene), "--duration", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trajectory.csv", "trajectory.json", "events.json", "report.json", "report.csv", "fps.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let header = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap().split(',').count(), 18);

    let scored = dir.path().join("scored");
    let o = fan(&["eval", "--log", s(&out.join("trajectory.json")), "--out", s(&scored)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(scored.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["tp_rate"], 1.0);
    assert_eq!(report["fp_count"], 0);
    assert!(report["miou"].as_f64().unwrap() > 0.9);
}

#[test]
fn follow_compare_writes_each_combination() {
    let dir = tempfile::tempdir().unwrap();
    let scene = quiet_scene(dir.path());
    let out = dir.path().join("cmp");
    let o = fan(&["follow", "--scene", s(&scene), "--duration", "1", "--compare", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for sub in ["p_mask", "pid_mask", "p_coarse", "pid_coarse"] {
        assert!(out.join(sub).join("trajectory.csv").exists(), "{sub}");
    }
    let table = std::fs::read_to_string(out.join("comparison.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
}

#[test]
fn bench_prints_one_row_per_stage_and_size() {
    let dir = tempfile::tempdir().unwrap();
    let o = fan(&["bench", "--sizes", "32x24,48x36", "--frames", "2", "--dim", "8", "--out", s(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(dir.path().join("fps.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 2 * 5);
    assert_eq!(String::from_utf8(o.stdout).unwrap(), table);
}
