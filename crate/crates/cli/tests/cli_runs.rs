use std::fs;
use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn run(args: &[&str], config: Option<&str>, out: &Path) -> i32 {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_shuttle-sync"));
    cmd.args(args).arg("--out").arg(out).arg("--threads").arg("1");
    if let Some(text) = config {
        let path = out.with_extension("toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap().status.code().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn bad_chain_length_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    assert_eq!(run(&["simulate"], Some("[chain]\nn = 25\n"), &out), 2);
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "config_error");
    assert_eq!(m["exit_code"], 2);
    assert!(m["error"].as_str().unwrap().contains("N mod 3"));
}

#[test]
fn mismatched_experiment_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["chern"], Some("experiment = \"simulate\"\n"), &dir.path().join("x")), 2);
}

#[test]
fn chern_reports_reference_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("chern");
    assert_eq!(run(&["chern"], None, &out), 0);
    let c = json(&out.join("chern.json"));
    assert_eq!(c["chern"], serde_json::json!([1, -2, 1]));
    assert!(out.join("curvature.csv").exists());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["status"], "success");
    assert_eq!(m["experiment"], "chern");
}

#[test]
fn simulate_quarter_turn_is_right_edge_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    assert_eq!(run(&["simulate"], Some("[chain]\nphi_over_pi = 0.5\n"), &out), 0);
    let r = json(&out.join("sync_report.json"));
    assert_eq!(r["report"]["class"], "right_edge_only");
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    let cfg = shuttle_cli::config::parse_config_str(&resolved).unwrap();
    assert!(cfg.simulate.dt_out > 0.0);
}

fn data_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_name() != "manifest.json")
        .map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn artifacts_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &str); 3] = [
        ("simulate", "seed = 5\n[chain]\nn = 12\nphi_over_pi = 0.7\n[simulate]\nt_end = 1000.0\n"),
        ("disorder", "[chain]\nn = 12\n[disorder]\nr_values = [0.1, 0.3]\nrealizations = 3\n"),
        ("chern", "[chern]\nn_k = 16\nn_phi = 16\n"),
    ];
    for (exp, cfg) in cases {
        let a = dir.path().join(format!("{exp}_a"));
        let b = dir.path().join(format!("{exp}_b"));
        assert_eq!(run(&[exp], Some(cfg), &a), 0);
        assert_eq!(run(&[exp], Some(cfg), &b), 0);
        let (fa, fb) = (data_files(&a), data_files(&b));
        assert!(!fa.is_empty());
        assert_eq!(fa.len(), fb.len());
        for ((na, ba), (nb, bb)) in fa.iter().zip(&fb) {
            assert_eq!(na, nb);
            assert!(ba == bb, "{exp}: {na} differs between runs");
        }
        assert_eq!(json(&a.join("manifest.json"))["files"], json(&b.join("manifest.json"))["files"]);
    }
}
