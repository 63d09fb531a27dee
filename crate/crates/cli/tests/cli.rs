use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qosmc_core::sim::ScenarioConfig;

fn qosmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qosmc")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn short_config(dir: &Path) -> PathBuf {
    let cfg = ScenarioConfig { duration_s: 1.0, ..ScenarioConfig::default() };
    let path = dir.join("short.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

fn train_small(dir: &Path, out: &str) -> Output {
    let out = dir.join(out);
    qosmc(&["train", "--out", s(&out), "--seed", "3", "--positions-per-set", "3", "--slots-per-row", "200"])
}

#[test]
fn train_run_report_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let t = train_small(dir, "art");
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let stdout = String::from_utf8_lossy(&t.stdout);
    for k in [20, 30, 40, 50] {
        assert!(stdout.contains(&format!("{k:>3} clusters: classifier accuracy")), "{stdout}");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("art/train_report.json")).unwrap()).unwrap();
    assert_eq!(report["classifiers"].as_array().unwrap().len(), 4);
    assert_eq!(report["classifiers"][2]["confusion"].as_array().unwrap().len(), 40);

    let cfg = short_config(dir);
    let csv = dir.join("m.csv");
    let run = |out: &Path| qosmc(&["run", "--config", s(&cfg), "--models", s(&dir.join("art")), "--seeds", "1,2", "--out", s(out)]);
    let r = run(&csv);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "policy,seed,avg_rate_bps,avg_latency_s,reliability,resource_hz,se_bps_per_hz,qos_rate_score,qos_lat_score,qos_rel_score");
    assert_eq!(lines.len(), 1 + 3 * 2);
    assert!(lines[1].starts_with("proposed,1,") && lines[6].starts_with("lbmc,2,"));

    let again = dir.join("m2.csv");
    assert!(run(&again).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), std::fs::read(&again).unwrap());

    let json = dir.join("summary.json");
    let rep = qosmc(&["report", s(&csv), "--json", s(&json)]);
    assert!(rep.status.success());
    let out = String::from_utf8_lossy(&rep.stdout);
    assert!(out.contains("proposed (2 runs)") && out.contains("proposed avg_rate >= snr avg_rate"), "{out}");
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["policies"].as_array().unwrap().len(), 3);
}

#[test]
fn same_seed_same_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(train_small(tmp.path(), "a").status.success());
    assert!(train_small(tmp.path(), "b").status.success());
    for f in ["cluster_model.json", "regressor.json", "dataset.csv", "train_report.json"] {
        assert_eq!(std::fs::read(tmp.path().join("a").join(f)).unwrap(), std::fs::read(tmp.path().join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn manifest_run_with_oracle_estimator() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = short_config(dir);
    let manifest = dir.join("manifest.json");
    let body = serde_json::json!({
        "config": cfg,
        "policies": ["snr", "proposed"],
        "seeds": [5],
        "output_dir": dir.join("out"),
        "estimator": "cqi-oracle",
    });
    std::fs::write(&manifest, body.to_string()).unwrap();
    let r = qosmc(&["run", "--manifest", s(&manifest)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(dir.join("out/metrics.csv")).unwrap();
    let policies: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(policies, vec!["snr", "proposed"]);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let code = |o: Output| o.status.code().unwrap();

    assert_eq!(code(qosmc(&["run", "--policy", "drl"])), 2);
    assert_eq!(code(qosmc(&["frobnicate"])), 2);

    let tiny = qosmc(&["train", "--out", s(&dir.join("tiny")), "--positions-per-set", "1"]);
    assert_eq!(tiny.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&tiny.stderr).contains("at least 500 required"));

    let empty = dir.join("empty.csv");
    std::fs::write(&empty, "policy,seed,avg_rate_bps,avg_latency_s,reliability,resource_hz,se_bps_per_hz,qos_rate_score,qos_lat_score,qos_rel_score\n").unwrap();
    let e = qosmc(&["report", s(&empty)]);
    assert_eq!(e.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&e.stderr).contains("no rows"));

    let cfg = short_config(dir);
    assert_eq!(code(qosmc(&["run", "--config", s(&cfg), "--models", s(&dir.join("nothing")), "--seeds", "1"])), 4);
    assert_eq!(code(qosmc(&["report", s(&dir.join("absent.csv"))])), 4);

    let bad_manifest = dir.join("bad.json");
    std::fs::write(&bad_manifest, r#"{"policies": ["proposed"], "seeds": [], "output_dir": "x"}"#).unwrap();
    assert_eq!(code(qosmc(&["run", "--manifest", s(&bad_manifest)])), 2);

    let bad_cfg = dir.join("bad_cfg.json");
    std::fs::write(&bad_cfg, r#"{"duration_s": -1}"#).unwrap();
    assert_eq!(code(qosmc(&["run", "--config", s(&bad_cfg), "--estimator", "genie", "--seeds", "1"])), 3);
}

#[test]
fn scenario_prints_loadable_default() {
    let o = qosmc(&["scenario", "--fast"]);
    assert!(o.status.success());
    let cfg = ScenarioConfig::from_json(&String::from_utf8_lossy(&o.stdout)).unwrap();
    assert_eq!(cfg.duration_s, 10.0);
    assert_eq!(cfg.gnbs.len(), 9);
    let shipped = ScenarioConfig::from_json(&std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/default.json")).unwrap()).unwrap();
    assert_eq!(shipped, ScenarioConfig::default());
}
