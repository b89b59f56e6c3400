use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use envauth::io::write_signal_csv;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_envauth"));
    c.env("SOURCE_DATE_EPOCH", "1700000000");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn signal(dir: &Path, name: &str, k: usize) -> PathBuf {
    let path = dir.join(name);
    let samples: Vec<f64> = (0..64).map(|i| ((i * (k + 3)) as f64 * 0.37).sin() + 0.01 * k as f64).collect();
    write_signal_csv(&path, &samples).unwrap();
    path
}

#[test]
fn extract_single_and_batch() {
    let dir = tempfile::tempdir().unwrap();
    let template = signal(dir.path(), "template.csv", 0);
    let one = signal(dir.path(), "one.csv", 1);
    let out = dir.path().join("single");
    let o = run(&["--out", s(&out), "extract", "--template", s(&template), s(&one)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("fingerprints.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 3 + 7);
    assert!(out.join("manifest.json").exists());

    let files: Vec<PathBuf> = (0..25).map(|k| signal(dir.path(), &format!("s{k:02}.csv"), k)).collect();
    let batch = dir.path().join("batch");
    let mut args = vec!["--out", s(&batch), "extract", "--object-id", "tag7", "--template", s(&template)];
    args.extend(files.iter().map(|p| s(p)));
    assert!(run(&args).status.success());
    let text = fs::read_to_string(batch.join("fingerprints.csv")).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 25);
    for (k, r) in rows.iter().enumerate() {
        assert_eq!(r[0], "tag7");
        assert_eq!(r[2], k.to_string());
        // the mean column tracks the per-file offset, so order is input order
        let expected = envauth::features::extract_features(
            &envauth::io::read_signal(&files[k]).unwrap(),
            &envauth::io::read_signal(&template).unwrap(),
        )
        .unwrap();
        assert_eq!(r[3].parse::<f64>().unwrap(), expected.values()[0]);
    }
}

#[test]
fn extract_empty_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let template = signal(dir.path(), "template.csv", 0);
    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = run(&["--out", s(dir.path()), "extract", "--template", s(&template), s(&empty)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("empty signal"));
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"schema_version": 1, "num_objects": 20, "attacker_kind": "cyber_physical", "attacker_count": 1, "seed": 4}"#,
    )
    .unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&["--config", s(&cfg), "--out", s(out), "simulate"]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["report.json", "distances.csv", "sweep.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(a.join("report.json")).unwrap()).unwrap();
    for p in ["baseline", "environment"] {
        assert!(report[p]["detection_rate"].is_number());
        assert!(report[p]["false_positive_rate"].is_number());
    }
    let header = fs::read_to_string(a.join("distances.csv")).unwrap();
    assert!(header.starts_with("object_id,window,delta,delta_hat,verdict_base,verdict_env\n"));
    assert!(fs::read_to_string(a.join("sweep.csv")).unwrap().starts_with("tau,accuracy_base,accuracy_env\n"));
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["seed"], 4);
    assert_eq!(manifest["timestamp"], "2023-11-14T22:13:20Z");
}

#[test]
fn schema_violations_exit_2_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"num_objects": 5, "attacker_count": 5, "attacker_kind": "cyber_physical"}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(dir.path()), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("attacker_count"));

    fs::write(&cfg, r#"{"noise": {"sigma": -1}}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(dir.path()), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("noise.sigma"));

    fs::write(&cfg, r#"{"unknown_field": true}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(dir.path()), "simulate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_with_explicit_taus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"num_objects": 5, "num_windows": 6}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(dir.path()), "--seed", "2", "sweep", "--taus", "0,1e9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["tau,accuracy_base,accuracy_env", "0,0,0", "1000000000,1,1"]);
}

#[test]
fn transfer_eval_alpha_zero_column_matches_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"num_seeds": 2, "num_sources": 4, "num_windows": 6}"#).unwrap();
    let o = run(&["--config", s(&cfg), "--out", s(dir.path()), "transfer-eval"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("transfer.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("class,source_noise_sigma,no_transfer,alpha_0,alpha_0.25,alpha_0.5"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 5);
    for r in rows {
        assert_eq!(r[2], r[3]);
    }
}

fn write_training_csv(path: &Path, attacker_window: Option<u32>) {
    use envauth::simulate::*;
    let cfg = ScenarioConfig { num_objects: 5, num_windows: 6, window_length: 12, seed: 21, ..Default::default() };
    let env = generate_environment(&cfg);
    let mut text = String::from("object_id,window_index,row_index,label,f0,f1,f2\n");
    for i in 0..cfg.num_objects {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(100 + i as u64);
        let base = generate_base(12, 3, 0.5, 1.0, &mut rng);
        let id = object_id(i);
        let data = generate_object_data(&env, &base, 1.0, 0.05, &id, &mut rng).unwrap();
        for (w, m) in data.iter().enumerate() {
            let label = if i == 0 && attacker_window == Some(w as u32) { "attacker" } else { "legitimate" };
            for j in 0..m.nrows() {
                let r = m.row(j);
                text.push_str(&format!("{id},{w},{j},{label},{},{},{}\n", r[0], r[1], r[2]));
            }
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn train_then_auth() {
    let dir = tempfile::tempdir().unwrap();
    let train_csv = dir.path().join("train.csv");
    write_training_csv(&train_csv, None);
    let state = dir.path().join("state");
    let o = run(&["--out", s(&state), "train", s(&train_csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["references.csv", "graph.csv", "metadata.json", "manifest.json"] {
        assert!(state.join(f).exists(), "{f}");
    }
    let meta: serde_json::Value = serde_json::from_slice(&fs::read(state.join("metadata.json")).unwrap()).unwrap();
    assert!(meta["tau"].as_f64().unwrap() > 0.0);
    assert_eq!(meta["feature_names"], serde_json::json!(["f0", "f1", "f2"]));

    let scored = dir.path().join("scored");
    let o = run(&["--out", s(&scored), "auth", "--state", s(&state), s(&train_csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(scored.join("decisions.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 5 * 6);
    assert!(!text.contains(",attacker"), "training windows are accepted at the calibrated thresholds");

    let o = run(&["--out", s(&scored), "auth", "--state", s(&dir.path().join("missing")), s(&train_csv)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_uses_attacker_labels() {
    let dir = tempfile::tempdir().unwrap();
    let train_csv = dir.path().join("train.csv");
    write_training_csv(&train_csv, Some(3));
    let o = run(&["--out", s(dir.path()), "train", s(&train_csv)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}
