use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fate_core::data::load_dataset;
use fate_core::model::load_checkpoint;
use fate_core::train::evaluate;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn fate(args: &[&str], out: &Path) -> Output {
    let config = fixtures().join("config.toml");
    Command::new(env!("CARGO_BIN_EXE_fate"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Rows of a CSV after the provenance line and header.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# config_hash="));
    lines.skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn ingest_counts_samples_and_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&fate(&["ingest"], a.path()));
    ok(&fate(&["ingest"], b.path()));
    let report = json(&a.path().join("ingest_report.json"));
    assert_eq!(report["report"]["samples"], 94);
    assert_eq!(report["report"]["imputed_total"], 1);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(
        std::fs::read(a.path().join("dataset.fdat")).unwrap(),
        std::fs::read(b.path().join("dataset.fdat")).unwrap()
    );
    assert_eq!(&std::fs::read(a.path().join("dataset.fdat")).unwrap()[..5], b"FDAT1");
}

#[test]
fn missing_coordinates_exit_2() {
    let out = tempfile::tempdir().unwrap();
    let coords = fixtures().join("coords_missing.json");
    let o = fate(&["ingest", "--set", &format!("data.coords={:?}", coords.display().to_string())], out.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("E_COORDS:"), "{err}");
    assert!(err.contains("Seattle"));
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn bad_config_is_rejected_before_work() {
    let out = tempfile::tempdir().unwrap();
    let o = fate(&["ingest", "--set", "model.heads=3"], out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_CONFIG:"));
    assert!(!out.path().join("dataset.fdat").exists());
    let o = fate(&["train"], out.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_CONTRACT:"));
}

#[test]
fn bad_row_is_reported_with_line() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["humidity.csv", "pressure.csv", "coords.json"] {
        std::fs::copy(fixtures().join(f), dir.path().join(f)).unwrap();
    }
    let text = std::fs::read_to_string(fixtures().join("temperature.csv")).unwrap();
    let broken = text.replacen("2012-10-01 20:00:00", "2012-13-01 20:00:00", 1);
    std::fs::write(dir.path().join("temperature.csv"), broken).unwrap();
    let cfg = std::fs::read_to_string(fixtures().join("config.toml")).unwrap();
    std::fs::write(dir.path().join("config.toml"), cfg).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fate"))
        .args(["ingest", "--config"])
        .arg(dir.path().join("config.toml"))
        .output()
        .unwrap();
    ok(&o);
    let report = json(&dir.path().join("out/ingest_report.json"));
    let rejected = report["report"]["rejected_rows"].as_array().unwrap();
    assert_eq!(rejected.len(), 1);
    // header is line 1 and 12:00 is line 2
    assert_eq!(rejected[0]["line"], 10);
    assert_eq!(report["report"]["samples"], 94);
}

#[test]
fn train_twice_gives_identical_history() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        ok(&fate(&["ingest"], d.path()));
        ok(&fate(&["train"], d.path()));
    }
    for f in ["history.csv", "train_summary.json", "model.fate"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f} differs"
        );
    }
    let rows = csv_rows(&a.path().join("history.csv"));
    let summary = json(&a.path().join("train_summary.json"));
    assert_eq!(rows.len() as u64, summary["stopped_epoch"].as_u64().unwrap());
    assert_eq!(&std::fs::read(a.path().join("model.fate")).unwrap()[..5], b"FATE1");
}

#[test]
fn patience_stops_early() {
    let out = tempfile::tempdir().unwrap();
    ok(&fate(&["ingest"], out.path()));
    ok(&fate(
        &[
            "train",
            "--set",
            "train.lr_mode={fixed=0.0}",
            "--set",
            "train.patience=2",
            "--set",
            "train.max_epochs=50",
        ],
        out.path(),
    ));
    let s = json(&out.path().join("train_summary.json"));
    assert_eq!(s["stop_reason"], "patience");
    assert_eq!(s["best_epoch"], 1);
    assert_eq!(s["stopped_epoch"], 3);
}

#[test]
fn evaluate_matches_in_process_metrics() {
    let out = tempfile::tempdir().unwrap();
    let h = ["--set", "target.horizons=[1,3]"];
    ok(&fate(&["ingest", h[0], h[1]], out.path()));
    ok(&fate(&["train", h[0], h[1]], out.path()));
    ok(&fate(&["evaluate", h[0], h[1]], out.path()));
    let rows = csv_rows(&out.path().join("evaluation.csv"));
    assert_eq!(rows.len(), 2 * 2);

    let (data, _) = load_dataset(&out.path().join("dataset.fdat")).unwrap();
    let ckpt = load_checkpoint(&out.path().join("model.fate")).unwrap();
    let (_, _, test) = data.splits().unwrap();
    let ev = evaluate(&ckpt.weights, &ckpt.config, &test).unwrap();
    for (row, t) in rows.iter().zip(&ev.per_target) {
        assert_eq!((row[0].as_str(), row[2].parse::<usize>().unwrap()), (t.station.as_str(), t.horizon));
        assert!((row[3].parse::<f64>().unwrap() - t.mae).abs() <= 1e-12 * t.mae.max(1.0));
        assert!((row[4].parse::<f64>().unwrap() - t.mse).abs() <= 1e-12 * t.mse.max(1.0));
    }
}

#[test]
fn evaluate_rejects_mismatched_checkpoint() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&fate(&["ingest"], a.path()));
    ok(&fate(&["train", "--set", "train.max_epochs=1"], a.path()));
    ok(&fate(&["ingest", "--set", "data.lag=6"], b.path()));
    let ckpt = a.path().join("model.fate");
    let o = fate(
        &["evaluate", "--set", "data.lag=6", "--checkpoint", ckpt.to_str().unwrap()],
        b.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_SHAPE:"));
}

#[test]
fn analyze_emits_reports() {
    let out = tempfile::tempdir().unwrap();
    ok(&fate(&["ingest"], out.path()));
    ok(&fate(&["train", "--set", "train.max_epochs=2"], out.path()));
    ok(&fate(&["analyze"], out.path()));

    let rows = csv_rows(&out.path().join("correlation.csv"));
    assert_eq!(rows.len(), 7);
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.len(), 8);
        assert_eq!(r[i + 1], "1");
        for (j, v) in r[1..].iter().enumerate() {
            assert_eq!(v, &rows[j][i + 1]);
        }
    }

    let km = json(&out.path().join("kmeans.json"));
    let mut c: Vec<f64> = km["result"]["centroids"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c[0].as_f64().unwrap())
        .collect();
    c.sort_by(f64::total_cmp);
    assert_eq!(c, vec![0.5, 10.5]);

    let rows = csv_rows(&out.path().join("modulation.csv"));
    assert_eq!(rows.len(), 2 * 3);
    let m = json(&out.path().join("modulation.json"));
    assert!(m["report"]["definition"].as_str().unwrap().starts_with("surrogate"));
    assert_eq!(m["report"]["parameter_effects"].as_array().unwrap().len(), 3 + 3 + 2);
}

#[test]
fn analyze_without_inputs_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bare.toml");
    std::fs::write(&cfg, "seed = 3\n").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_fate"))
        .args(["analyze", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("E_CONFIG:"));
}

#[test]
fn gradcheck_passes_and_negative_control_fails() {
    let out = tempfile::tempdir().unwrap();
    let stdout = ok(&fate(&["gradcheck"], out.path()));
    assert!(stdout.contains("layer0.head1.wq"));
    assert!(stdout.trim_end().ends_with("PASS"));

    let o = fate(&["gradcheck", "--inject-fault", "softmax"], out.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.starts_with("E_GRADCHECK:"), "{err}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}
