use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vibpapr::bundle::{load_bundle, save_bundle};
use vibpapr::papr::{ccdf_closed_form, ccdf_empirical, threshold_grid};
use vibpapr::signal::{synth_gaussian_vibration, SignalSet};

fn vibpapr(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vibpapr"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

fn gaussian_bundle(dir: &Path, name: &str, n: usize, len: usize) -> SignalSet {
    let signals = (0..n).map(|i| synth_gaussian_vibration(len, 1.0, 40 + i as u64).unwrap()).collect();
    let set = SignalSet::new(signals, name).unwrap();
    save_bundle(&set, dir.join(name)).unwrap();
    set
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vibpapr(dir.path(), &["--bogus"])), 2);
    assert_eq!(code(&vibpapr(dir.path(), &["gen"])), 2);
    assert_eq!(code(&vibpapr(dir.path(), &["ccdf", "--n", "10", "--step", "-1", "--exact"])), 2);
    assert_eq!(code(&vibpapr(dir.path(), &["--help"])), 0);
}

#[test]
fn data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&vibpapr(dir.path(), &["papr", "--input", "missing"])), 3);
    gaussian_bundle(dir.path(), "g", 4, 64);
    let bin = dir.path().join("g.bin");
    let bytes = fs::read(&bin).unwrap();
    fs::write(&bin, &bytes[..bytes.len() - 8]).unwrap();
    let out = vibpapr(dir.path(), &["papr", "--input", "g"]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn diverging_training_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_bundle(dir.path(), "g", 16, 128);
    let out = vibpapr(dir.path(), &["train-source", "--input", "g", "--epochs", "5", "--lr", "1000", "--out", "m.json"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn closed_form_ccdf_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["ccdf", "--closed-form", "--n", "5000", "--from-db", "6", "--to-db", "14", "--step", "0.1", "--out", "c.csv"];
    assert_eq!(code(&vibpapr(dir.path(), &args)), 0);
    let rows = csv_rows(&dir.path().join("c.csv"));
    let grid = threshold_grid(6.0, 14.0, 0.1).unwrap();
    assert_eq!(rows.len(), grid.len());
    for (row, t) in rows.iter().zip(&grid) {
        assert_eq!(row[0].parse::<f64>().unwrap(), *t);
        assert_eq!(row[1].parse::<f64>().unwrap(), ccdf_closed_form(*t, 5000).unwrap());
        assert_eq!(row[2], "closed_form");
    }
}

#[test]
fn papr_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let set = gaussian_bundle(dir.path(), "g", 30, 256);
    let out = vibpapr(dir.path(), &["papr", "--input", "g", "--from-db", "4", "--to-db", "12", "--step", "0.5", "--out", "p.csv"]);
    assert_eq!(code(&out), 0);
    let curve = ccdf_empirical(&set, &threshold_grid(4.0, 12.0, 0.5).unwrap()).unwrap();
    let rows = csv_rows(&dir.path().join("p.csv"));
    let got: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert_eq!(got, curve.probabilities);
}

#[test]
fn gen_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let args = ["--seed", seed, "gen", "--bandlimited", "--n-signals", "6", "--len", "128", "--out", name];
        assert_eq!(code(&vibpapr(dir.path(), &args)), 0);
    }
    let read = |n: &str| fs::read(dir.path().join(format!("{n}.bin"))).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let set = load_bundle(dir.path().join("a")).unwrap();
    assert_eq!((set.len(), set.segment_len()), (6, 128));
}

#[test]
fn mu_law_roundtrip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let set = gaussian_bundle(dir.path(), "g", 5, 64);
    let scaled = set.map("g:scaled", |s| Ok(s.samples().iter().map(|x| x / 10.0).collect())).unwrap();
    save_bundle(&scaled, dir.path().join("g")).unwrap();
    let p = |args: &[&str]| assert_eq!(code(&vibpapr(dir.path(), args)), 0);
    p(&["compand", "--input", "g", "--norm-a", "1", "--out", "m"]);
    p(&["compand", "--input", "m", "--mode", "expand", "--norm-a", "1", "--out", "e"]);
    let back = load_bundle(dir.path().join("e")).unwrap();
    for (a, b) in scaled.iter().zip(back.iter()) {
        for (x, y) in a.samples().iter().zip(b.samples()) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn chain_config_runs_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let config = format!(
        r#"{{"schema_version":1,"seed":2,
            "dataset":{{"kind":"bandlimited","n_signals":40,"segment_len":64}},
            "compander":{{"autoencoder":{{"source_train":{{"max_epochs":2}},"destination_train":{{"max_epochs":2}}}}}},
            "hpa":{{}},
            "channel":{{"snr_db":[0.0]}},
            "output_dir":{:?}}}"#,
        dir.path().join("run").to_str().unwrap()
    );
    fs::write(dir.path().join("cfg.json"), config).unwrap();
    let mut reports = Vec::new();
    for _ in 0..2 {
        let out = vibpapr(dir.path(), &["chain", "--config", "cfg.json"]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        reports.push(fs::read(dir.path().join("run/report.json")).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let out = vibpapr(dir.path(), &["report", "--input", "run/report.json"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("arm,metric,value"));
    assert!(text.contains("autoencoder,evm_percent,"));
}

#[test]
fn chain_bundle_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_bundle(dir.path(), "g", 8, 256);
    let p = |args: &[&str]| {
        let out = vibpapr(dir.path(), args);
        assert_eq!(code(&out), 0, "{:?}: {}", args, String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap()
    };
    p(&["--seed", "1", "chain", "--input", "g", "--a-sat", "1", "--snr-db", "10", "--out", "ch"]);
    let evm: f64 = p(&["evm", "--reference", "g", "--input", "ch"]).trim().parse().unwrap();
    assert!(evm > 0.0);
    let same: f64 = p(&["evm", "--reference", "g", "--input", "g"]).trim().parse().unwrap();
    assert_eq!(same, 0.0);
    let snr: f64 = p(&["snrd", "--reference", "g", "--input", "ch"]).trim().parse().unwrap();
    assert!(snr.is_finite());
    p(&["psd", "--input", "g", "--out", "psd.csv"]);
    let header = fs::read_to_string(dir.path().join("psd.csv")).unwrap();
    assert!(header.starts_with("freq_hz,density\n"));
}
