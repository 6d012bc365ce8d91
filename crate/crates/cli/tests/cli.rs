use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn sepaudit(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_sepaudit"));
    cmd.args(args).env_remove("SEPAUDIT_OUT_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    sepaudit(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Three classes of 8 samples over 80 wavelengths from 370 nm in 1 nm steps;
/// LOO is offset between 420 and 440 nm.
fn write_wide(dir: &Path) -> (String, String) {
    let classes = ["EVOO", "LOO", "VOO"];
    let mut header = vec!["wavelength".to_string()];
    let mut labels = String::from("sample,label\n");
    for name in classes {
        for s in 0..8 {
            let id = format!("{name}_{s}");
            labels.push_str(&format!("{id},{name}\n"));
            header.push(id);
        }
    }
    let mut wide = header.join(",") + "\n";
    for w in 0..80 {
        let nm = 370.0 + w as f64;
        let mut row = vec![format!("{nm}")];
        for c in 0..3 {
            for s in 0..8 {
                let noise = ((w * 31 + s * 17 + c * 7) as f64 * 0.618).sin() * 0.3;
                let shift = if c == 1 && (420.0..440.0).contains(&nm) { 1.0 } else { 0.0 };
                row.push(format!("{}", 1.0 + noise + shift));
            }
        }
        wide.push_str(&(row.join(",") + "\n"));
    }
    let (w, l) = (dir.join("wide.csv"), dir.join("labels.csv"));
    fs::write(&w, wide).unwrap();
    fs::write(&l, labels).unwrap();
    (w.to_str().unwrap().to_string(), l.to_str().unwrap().to_string())
}

#[test]
fn usage_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["run", "N9", "--out-dir", out],
        vec!["run", "N3", "--grid-override", "rho=1", "--out-dir", out],
        vec!["run", "N3", "--grid-override", "n=1:2", "--out-dir", out],
        vec!["run", "N3", "--models", "svm", "--out-dir", out],
        vec!["run", "Ra1", "--out-dir", out],
        vec!["--jobs", "0", "run", "N2", "--out-dir", out],
        vec!["run", "N2", "--no-such-flag"],
        vec!["frobnicate"],
    ] {
        let o = run(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn data_errors_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "label,1,2\nEVOO,1.0,oops\n").unwrap();
    for data in [dir.path().join("missing.csv"), bad] {
        let o = run(&["audit", "global-shuffle", "--data", data.to_str().unwrap(), "--out-dir", out.to_str().unwrap()]);
        assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains(data.file_name().unwrap().to_str().unwrap()));
    }
}

#[test]
fn flags_override_config_file_and_env_sets_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("n3.conf");
    fs::write(&cfg, "# small grid\nn = 5,10\ndsigma = 0.5\nsamples_per_class = 40\nseed = 3\nmodels = qda\n").unwrap();
    let out_dir = dir.path().join("from-env");
    let o = sepaudit(&["run", "N3", "--config", cfg.to_str().unwrap(), "--seed", "11", "--grid-override", "n=20"])
        .env("SEPAUDIT_OUT_DIR", &out_dir)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out_dir.join("N3.json"));
    assert_eq!(report["config"]["seed"], 11);
    assert_eq!(report["config"]["axes"][1]["values"], serde_json::json!([20.0]));
    assert_eq!(report["config"]["axes"][0]["values"], serde_json::json!([0.5]));
    assert_eq!(report["config"]["constants"]["samples_per_class"], 40.0);
    assert_eq!(report["records"].as_array().unwrap().len(), 1);

    let manifest = json(&out_dir.join("N3.manifest.json"));
    assert_eq!(manifest["seed"], 11);
    for entry in manifest["outputs"].as_array().unwrap() {
        let bytes = fs::read(out_dir.join(entry["path"].as_str().unwrap())).unwrap();
        let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
        assert_eq!(entry["sha256"], digest.as_str());
    }
    assert!(manifest["inputs"].as_array().unwrap().iter().any(|i| i["path"].as_str().unwrap().ends_with("n3.conf")));
}

#[test]
fn bad_config_file_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.conf");
    fs::write(&cfg, "this line has no equals sign\n").unwrap();
    let o = run(&["run", "N2", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn convert_then_audit_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let (wide, labels) = write_wide(dir.path());
    let data = dir.path().join("oil.csv");
    let o = run(&["convert", "--wide", &wide, "--labels", &labels, "--out", data.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = dir.path().join("audit.conf");
    fs::write(&cfg, "trees = 20\nwidths = 20\n").unwrap();
    let outs: Vec<_> = (0..2).map(|i| dir.path().join(format!("out{i}"))).collect();
    for out in &outs {
        let o = run(&[
            "audit",
            "window-sweep",
            "--data",
            data.to_str().unwrap(),
            "--task",
            "EVOO:LOO",
            "--config",
            cfg.to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let name = "window-sweep_EVOO-LOO.json";
    assert_eq!(fs::read(outs[0].join(name)).unwrap(), fs::read(outs[1].join(name)).unwrap());
    let sweep = json(&outs[0].join(name));
    let points = sweep["points"].as_array().unwrap();
    // 80 columns minus the default 380-420 nm mask leaves 40, i.e. two windows.
    assert_eq!(points.len(), 2);
    let row = run(&[
        "run",
        "Ra4",
        "--data",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        outs[0].to_str().unwrap(),
    ]);
    assert!(row.status.success(), "{}", String::from_utf8_lossy(&row.stderr));
}

#[test]
fn concentration_writes_summary_and_histograms() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["concentration", "--n-list", "2,500", "--samples", "500", "--bins", "20", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(dir.path().join("concentration_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2 * 2);
    assert!(summary.starts_with("n,sigma,mean_norm,sd_norm,chi_mean,overlap"));
    let hist = fs::read_to_string(dir.path().join("concentration_histograms.csv")).unwrap();
    assert_eq!(hist.lines().count(), 1 + 2 * 2 * 20);
}
