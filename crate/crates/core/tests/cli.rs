use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emd-urllc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_owned).collect();
    let rows = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

#[test]
fn decompose_columns_sum_to_total() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert!(cli(&["simulate", "--config", "table1_preset", "--out", out]).status.success());
    let trace = dir.path().join("trace.csv");
    let status = cli(&["decompose", "--trace", trace.to_str().unwrap(), "--out", out]).status;
    assert!(status.success());
    let (header, rows) = read_csv(&dir.path().join("imfs.csv"));
    assert_eq!(&header[..3], &["t", "total", "imf_1"]);
    assert_eq!(header.last().unwrap(), "residual");
    assert_eq!(rows.len(), 100);
    for row in rows {
        let sum: f64 = row[2..].iter().sum();
        assert!((sum - row[1]).abs() <= 1e-9 * row[1].abs().max(1.0));
    }
}

#[test]
fn predict_then_allocate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.cfg");
    std::fs::write(
        &cfg,
        "link.n_samples = 120\nmethods = AR_DIRECT, IIR, GENIE\ntarget_eps_list = 1e-3, 1e-1\n",
    )
    .unwrap();
    let (cfg, out) = (cfg.to_str().unwrap(), dir.path().to_str().unwrap());
    assert!(cli(&["simulate", "--config", cfg, "--out", out, "--seed", "7"]).status.success());
    let trace = dir.path().join("trace.csv");
    let trace = trace.to_str().unwrap();
    assert!(cli(&["predict", "--config", cfg, "--trace", trace, "--out", out]).status.success());
    let (header, rows) = read_csv(&dir.path().join("predictions.csv"));
    assert_eq!(header, ["t", "actual", "pred_ar_direct", "pred_iir", "pred_genie"]);
    assert_eq!(rows.len(), 24);
    assert!(rows.iter().all(|r| r[1] == r[4]));
    let rmse = std::fs::read_to_string(dir.path().join("rmse.csv")).unwrap();
    assert!(rmse.starts_with("method,rmse\nAR_DIRECT,"));

    let preds = dir.path().join("predictions.csv");
    let args = ["allocate", "--config", cfg, "--trace", trace, "--predictions", preds.to_str().unwrap(), "--out", out];
    assert!(cli(&args).status.success());
    let (header, rows) = read_csv(&dir.path().join("alloc_genie_eps_1e-3.csv"));
    assert_eq!(header[0], "t");
    assert_eq!(rows[0][0], 96.0);
    for r in &rows {
        assert!((r[7] - 1e-3).abs() < 1e-5);
    }
    assert!(dir.path().join("alloc_iir_eps_1e-1.csv").exists());
}

#[test]
fn missing_config_names_path() {
    let out = cli(&["evaluate", "--config", "/no/such/place/exp.cfg"]);
    assert!(!out.status.success());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/place/exp.cfg"));
}

#[test]
fn bad_config_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "link.n_samples = 100\nlink.bogus = 3\n").unwrap();
    let out = cli(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("link.bogus"), "{err}");
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["frobnicate"][..], &["simulate", "--no-such-flag"], &[]] {
        let out = cli(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    }
}
