use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn simulate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_simulate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn fig1a_csv_layout() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = simulate(&["--preset", "fig1a", "--out", out]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("fig1a.csv")).unwrap();
    assert!(text.starts_with("t,sigma_x,sigma_y,sigma_z,case_label\r\n"));
    let lines: Vec<&str> = text.split_terminator("\r\n").collect();
    assert_eq!(lines.len(), 4002);
    for line in &lines[1..] {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 5);
        assert_eq!(fields[4], "cdt");
        for f in &fields[..4] {
            let mantissa = f.trim_start_matches('-').split('e').next().unwrap();
            assert_eq!(mantissa.replace('.', "").len(), 17, "{f}");
            f.parse::<f64>().unwrap();
        }
    }
    assert!(dir.path().join("fig1a.manifest.json").exists());
}

#[test]
fn manifest_reruns_bit_identically() {
    let dir = TempDir::new().unwrap();
    let first = dir.path().join("a");
    let second = dir.path().join("b");
    let cfg = write(
        dir.path(),
        "s.json",
        r#"{"preset":"fig2","t_end":20,"samples":201}"#,
    );
    let o = simulate(&[
        "--config",
        &cfg,
        "--out",
        first.to_str().unwrap(),
        "--dump-kernel",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest = first.join("fig2.manifest.json");
    let o = simulate(&[
        "--config",
        manifest.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(first.join("fig2.csv")).unwrap(),
        fs::read(second.join("fig2.csv")).unwrap()
    );
    let kernel = fs::read_to_string(first.join("fig2.driven_dissipative.kernel.csv")).unwrap();
    assert!(kernel.starts_with("tau,m_real,m_imag\r\n"));

    let m: serde_json::Value = serde_json::from_slice(&fs::read(&manifest).unwrap()).unwrap();
    assert_eq!(m["software_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(m["scenario"]["cases"].as_array().unwrap().len(), 4);
    assert_eq!(m["diagnostics"].as_array().unwrap().len(), 4);
    assert!(m["diagnostics"][3]["kernel_tau_max"].as_f64().unwrap() > 100.0);
}

#[test]
fn sweep_columns() {
    let dir = TempDir::new().unwrap();
    let o = simulate(&[
        "--preset",
        "sweep",
        "--samples",
        "7",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    let mut lines = text.split_terminator("\r\n");
    assert_eq!(
        lines.next().unwrap(),
        "s_over_wl,eps1,eps2,splitting,splitting_highfreq"
    );
    assert_eq!(lines.count(), 7);
}

#[test]
fn validation_errors_exit_2_with_path() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let bad = write(
        dir.path(),
        "bad.json",
        r#"{"preset":"fig2","config":{"gamma_cav":2.0}}"#,
    );
    let o = simulate(&["--config", &bad, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("config.gamma_cav"), "{}", stderr(&o));

    let empty = write(dir.path(), "empty.json", "");
    let o = simulate(&["--config", &empty, "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let msg = stderr(&o);
    assert!(msg.contains("preset") && msg.contains("config"), "{msg}");

    let o = simulate(&["--preset", "fig2", "--dt", "5", "--out", out]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    let o = simulate(&["--config", &bad, "--preset", "fig1a", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "cap.json",
        r#"{"preset":"fig2","t_end":5,"numerics":{"horizon_cap":10}}"#,
    );
    let o = simulate(&["--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn missing_file_exits_1() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    let o = simulate(&[
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn warnings_go_to_stderr() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "strong.json",
        r#"{"config":{"g":0.2,"s":1.0},"t_end":2,"samples":11,"mode":"dissipative"}"#,
    );
    let o = simulate(&["--config", &cfg, "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
}
