//! End-to-end tests driving the compiled binary.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dicke-dft"))
}

fn rabi_config(extra: &str) -> String {
    format!(
        "[model]\nn_spins = 1\nn_modes = 1\ncoupling = [[1.0]]\ntunneling = [1.0]\n{extra}"
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("missing {name}: {e}"))
}

#[test]
fn spectrum_decoupled_ground_energy_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[model]\nn_spins = 1\nn_modes = 1\ncoupling = [[0.0]]\ntunneling = [1.0]\n",
    );
    let out = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(tmp.path(), "spectrum.csv");
    // default k = 1: header plus one row
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "index,eigenvalue");
    let e0: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    assert!(e0.abs() < 1e-9, "E0 = {e0}");
}

#[test]
fn malformed_config_exits_2_without_partial_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[model]\nn_spins = \"oops\"\n");
    let outdir = tmp.path().join("out");
    let out = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        outdir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!outdir.exists() || std::fs::read_dir(&outdir).unwrap().next().is_none());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &rabi_config("[model.extra]\nfoo = 1\n"));
    let out = run(&["spectrum", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_config_exits_2() {
    let out = run(&["spectrum"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn oversized_basis_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[model]\nn_spins = 3\nn_modes = 2\ncoupling = [[0.1, 0.1, 0.1], [0.1, 0.1, 0.1]]\ntunneling = [1.0, 1.0, 1.0]\n[truncation]\nfock_cutoff = 600\n",
    );
    let out = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn curve_outputs_are_deterministic_and_sane() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &rabi_config("[curve]\nlambdas = [0.0, 1.0]\nsigma_points = 11\nsigma_max = 0.9\n"),
    );
    let out1 = tmp.path().join("a");
    let out2 = tmp.path().join("b");
    for out in [&out1, &out2] {
        let o = run(&[
            "curve",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--seed",
            "42",
            "--format",
            "svg",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["curve_00.csv", "curve_01.csv", "curve.svg"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }

    // λ = 0 column matches the closed form
    let csv = read(&out1, "curve_00.csv");
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line
            .split(',')
            .take(2)
            .map(|x| x.parse::<f64>().unwrap())
            .collect();
        let expect = 1.0 - (1.0 - cols[0] * cols[0]).sqrt();
        assert!((cols[1] - expect).abs() < 1e-8);
    }
}

#[test]
fn sidecar_round_trips_through_config_parser() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_text = rabi_config("[spectrum]\nk = 2\n");
    let cfg = write_config(tmp.path(), &cfg_text);
    let o = run(&[
        "spectrum",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let sidecar: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "spectrum.meta.json")).unwrap();
    assert_eq!(sidecar["command"], "spectrum");
    assert_eq!(sidecar["seed"], 0);
    assert!(sidecar["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    // the embedded config echo deserializes to the exact original config
    let original: toml::Value = toml::from_str(&cfg_text).unwrap();
    let original_json = serde_json::to_value(&original).unwrap();
    assert_eq!(sidecar["config"]["model"], original_json["model"]);
    assert_eq!(sidecar["config"]["spectrum"]["k"], original_json["spectrum"]["k"]);
}

#[test]
fn regular_set_lists_diagonals() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &rabi_config("[regular_set]\nn_spins = 2\nsamples = 40000\n"),
    );
    let o = run(&[
        "regular-set",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = read(tmp.path(), "hyperplanes.csv");
    let r = 0.5f64.sqrt();
    let mut saw_diag = false;
    let mut saw_anti = false;
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|x| x.parse::<f64>().unwrap()).collect();
        if cols[2] == 0.0 {
            if (cols[0] - r).abs() < 1e-12 && (cols[1] + r).abs() < 1e-12 {
                saw_diag = true; // σ1 = σ2
            }
            if (cols[0] - r).abs() < 1e-12 && (cols[1] - r).abs() < 1e-12 {
                saw_anti = true; // σ1 = −σ2
            }
        }
    }
    assert!(saw_diag && saw_anti);
    let summary: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "regular_set.json")).unwrap();
    assert_eq!(summary["components"], 4);
}

#[test]
fn hk_scan_reports_zero_collisions() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &rabi_config("[hk_scan]\nnv = 3\nnj = 3\nrange = 0.8\n"),
    );
    let o = run(&[
        "hk-scan",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&read(tmp.path(), "hk_scan.json")).unwrap();
    assert_eq!(summary["collisions"], 0);
}

#[test]
fn functional_emits_both_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        &rabi_config("[functional]\nkind = \"both\"\ntargets = [{ sigma = [0.3], xi = [0.1] }]\n"),
    );
    let o = run(&[
        "functional",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fll = read(tmp.path(), "functional_fll.csv");
    let fl = read(tmp.path(), "functional_fl.csv");
    let parse_f = |text: &str| -> f64 {
        text.lines()
            .nth(1)
            .unwrap()
            .split(',')
            .nth(2)
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((parse_f(&fll) - parse_f(&fl)).abs() < 1e-6);
}

#[test]
fn diagnose_default_battery_exits_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&["diagnose", "--out", tmp.path().to_str().unwrap(), "--seed", "7"]);
    assert!(
        o.status.success(),
        "diagnose failed:\n{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let csv = read(tmp.path(), "diagnose.csv");
    assert!(csv.lines().count() > 15);
    for line in csv.lines().skip(1) {
        assert!(line.ends_with(",true"), "failed check: {line}");
    }
}

#[test]
fn thread_count_env_var_is_honored() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &rabi_config("[spectrum]\nk = 2\n"));
    let o = bin()
        .args([
            "spectrum",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .env("DICKE_DFT_THREADS", "1")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(read(tmp.path(), "spectrum.csv").lines().count(), 3);
}
