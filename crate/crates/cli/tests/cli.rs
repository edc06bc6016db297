//! End-to-end runs of the `quadtomo` binary.

use std::path::Path;
use std::process::{Command, Output};

fn quadtomo(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadtomo"))
        .arg("--output-dir")
        .arg(dir)
        .args(args)
        .env_remove("QUADTOMO_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, body).unwrap();
    path
}

#[test]
fn simulate_writes_traces_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"detector": {"alpha": 1.5, "t_noise": 0.75}, "n_samples": 5000}"#);
    let out = quadtomo(tmp.path(), &["--config", cfg.to_str().unwrap(), "simulate"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["electronic_noise.csv", "shot_noise.csv", "signal.csv", "manifest.json"] {
        assert!(tmp.path().join(f).exists(), "{f}");
    }
    let m = json(&tmp.path().join("manifest.json"));
    assert_eq!(m["alpha_prime"].as_f64().unwrap(), (1.5f64 * 1.5 + 0.75).sqrt());
    assert_eq!(m["seed"], 1);
    assert_eq!(m["config"]["n_samples"], 5000);
}

#[test]
fn seed_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"seed": 5, "n_samples": 100}"#);
    let cfg = cfg.to_str().unwrap();
    let seed_of = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_quadtomo"));
        cmd.args(["--output-dir", tmp.path().to_str().unwrap(), "--config", cfg, "simulate"]);
        cmd.env_remove("QUADTOMO_SEED");
        if let Some(e) = env {
            cmd.env("QUADTOMO_SEED", e);
        }
        if let Some(f) = flag {
            cmd.args(["--seed", f]);
        }
        assert!(cmd.output().unwrap().status.success());
        json(&tmp.path().join("manifest.json"))["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of(None, None), 5);
    assert_eq!(seed_of(Some("9"), None), 9);
    assert_eq!(seed_of(Some("9"), Some("11")), 11);
}

#[test]
fn config_errors_exit_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let target = tmp.path().join("out");
    for body in [r#"{"bogus": 1}"#, r#"{"optical_eta": 2.0}"#, r#"{"state": {"kind": "vacuum"}}"#] {
        let cfg = write_config(tmp.path(), body);
        let sub = if body.contains("vacuum") { "sweep" } else { "simulate" };
        let out = quadtomo(&target, &["--config", cfg.to_str().unwrap(), sub]);
        assert_eq!(out.status.code(), Some(2), "{body}");
        assert!(!target.exists(), "{body} left output behind");
    }
    // The bad env seed is a configuration error too.
    let bad_env = Command::new(env!("CARGO_BIN_EXE_quadtomo"))
        .args(["--output-dir", target.to_str().unwrap(), "simulate", "--n-samples", "10"])
        .env("QUADTOMO_SEED", "abc")
        .output()
        .unwrap();
    assert_eq!(bad_env.status.code(), Some(2));
    assert!(!target.exists());
}

#[test]
fn calibrate_reports_alpha_prime_and_rejects_bad_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), r#"{"detector": {"alpha": 1, "t_noise": 1}, "n_samples": 1000000}"#);
    assert!(quadtomo(tmp.path(), &["--config", cfg.to_str().unwrap(), "simulate"]).status.success());
    let out = quadtomo(tmp.path(), &["calibrate", tmp.path().join("shot_noise.csv").to_str().unwrap()]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("alpha_prime = 1.41"));
    let report = json(&tmp.path().join("calibration.json"));
    let (a, se) = (report["alpha_prime"].as_f64().unwrap(), report["std_error"].as_f64().unwrap());
    assert!((a - 2f64.sqrt()).abs() < 3.0 * se);

    let zeros = tmp.path().join("zeros.csv");
    let mut body = String::from("# kind: shot_noise\n# seed: 0\n# alpha: 1.0\n# t_noise: 0.0\nphase_rad,volts\n");
    body.push_str(&"0.0,0.0\n".repeat(10));
    std::fs::write(&zeros, body).unwrap();
    assert_eq!(quadtomo(tmp.path(), &["calibrate", zeros.to_str().unwrap()]).status.code(), Some(3));

    let garbage = tmp.path().join("garbage.csv");
    std::fs::write(&garbage, "phase_rad,volts\n0.0,abc\n").unwrap();
    assert_eq!(quadtomo(tmp.path(), &["calibrate", garbage.to_str().unwrap()]).status.code(), Some(3));

    let missing = tmp.path().join("missing.csv");
    assert_eq!(quadtomo(tmp.path(), &["calibrate", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn calibration_error_scales_inverse_sqrt_n() {
    let tmp = tempfile::tempdir().unwrap();
    let mut errors = Vec::new();
    for n in [100, 1_000_000] {
        let dir = tmp.path().join(n.to_string());
        let out = quadtomo(&dir, &["simulate", "--n-samples", &n.to_string()]);
        assert!(out.status.success());
        assert!(quadtomo(&dir, &["calibrate", dir.join("shot_noise.csv").to_str().unwrap()]).status.success());
        errors.push(json(&dir.join("calibration.json"))["std_error"].as_f64().unwrap());
    }
    let ratio = errors[0] / errors[1];
    assert!((ratio / 100.0 - 1.0).abs() < 0.3, "{ratio}");
}

#[test]
fn reconstruct_vacuum_both_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        r#"{"state": {"kind": "vacuum"}, "optical_eta": 1, "detector": {"alpha": 1, "t_noise": 0.2}, "n_samples": 1200000}"#,
    );
    assert!(quadtomo(tmp.path(), &["--config", cfg.to_str().unwrap(), "simulate"]).status.success());
    let sig = tmp.path().join("signal.csv");
    let shot = tmp.path().join("shot_noise.csv");
    for method in ["fbp", "gaussfit"] {
        let dir = tmp.path().join(method);
        let out = quadtomo(
            &dir,
            &["reconstruct", "--signal", sig.to_str().unwrap(), "--shot", shot.to_str().unwrap(), "--method", method],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let report = json(&dir.join("reconstruction.json"));
        let cov = if method == "fbp" {
            &report["reconstruction"]["moments"]["cov"]
        } else {
            &report["reconstruction"]["cov"]
        };
        for k in [0, 1] {
            let v = cov[k][k].as_f64().unwrap();
            assert!((v - 0.5).abs() < 0.02, "{method}: {v}");
        }
        assert!(dir.join("wigner.csv").exists());
    }
    // Swapped inputs are a data error.
    let out = quadtomo(
        tmp.path(),
        &["reconstruct", "--signal", shot.to_str().unwrap(), "--shot", sig.to_str().unwrap()],
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn equivalence_check_prints_quoted_efficiency() {
    let tmp = tempfile::tempdir().unwrap();
    let out = quadtomo(tmp.path(), &["equivalence-check", "--snr-db", "6.02"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("eta_eq = 0.7500"), "{text}");
    assert!(text.contains("PASS"));

    let cfg = write_config(
        tmp.path(),
        r#"{"state": {"kind": "squeezed", "r": 1}, "detector": {"alpha": 1, "t_noise": 1}}"#,
    );
    let out = quadtomo(tmp.path(), &["--config", cfg.to_str().unwrap(), "equivalence-check"]);
    assert!(stdout(&out).contains("eta_eq = 0.5000"));

    let cfg = write_config(tmp.path(), r#"{"detector": {"alpha": 1, "t_noise": 0}}"#);
    let out = quadtomo(tmp.path(), &["--config", cfg.to_str().unwrap(), "equivalence-check"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("eta_eq = 1.0000"));
    assert!(stdout(&out).contains("snr = inf"));
}

#[test]
fn sweep_writes_table_and_theory_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = quadtomo(tmp.path(), &["sweep", "--snr-db", "5,20", "--n-samples", "100000"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("snr_db,eta_inferred,eta_sigma,eta_predicted"));
    assert_eq!(lines.count(), 2);
    assert!(csv.contains("\n5.0,") && csv.contains("\n20.0,"));
    let theory = std::fs::read_to_string(tmp.path().join("theory_curve.csv")).unwrap();
    assert_eq!(theory.lines().count(), 201);
    let summary = json(&tmp.path().join("sweep.json"));
    assert_eq!(summary["points"].as_array().unwrap().len(), 2);
    assert_eq!(summary["seed"], 1);
}
