use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn hltomo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hltomo")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = hltomo(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("json error on stderr");
    serde_json::from_str(line).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, name: &str, prep: &str, n: usize, extra: &[&str]) -> std::path::PathBuf {
    let trace = dir.join("traces").join(format!("{name}.csv"));
    let n = n.to_string();
    let mut args = vec![
        "simulate", "--prep", prep, "--lo-magnitude", "3.82", "--eta-c", "0.8", "--eta-d", "0.8", "--seed", "11",
        "--n-samples", &n, "--output", s(&trace),
    ];
    args.extend_from_slice(extra);
    ok(&args);
    trace
}

#[test]
fn empty_simulation_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "empty", "coherent:1.03", 0, &[]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 1);
    assert!(dir.path().join("traces/empty.meta.json").exists());
}

#[test]
fn fock_trace_has_one_row_per_pulse() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "f", "fock:1", 50_000, &[]);
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 50_001);
    let meta: Value = serde_json::from_slice(&std::fs::read(dir.path().join("traces/f.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(meta["phi_per_step"].as_array().unwrap().len(), 60);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a", "coherent:1.03", 30_000, &[]);
    let b = simulate(dir.path(), "b", "coherent:1.03", 30_000, &[]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    for (input, out) in [(&a, "ra"), (&b, "rb")] {
        ok(&["reconstruct", "--input", s(input), "--output", s(&dir.path().join(out)), "--dim", "6"]);
    }
    // The header carries the config hash, which covers the differing paths.
    let body = |name: &str| {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        text.lines().skip(1).collect::<Vec<_>>().join("\n")
    };
    assert_eq!(body("ra.rho.csv"), body("rb.rho.csv"));
    let ja: Value = serde_json::from_slice(&std::fs::read(dir.path().join("ra.json")).unwrap()).unwrap();
    let jb: Value = serde_json::from_slice(&std::fs::read(dir.path().join("rb.json")).unwrap()).unwrap();
    assert_eq!(ja["analysis"], jb["analysis"]);
}

#[test]
fn calibrated_reconstruction_reports_fidelity_and_moments() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "coh", "coherent:1.03", 100_000, &[]);
    let out = dir.path().join("coh_rec");
    ok(&["reconstruct", "--input", s(&trace), "--output", s(&out), "--target", "coherent:1.03", "--svg"]);
    let doc: Value = serde_json::from_slice(&std::fs::read(dir.path().join("coh_rec.json")).unwrap()).unwrap();
    let a = &doc["analysis"];
    let f = a["fidelity"].as_f64().unwrap();
    assert!(f > 0.9 && f <= 1.0 + 1e-9, "fidelity {f}");
    let var = a["moments"]["var_x"].as_f64().unwrap();
    assert!((var - 0.544).abs() < 0.03, "var {var}");
    // eta = 0.8 on both detectors: the theory mean is that of the attenuated state.
    let theory_mean = a["theory"]["mean_x"].as_f64().unwrap();
    assert!((theory_mean - 0.8f64.sqrt() * 2f64.sqrt() * 1.03).abs() < 1e-9);
    assert!(doc["calibration"]["residual_rms"].is_number());
    for suffix in ["rho.csv", "trace.csv", "envelope.csv", "svg", "config.json"] {
        assert!(dir.path().join(format!("coh_rec.{suffix}")).exists(), "{suffix}");
    }
    let rho = std::fs::read_to_string(dir.path().join("coh_rec.rho.csv")).unwrap();
    assert!(rho.starts_with("# config_hash="));

    let report = dir.path().join("rep");
    let stdout = ok(&["report", "--output", s(&report), s(&dir.path().join("coh_rec.json"))]).stdout;
    let table = String::from_utf8(stdout).unwrap();
    assert!(table.contains("<n>") && table.contains("coh_rec"));
    assert!(dir.path().join("rep.csv").exists() && dir.path().join("rep.txt").exists());
}

#[test]
fn random_phase_moments_go_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "p", "phav:1.03", 30_000, &[]);
    let out = ok(&["moments", "--input", s(&trace), "--phase-mode", "random", "--seed", "3"]);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(doc["moments"]["var_x"].as_f64().unwrap() > 1.0);
}

#[test]
fn missing_input_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = hltomo(&["reconstruct", "--input", s(&missing), "--lo-magnitude", "3.82", "--output", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let e = error_json(&out);
    assert_eq!(e["error"]["kind"], "config");
    assert!(e["error"]["path"].as_str().unwrap().ends_with("nope.csv"));
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = hltomo(&[
        "simulate", "--prep", "fock:1", "--lo-magnitude", "3", "--output", s(&dir.path().join("t.csv")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_json(&out)["error"]["message"].as_str().unwrap().contains("--seed"));
}

#[test]
fn unknown_key_and_empty_report_are_rejected() {
    let out = hltomo(&["simulate", "--bogus", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = hltomo(&["report"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn too_few_steps_fail_calibration() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "few", "coherent:1.03", 20_000, &["--n-steps", "4"]);
    let out = hltomo(&["reconstruct", "--input", s(&trace), "--output", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(error_json(&out)["error"]["kind"], "data_quality");
}

#[test]
fn narrow_phase_range_fails_coverage() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate(dir.path(), "narrow", "coherent:1.03", 20_000, &[]);
    let meta_path = dir.path().join("traces/narrow.meta.json");
    let mut meta: Value = serde_json::from_slice(&std::fs::read(&meta_path).unwrap()).unwrap();
    meta["phi_per_step"] = Value::from(vec![0.3; 60]);
    std::fs::write(&meta_path, meta.to_string()).unwrap();
    let out = hltomo(&[
        "reconstruct", "--input", s(&trace), "--output", s(&dir.path().join("r")), "--phase-mode", "trust_file",
    ]);
    assert_eq!(out.status.code(), Some(4));
}
