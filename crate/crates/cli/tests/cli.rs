use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emulcap::io::{write_fixtures, ChannelFile};
use emulcap::random::{random_channel, rng_from_seed};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_emulcap"));
    for var in ["EMULCAP_TOL", "EMULCAP_SEED", "EMULCAP_GRID", "EMULCAP_DELTA_MAX", "EMULCAP_BUDGET"] {
        c.env_remove(var);
    }
    c
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn fixtures() -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    write_fixtures(dir.join("fx")).unwrap();
    (tmp, dir)
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn examples_pass() {
    let (_t, dir) = fixtures();
    let out = run(&["examples", "--fixtures", "more"], &dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("(5,3) vs (10,3,1,1) C(G->F)") && text.contains(", 0 failed"));
    assert!(dir.join("more/shape53.json").exists());
}

#[test]
fn analyze_shapes_and_exit_codes() {
    let (_t, dir) = fixtures();
    let out = run(&["analyze", "fx/dephasing3.json"], &dir);
    assert_eq!(code(&out), 0);
    assert_eq!(json(&out)["shape"], serde_json::json!([1, 1, 1]));
    let out = run(&["analyze", "fx/identity4.json"], &dir);
    assert_eq!(json(&out)["shape"], serde_json::json!([4]));

    let out = run(&["analyze", "fx/non_idempotent.json"], &dir);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("residual"));

    std::fs::write(dir.join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&run(&["analyze", "broken.json"], &dir)), 64);
    assert_eq!(code(&run(&["analyze", "missing.json"], &dir)), 64);
    assert_eq!(code(&run(&["frobnicate"], &dir)), 64);
    assert_eq!(code(&run(&["--help"], &dir)), 0);
}

#[test]
fn capacity_reports() {
    let (_t, dir) = fixtures();
    let out = run(&["capacity", "fx/shape53.json", "fx/shape10_3_1_1.json", "--curve-csv", "curve.csv"], &dir);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert!((v["value"].as_f64().unwrap() - 1.29916).abs() < 1e-4);
    assert!((v["argmin_p"].as_f64().unwrap() - 1.15401).abs() < 1e-3);
    assert_eq!(v["interior_minimizer"], true);
    let csv = std::fs::read_to_string(dir.join("curve.csv")).unwrap();
    assert!(csv.starts_with("s,p,ratio\n"));

    let v = json(&run(&["capacity", "fx/identity4.json", "fx/shape22.json"], &dir));
    assert!((v["value"].as_f64().unwrap() - 0.5).abs() < 1e-9);
    let v = json(&run(&["capacity", "fx/shape21.json", "fx/shape21.json"], &dir));
    assert!((v["value"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    let v = json(&run(&["capacity", "fx/shape10_3_1_1.json", "fx/shape53.json"], &dir));
    assert_eq!(v["argmin_p"], "inf");
}

#[test]
fn emulate_kits_and_infeasibility() {
    let (_t, dir) = fixtures();
    let out = run(&["emulate", "fx/identity2.json", "fx/shape21.json", "--out", "kit"], &dir);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["residual"].as_f64().unwrap() <= 1e-8);
    for f in ["encoder.json", "decoder.json", "plan.csv", "kit.json"] {
        assert!(dir.join("kit").join(f).exists(), "{f}");
    }
    ChannelFile::read(dir.join("kit/encoder.json")).unwrap();

    let out = run(&["emulate", "fx/identity2.json", "fx/dephasing2.json"], &dir);
    assert_eq!(code(&out), 3);
    assert_eq!(json(&out)["feasible"], false);

    let out = run(&["emulate", "fx/dephasing4.json", "fx/identity2.json", "--n", "2"], &dir);
    assert_eq!(code(&out), 0);
    assert!(json(&out)["residual"].as_f64().unwrap() <= 1e-8);

    let args = ["emulate", "fx/identity4.json", "fx/identity4.json", "--k", "2", "--n", "2"];
    assert_eq!(code(&run(&args, &dir)), 66);
    assert_eq!(code(&run(&[&args[..], &["--budget", "300"]].concat(), &dir)), 64);
}

#[test]
fn env_overrides_with_flag_precedence() {
    let (_t, dir) = fixtures();
    let args = ["emulate", "fx/identity2.json", "fx/shape21.json"];
    let out = bin().args(args).env("EMULCAP_BUDGET", "4").current_dir(&dir).output().unwrap();
    assert_eq!(code(&out), 66);
    let out = bin()
        .args(args)
        .args(["--budget", "64"])
        .env("EMULCAP_BUDGET", "4")
        .current_dir(&dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
}

fn write_random_code(dir: &Path, din: usize, dout: usize, seed: u64) {
    let mut rng = rng_from_seed(seed);
    let e = random_channel(&mut rng, din, dout, 3);
    let d = random_channel(&mut rng, dout, din, 3);
    ChannelFile::named(&e, "e", None).write(dir.join("e.json")).unwrap();
    ChannelFile::named(&d, "d", None).write(dir.join("d.json")).unwrap();
}

#[test]
fn bound_certificates() {
    let (_t, dir) = fixtures();
    let v = json(&run(&["bound", "fx/identity2.json", "fx/dephasing2.json"], &dir));
    assert!((v["theoretical_floor"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    assert!(v.get("certificate").is_none());

    run(&["emulate", "fx/identity2.json", "fx/shape21.json", "--out", "kit"], &dir);
    let args = ["bound", "fx/identity2.json", "fx/shape21.json", "--encoder", "kit/encoder.json", "--decoder", "kit/decoder.json"];
    let v = json(&run(&args, &dir));
    let cert = &v["certificate"];
    assert!(cert["gap_p1"].as_f64().unwrap().abs() <= 1e-6);
    assert!(cert["gap_pinf"].as_f64().unwrap().abs() <= 1e-6);

    write_random_code(&dir, 4, 2, 7);
    let args = ["bound", "fx/identity2.json", "fx/dephasing2.json", "--k", "2", "--encoder", "e.json", "--decoder", "d.json"];
    let v = json(&run(&args, &dir));
    assert!((v["theoretical_floor"].as_f64().unwrap() - 0.75).abs() < 1e-12);
    assert!(v["certificate"]["gap_pinf"].as_f64().unwrap() >= 0.75 - 1e-6);

    let args = ["bound", "fx/identity2.json", "fx/dephasing2.json", "--encoder", "e.json", "--decoder", "d.json"];
    assert_eq!(code(&run(&args, &dir)), 64);
}

#[test]
fn audit_reports() {
    let (_t, dir) = fixtures();
    let out = run(&["audit", "fx/identity2.json", "fx/shape21.json", "--samples", "30"], &dir);
    assert_eq!(code(&out), 0);
    let v = json(&out);
    assert_eq!(v["report"]["norm_ok"], true);
    assert_eq!(v["report"]["unitality_ok"], true);
    assert_eq!(v["report"]["multiplicativity_ok"], true);
    let scaling = v["scaling"].as_array().unwrap();
    assert_eq!(scaling.len(), 3);
    let deltas: Vec<f64> = scaling.iter().map(|r| r["delta_cb"].as_f64().unwrap()).collect();
    assert!(deltas[0] < deltas[1] && deltas[1] < deltas[2]);
    for r in scaling {
        assert_eq!(r["all_ok"], true);
        assert!(r["unitality_residual"].as_f64().unwrap() <= 1e-10);
    }

    write_random_code(&dir, 2, 2, 8);
    let args = ["audit", "fx/identity2.json", "fx/dephasing2.json", "--encoder", "e.json", "--decoder", "d.json", "--samples", "30"];
    let v = json(&run(&args, &dir));
    let rep = &v["report"];
    assert!(rep["delta_cb"].as_f64().unwrap() > 0.1);
    assert_eq!(rep["norm_ok"], true);
    assert_eq!(rep["multiplicativity_ok"], true);
}

#[test]
fn output_is_deterministic() {
    let (_t, dir) = fixtures();
    let args = ["--seed", "42", "audit", "fx/identity2.json", "fx/shape21.json", "--samples", "10"];
    let a = run(&args, &dir);
    let b = run(&args, &dir);
    assert_eq!(a.stdout, b.stdout);
    let args = ["--seed", "42", "analyze", "fx/shape21.json"];
    assert_eq!(run(&args, &dir).stdout, run(&args, &dir).stdout);
}
