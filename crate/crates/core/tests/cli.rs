use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use spdelab::output::sha256_hex;

const BIN: &str = env!("CARGO_BIN_EXE_spdelab");

const SIMULATE: &str = r#"
n = 16
T = 0.05
dt = 0.01
master_seed = 3
model = "ch_ac_homotopy"
eps = 0.2
sigma_schedule = { kind = "power", amplitude = 0.0, exponent = 1.0 }
initial = { kind = "cosines", amplitudes = [0.3, 0.1] }
snapshots = [0.0, 0.05]
"#;

const STUDY: &str = r#"
n = 16
T = 0.05
dt = 0.01
master_seed = 5
model = "ch_ac_homotopy"
eps_grid = [0.2, 0.1]
samples = 2
sigma_schedule = { kind = "power", amplitude = 0.3, exponent = 1.0 }
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SPDELAB_WORKERS")
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.toml");
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8(out.stderr.clone()).unwrap();
    let line = text.lines().last().expect("no stderr");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("stderr is not one JSON line: {text:?} ({e})"))
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn run_in(text: &str, cmd: &str) -> (tempfile::TempDir, Output) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), text);
    let out_dir = tmp.path().join("out");
    let out = run(&[cmd, "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    (tmp, out)
}

#[test]
fn check_passes_and_detects_corruption() {
    let ok = run(&["check"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8(ok.stdout).unwrap();
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 5);

    let bad = run(&["check", "--corrupt-lambda-sign"]);
    assert_eq!(bad.status.code(), Some(1));
    let err = stderr_json(&bad);
    assert!(err["message"].as_str().unwrap().contains("coercivity"));
}

#[test]
fn noiseless_simulation_is_byte_identical() {
    let (a_tmp, a) = run_in(SIMULATE, "simulate");
    let (b_tmp, b) = run_in(SIMULATE, "simulate");
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    let norms = |d: &Path| std::fs::read(d.join("out/norms.ndjson")).unwrap();
    assert_eq!(sha256_hex(&norms(a_tmp.path())), sha256_hex(&norms(b_tmp.path())));
    assert_eq!(norms(a_tmp.path()).iter().filter(|&&c| c == b'\n').count(), 6);
    let out = a_tmp.path().join("out");
    for stem in ["u_eps", "u", "z", "error"] {
        assert!(out.join(format!("{stem}_000000.bin")).exists());
        assert!(out.join(format!("{stem}_000005.bin")).exists());
    }
}

#[test]
fn manifest_checksums_match_files() {
    let (tmp, out) = run_in(SIMULATE, "simulate");
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("out");
    let m = manifest(&dir);
    assert_eq!(m["complete"], Value::Bool(true));
    assert_eq!(m["command"], "simulate");
    let files = m["files"].as_array().unwrap();
    assert!(files.len() >= 10);
    for f in files {
        let bytes = std::fs::read(dir.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(f["sha256"].as_str().unwrap(), sha256_hex(&bytes));
    }
    assert!(!dir.join(".manifest.json.tmp").exists());
}

#[test]
fn usage_errors_exit_two_with_json() {
    let cases = [
        SIMULATE.replace("model = \"ch_ac_homotopy\"", ""),
        format!("{SIMULATE}\nbogus = 1\n"),
        SIMULATE.replace("snapshots = [0.0, 0.05]", "snapshots = [0.5]"),
        SIMULATE.replace("eps = 0.2", "eps = 0.9"),
    ];
    for text in cases {
        let (_tmp, out) = run_in(&text, "simulate");
        assert_eq!(out.status.code(), Some(2), "{text}");
        let err = stderr_json(&out);
        assert!(err["error"].is_string() && err["message"].is_string());
        assert_eq!(String::from_utf8(out.stderr).unwrap().lines().count(), 1);
    }
    let out = run(&["simulate", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn non_empty_output_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIMULATE);
    let dir = tmp.path().join("out");
    std::fs::create_dir(&dir).unwrap();
    std::fs::write(dir.join("stale.txt"), "x").unwrap();
    let d = dir.to_str().unwrap();
    let refused = run(&["simulate", "--config", &cfg, "--out", d]);
    assert_eq!(refused.status.code(), Some(2));
    let forced = run(&["simulate", "--config", &cfg, "--out", d, "--force"]);
    assert_eq!(forced.status.code(), Some(0));
}

#[test]
fn workers_precedence_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SIMULATE);
    let a = tmp.path().join("a");
    let out = Command::new(BIN)
        .args(["simulate", "--config", &cfg, "--out", a.to_str().unwrap(), "--workers", "2"])
        .env("SPDELAB_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&a)["workers"]["count"], 2);
    assert_eq!(manifest(&a)["workers"]["source"], "flag");
    let b = tmp.path().join("b");
    let out = Command::new(BIN)
        .args(["simulate", "--config", &cfg, "--out", b.to_str().unwrap()])
        .env("SPDELAB_WORKERS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&b)["workers"]["count"], 3);
    assert_eq!(manifest(&b)["workers"]["source"], "env");
}

#[test]
fn convergence_study_writes_records() {
    let (tmp, out) = run_in(STUDY, "study");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir = tmp.path().join("out");
    let records = std::fs::read_to_string(dir.join("records.ndjson")).unwrap();
    assert_eq!(records.lines().count(), 4);
    for l in records.lines() {
        let _: Value = serde_json::from_str(l).unwrap();
    }
    assert!(dir.join("summary.csv").exists());
}

#[test]
fn regimes_study_writes_one_block_per_schedule() {
    let (tmp, out) = run_in(&format!("{STUDY}\nmode = \"regimes\"\nc_zero = 0.0\n"), "study");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(tmp.path().join("out/regimes.ndjson")).unwrap();
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn theorem_study_derives_k_from_pilot() {
    let (tmp, out) = run_in(&format!("{STUDY}\nmode = \"theorem\"\n"), "study");
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&tmp.path().join("out"));
    assert_eq!(m["derived"]["k_from_pilot"], Value::Bool(true));
    assert!(m["derived"]["big_k"].as_f64().unwrap() > 0.0);
}

#[test]
fn failing_study_leaves_incomplete_manifest() {
    let text = STUDY.replace(
        "{ kind = \"power\", amplitude = 0.3, exponent = 1.0 }",
        "{ kind = \"constant\", amplitude = 0.3 }",
    );
    let (tmp, out) = run_in(&text, "study");
    assert_eq!(out.status.code(), Some(2));
    let m = manifest(&tmp.path().join("out"));
    assert_eq!(m["complete"], Value::Bool(false));
    assert!(m["error"].as_str().unwrap().contains("c_zero"));
}

fn renorm(text: &str) -> (i32, String) {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), text);
    let out = run(&["renorm", "--config", &cfg]);
    (out.status.code().unwrap(), String::from_utf8(out.stdout).unwrap())
}

fn table_values(stdout: &str) -> Vec<(f64, String, f64)> {
    stdout
        .lines()
        .skip_while(|l| !l.starts_with("# C_eps"))
        .skip(2)
        .take_while(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            (f[0].parse().unwrap(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect()
}

#[test]
fn renorm_table_rows() {
    let (code, stdout) = renorm(
        "model = \"ch_ac_homotopy\"\neps = 0.5\ncutoffs = [1, 2, 4]\n\
         sigma_schedule = { kind = \"constant\", amplitude = 1.0 }\n",
    );
    assert_eq!(code, 0);
    let rows = table_values(&stdout);
    assert_eq!(rows[0].1, "1");
    assert!((rows[0].2 - 8.0 / 3.0).abs() < 1e-9);
    assert!(rows[0].2 < rows[1].2 && rows[1].2 < rows[2].2);
    assert!(stdout.contains("divergent: true"));

    let (code, stdout) = renorm(
        "model = \"ch_ac_homotopy\"\neps_grid = [0.1, 0.01]\n\
         sigma_schedule = { kind = \"power\", amplitude = 0.0, exponent = 1.0 }\n",
    );
    assert_eq!(code, 0);
    assert!(table_values(&stdout).iter().all(|r| r.2 == 0.0));
}

#[test]
fn renorm_resolves_bilaplacian_limit() {
    let (code, stdout) = renorm(
        "model = \"ac_bilaplacian\"\neps_grid = [0.01, 0.001]\ncutoffs = [4]\n\
         sigma_schedule = { kind = \"log_inverse_sqrt\", amplitude = 1.0 }\n",
    );
    assert_eq!(code, 0);
    let c0: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("c_zero "))
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    // σ² log(1/ε) = 1 and Σ 1/(2λ) ~ π log(1/ε)
    assert!((c0 - std::f64::consts::PI).abs() < 0.05, "{c0}");
}
