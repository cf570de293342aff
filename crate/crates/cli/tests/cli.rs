use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonlocal-bvp"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("NONLOCAL_BVP_LOG", "quiet")
        .output()
        .expect("binary runs")
}

fn config(name: &str) -> String {
    configs().join(name).to_string_lossy().into_owned()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

#[test]
fn oracle_reports_root_at_two_pi_plus_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["oracle", "--example", "2", "--c0", "critical", "--lambda", "7.2831853"],
    );
    assert!(out.status.success());
    let v = json(&out);
    assert!(v["det"].as_f64().unwrap().abs() <= 1e-9);
    assert!(dir.path().join("oracle.json").exists());
}

#[test]
fn oracle_example1_trichotomy() {
    let dir = tempfile::tempdir().unwrap();
    let star = (2.0f64 + 3f64.sqrt()).ln().to_string();
    let v = json(&run(
        dir.path(),
        &["oracle", "--example", "1", "--lambda", &star, "--b-inner", "0"],
    ));
    assert_eq!(v["regime"], "InfinitelyMany");
    let v = json(&run(dir.path(), &["oracle", "--example", "1", "--lambda", &star]));
    assert_eq!(v["regime"], "NoSolution");
}

#[test]
fn capacity_of_unit_annulus() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["capacity", "--config", &config("annulus12.toml")]);
    assert!(out.status.success());
    let v = json(&out);
    let fem = v["fem_value"].as_f64().unwrap();
    assert!((fem - 9.06472).abs() / 9.06472 <= 0.01);
    assert!(v["relative_error"].as_f64().unwrap() <= 0.01);
}

#[test]
fn classify_example2_at_six_is_unique() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        dir.path(),
        &["classify", "--config", &config("ex2.toml"), "--lambda", "6.0"],
    );
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["classification"], "Unique");
    assert_eq!(v["B"].as_array().unwrap().len(), 2);
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert!(keys.iter().any(|k| *k == "C_psi_det"));
}

#[test]
fn solve_writes_field_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["solve", "--config", &config("multihole.toml")]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("node,x,y,value"));
    assert_eq!(lines.next().unwrap().split(',').count(), 4);
    assert!(dir.path().join("report.json").exists());
}

#[test]
fn sweep_is_deterministic_and_thread_count_independent() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let args = |jobs: &'static str| ["sweep", "--config", "", "--steps", "60", "--jobs", jobs];
    let cfg = config("ex2.toml");
    for (dir, jobs) in [(&a, "1"), (&b, "1"), (&c, "3")] {
        let mut v: Vec<&str> = args(jobs).to_vec();
        v[2] = &cfg;
        let out = run(dir.path(), &v);
        assert!(out.status.success());
    }
    for name in ["sweep.csv", "sweep.json", "roots.csv"] {
        let x = fs::read(a.path().join(name)).unwrap();
        assert_eq!(x, fs::read(b.path().join(name)).unwrap(), "{name}");
        assert_eq!(x, fs::read(c.path().join(name)).unwrap(), "{name}");
    }
    let roots = fs::read_to_string(a.path().join("roots.csv")).unwrap();
    assert_eq!(roots.lines().count(), 4);
}

#[test]
fn config_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("ex2.toml"))
        .unwrap()
        .replace("\"C0 * exp(-r) * sin(r) / r\"", "\"C0 * exp(-r\"");
    let path = dir.path().join("bad.toml");
    fs::write(&path, &text).unwrap();
    let line = text.lines().position(|l| l.starts_with("g = ")).unwrap() + 1;
    let out = run(dir.path(), &["classify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(&format!("bad.toml:{line}")), "{stderr}");
}

#[test]
fn numeric_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(configs().join("annulus12.toml"))
        .unwrap()
        .replace("h = 1", "h = \"sqrt(1.5 - r)\"");
    let path = dir.path().join("domain.toml");
    fs::write(&path, text).unwrap();
    let out = run(dir.path(), &["classify", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn verify_subset_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["verify", "--criterion", "3", "--criterion", "10"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 2);
    assert!(dir.path().join("verify.json").exists());
}
