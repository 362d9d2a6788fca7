use std::path::PathBuf;
use std::process::{Command, Output};

fn gallery(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/gallery").join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blowuplab")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn simulate_is_byte_identical_for_a_fixed_seed() {
    let cfg = gallery("quadratic_drift");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--paths", "100", "--seed", "7", "--json"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let other = run(&["simulate", "--config", cfg.to_str().unwrap(), "--paths", "100", "--seed", "8", "--json"]);
    assert_ne!(a.stdout, other.stdout);
}

#[test]
fn classify_json_reports_explosion_for_quadratic_drift() {
    let cfg = gallery("quadratic_drift");
    let o = run(&["classify", "--config", cfg.to_str().unwrap(), "--paths", "200", "--json"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).expect("stdout is JSON");
    assert_eq!(v["final"], "almost_sure_explosion");
    assert_eq!(v["model_name"], "quadratic_drift");
    assert!(v["contradictions"].as_array().unwrap().is_empty());
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn usage_errors_exit_with_one() {
    assert_eq!(code(&run(&["bogus"])), 1);
    assert_eq!(code(&run(&["classify"])), 1);
    assert_eq!(code(&run(&["gallery", "--only", "no_such_model"])), 1);
    let cfg = gallery("merton");
    let o = Command::new(env!("CARGO_BIN_EXE_blowuplab"))
        .args(["lyapunov", "--config", cfg.to_str().unwrap()])
        .env("BLOWUPLAB_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn bad_configs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&run(&["lyapunov", "--config", missing.to_str().unwrap()])), 2);

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "name = \"x\"\ndim = 1\nspeed = 3\n").unwrap();
    let o = run(&["lyapunov", "--config", bad.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("speed"));

    let cfg = gallery("quadratic_drift");
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--paths", "0"])), 2);
}

#[test]
fn engine_refusals_exit_with_three() {
    let cfg = gallery("planar_cubic_noise");
    let o = run(&["feller", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert!(o.stdout.is_empty());
}

#[test]
fn manifest_lists_every_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let cfg = gallery("quadratic_drift");
    let o = run(&[
        "simulate", "--config", cfg.to_str().unwrap(), "--paths", "20", "--seed", "3", "--out", out.to_str().unwrap(), "--csv",
        "--csv-paths", "2",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"][1], "simulate");
    let outputs: Vec<&str> = manifest["outputs"].as_array().unwrap().iter().map(|v| v.as_str().unwrap()).collect();
    assert_eq!(outputs.len(), 2);
    for p in &outputs {
        assert!(std::path::Path::new(p).is_file(), "{p} missing");
    }
    let csv = std::fs::read_to_string(out.join("paths.csv")).unwrap();
    assert!(csv.starts_with("path,t,x1\n"));
    assert!(csv.lines().skip(1).all(|l| l.starts_with("0,") || l.starts_with("1,")));
}

#[test]
fn gallery_subset_matches_expected_labels() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["gallery", "--only", "merton", "--only", "sublinear_drift", "--json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r["matches"] == true));
    assert!(dir.path().join("merton.json").is_file());
    assert!(dir.path().join("sublinear_drift.json").is_file());
}

#[test]
fn feller_and_lyapunov_write_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = gallery("quadratic_drift");
    let f = dir.path().join("feller");
    let o = run(&["feller", "--config", cfg.to_str().unwrap(), "--out", f.to_str().unwrap(), "--csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(f.join("outer_integrand.csv")).unwrap();
    assert!(csv.starts_with("side,y,log_w\n"));
    let rows: Vec<Vec<f64>> =
        csv.lines().skip(1).map(|l| l.split(',').skip(1).map(|v| v.parse().unwrap()).collect()).collect();
    assert!(rows.len() > 20);
    assert!(rows.iter().all(|r| r[1].is_finite()));

    let l = dir.path().join("lyapunov");
    let o = run(&["lyapunov", "--config", cfg.to_str().unwrap(), "--out", l.to_str().unwrap(), "--csv"]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(l.join("shells.csv")).unwrap();
    assert!(csv.starts_with("condition,candidate,radius,sup,inf\n"));
    assert!(csv.lines().count() > 1);
    for line in csv.lines().skip(1) {
        let v: Vec<f64> = line.split(',').skip(2).map(|x| x.parse().unwrap()).collect();
        assert!(v[1] >= v[2], "{line}");
    }
}

#[test]
fn csv_requires_an_output_directory() {
    let cfg = gallery("quadratic_drift");
    assert_eq!(code(&run(&["simulate", "--config", cfg.to_str().unwrap(), "--csv"])), 1);
}
