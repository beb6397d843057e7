use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_golden-anosov")).args(args).output().expect("binary runs")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn column(rows: &[csv::StringRecord], i: usize) -> Vec<f64> {
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

#[test]
fn zero_stages_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = bin(&["build-schedule", "--stages", "0", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!out.exists());
}

#[test]
fn bad_flags_and_suites_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    assert_eq!(bin(&["verify", "tilings", "--out", out.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(bin(&["build-schedule", "--profile", "lax", "--out", out.to_str().unwrap()]).status.code(), Some(4));
    assert_eq!(
        bin(&["verify", "tiling", "--precision", "64", "--out", out.to_str().unwrap()]).status.code(),
        Some(4)
    );
    assert_eq!(bin(&["--help"]).status.code(), Some(0));
}

#[test]
fn strict_single_stage_builds_with_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("strict.json");
    let o = bin(&["build-schedule", "--profile", "strict", "--stages", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = golden_anosov::schedule::Schedule::from_json(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(s.num_stages(), 1);
    assert!(s.certificates.iter().all(|c| c.pass));
    assert!(dir.path().join("strict.json.manifest.json").exists());
}

#[test]
fn theta_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.json");
    let o = bin(&["build-schedule", "--theta", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let o = bin(&["build-schedule", "--profile", "strict", "--stages", "1", "--theta", "3/2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn exports_have_their_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("toy.json");
    assert!(bin(&["build-schedule", "--out", sched.to_str().unwrap()]).status.success());
    let s = sched.to_str().unwrap();

    let curve = dir.path().join("curve.csv");
    assert!(bin(&["export", "curve", "--schedule", s, "--out", curve.to_str().unwrap()]).status.success());
    let r = rows(&curve);
    assert_eq!(r.len(), 2000);
    let h = column(&r, 1);
    assert!(h.windows(2).all(|w| w[0] < w[1]));

    let orbit = dir.path().join("orbit.csv");
    let args = ["export", "orbit", "--schedule", s, "--x", "0.3", "--y", "0.1", "--steps", "100"];
    assert!(bin(&[&args[..], &["--out", orbit.to_str().unwrap()]].concat()).status.success());
    let r = rows(&orbit);
    assert_eq!(r.len(), 101);
    assert!(r.iter().all(|row| &row[5] == "true"));

    let density = dir.path().join("density.csv");
    assert!(bin(&["export", "density", "--schedule", s, "--out", density.to_str().unwrap()]).status.success());
    let masses = column(&rows(&density), 3);
    assert!(masses.iter().all(|m| *m >= 0.0));
    assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn exact_orbits_are_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.csv");
    let o = bin(&["export", "orbit", "--stages", "1", "--backend", "exact", "--steps", "500", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}
