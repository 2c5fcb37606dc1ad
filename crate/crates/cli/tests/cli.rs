use std::fs;
use std::process::{Command, Output};

fn cqed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cqed-phase")).args(args).output().expect("binary runs")
}

#[test]
fn fig4_csv_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let o = cqed(&["fig4", "--set", "n=1,3", "--set", "theta_points=7", "--quiet", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let lines: Vec<&str> = text.split('\n').collect();
    assert_eq!(lines[0], "n,theta,fidelity");
    assert_eq!(lines.len(), 1 + 14 + 1);
    let f: f64 = lines[1].strip_prefix("1,0,").unwrap().parse().unwrap();
    assert!(f > 0.99 && f < 1.0, "{f}");
    assert!(!text.contains('\r'));
}

#[test]
fn config_file_and_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "# two points\nn = 2\ntheta = 0, 3.14159\ndeviation = 0.9  # overridden below\n").unwrap();
    let o = cqed(&["fig4", "--config", cfg.to_str().unwrap(), "--set", "deviation=1", "--quiet"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "n,theta,fidelity\n2,0,1\n2,3.14159,1\n");
}

#[test]
fn bad_input_exits_2() {
    assert_eq!(cqed(&["fig4", "--set", "bogus=1"]).status.code(), Some(2));
    assert_eq!(cqed(&["fig4", "--set", "deviation=3"]).status.code(), Some(2));
    assert_eq!(cqed(&["fig4", "--config", "/nonexistent/sweep.cfg"]).status.code(), Some(2));
    assert_eq!(cqed(&["gate-check", "--set", "n=4"]).status.code(), Some(2));
    assert_eq!(cqed(&["fig6"]).status.code(), Some(2));
    let o = cqed(&["fig4", "--set", "n=1", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/dir/x.csv"));
}

#[test]
fn gate_check_passes() {
    let o = cqed(&["gate-check", "--set", "n=1,2", "--set", "draws=3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("max error"));
}

#[test]
fn fig5_single_point() {
    let o = cqed(&[
        "fig5",
        "--set",
        "preset=false",
        "--set",
        "targets=1",
        "--set",
        "b=10",
        "--set",
        "convergence_check=true",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("b,fidelity\n10,0.9"), "{out}");
    assert!(String::from_utf8_lossy(&o.stderr).contains("trace drift"));
}
