use std::fs;
use std::process::{Command, Output};

fn arzftl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_arzftl")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn run_writes_report_and_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = arzftl(&["run", "--case", "test4", "-n", "200", "--no-timing", "--out-dir", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("test_id,N,t,l1_rho,l1_v,l1_w,d1,runtime_ms"));
    assert!(lines.next().unwrap().starts_with("test4,200,1,"));
    for (file, header) in [
        ("rho.csv", "x_left,x_right,value"),
        ("v.csv", "x_left,x_right,value"),
        ("w.csv", "x_left,x_right,value"),
        ("exact.csv", "x,rho,v,w"),
        ("trajectory.csv", "t,i,x,w,y"),
    ] {
        let body = fs::read_to_string(out.join(file)).unwrap();
        assert_eq!(body.lines().next(), Some(header), "{file}");
    }
    let rho = fs::read_to_string(out.join("rho.csv")).unwrap();
    assert_eq!(rho.lines().count(), 1 + 200 + 2);
}

#[test]
fn run_by_level() {
    let o = arzftl(&["run", "--case", "test2", "--level", "5"]);
    assert!(o.status.success());
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("test2,32,"));
}

#[test]
fn sweep_is_reproducible_and_audited() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let audit = dir.path().join("audit.csv");
    let o = arzftl(&[
        "sweep", "--case", "test4", "--no-timing", "-o", a.to_str().unwrap(), "--audit", audit.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let seq = arzftl(&["--sequential", "sweep", "--case", "test4", "--no-timing"]);
    assert_eq!(fs::read_to_string(&a).unwrap(), stdout(&seq));
    let audit = fs::read_to_string(audit).unwrap();
    let header: Vec<&str> = audit.lines().next().unwrap().split(',').collect();
    for col in ["config_hash", "window_lo", "window_hi", "gauge_offset", "quad_order", "markers_constant"] {
        assert!(header.contains(&col), "{col}");
    }
    assert_eq!(audit.lines().count(), 5);
}

#[test]
fn exact_samples_the_fan() {
    let o = arzftl(&["exact", "--case", "test1", "--points", "5"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0][1], 0.9);
    assert_eq!(rows[4][1], 0.1);
    assert!(rows.iter().all(|r| (r[2] - 1.0).abs() < 1e-12));
}

#[test]
fn residual_and_check_succeed() {
    let o = arzftl(&["residual"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 4);
    let o = arzftl(&["check", "--case", "test3", "-n", "100"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "test3 N=100: ok");
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[[case]]\nid = \"x\"\nmystery = 3\n").unwrap();
    assert_eq!(arzftl(&["--config", bad.to_str().unwrap(), "sweep"]).status.code(), Some(2));
    assert_eq!(arzftl(&["run", "--case", "nope", "-n", "10"]).status.code(), Some(2));
    assert_eq!(arzftl(&["run", "--case", "test1"]).status.code(), Some(2));
    assert_eq!(arzftl(&["bogus"]).status.code(), Some(2));

    let vacuum = dir.path().join("vacuum.toml");
    let table = include_str!("../../core/configs/table1.toml");
    fs::write(&vacuum, table.replace("right = { rho = 0.1, v = 1.0 }", "right = { rho = 0.0, v = 1.0 }")).unwrap();
    let o = arzftl(&["--config", vacuum.to_str().unwrap(), "run", "--case", "test1", "-n", "100"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("initial data"));
}
