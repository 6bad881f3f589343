use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lanewave::cli::config::{numeric_keys, parse_config, Format};
use lanewave::cli::output::FIELD_HEADER;

fn lanewave(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lanewave")).current_dir(dir).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn macro_2d_writes_field_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanewave(dir.path(), &["run-macro-2d", "--out", "res"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("res/field_t0.100000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(FIELD_HEADER));
    assert_eq!(lines.count(), 6400);
    let report = fs::read_to_string(dir.path().join("res/report.txt")).unwrap();
    assert!(report.contains("scenario = micro-macro"));
    assert!(report.contains("floor_events = 0"));
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.cfg"), "scenario = overtake-right\nt_final = 0.02\nformats = csv, pgm\n").unwrap();
    for out in ["a", "b"] {
        let o = lanewave(dir.path(), &["run-macro-2d", "--config", "run.cfg", "--out", out]);
        assert_eq!(o.status.code(), Some(0));
    }
    for name in ["field_t0.020000.csv", "field_t0.020000.pgm", "report.txt"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
}

#[test]
fn riemann_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanewave(dir.path(), &["riemann", "--set", "wl_rho=0.3", "--set", "wr_rho=0.3"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("identity (degenerate contact)"));
}

#[test]
fn riemann_shock() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanewave(dir.path(), &["riemann", "--set", "wl_u=0.8", "--set", "wr_u=0.3", "--set", "wr_rho=1.0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("wave:"));
}

#[test]
fn eigen_prints_spectrum() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanewave(dir.path(), &["eigen", "--set", "wl_rho=0.5", "--set", "wl_u=0.8", "--set", "wl_v=0"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("eigenvalues: -5.000000000000e-1 3.000000000000e-1 8.000000000000e-1"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(lanewave(dir.path(), &["no-such-command"]).status.code(), Some(2));
    let o = lanewave(dir.path(), &["run-macro-2d", "--set", "cfl=1.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("cfl out of (0,1)"));
    fs::write(dir.path().join("bad.cfg"), "nx = 10\nspeed = 3\n").unwrap();
    let o = lanewave(dir.path(), &["eigen", "--config", "bad.cfg"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2: key 'speed'"));
    assert_eq!(lanewave(dir.path(), &["eigen", "--config", "missing.cfg"]).status.code(), Some(2));
    assert_eq!(lanewave(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let o = lanewave(dir.path(), &["run-macro-1d", "--set", "scenario=arz1d-vs-ftl1d", "--out", "blocker/sub"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("blocker"));
}

#[test]
fn micro_and_compare_commands() {
    let dir = tempfile::tempdir().unwrap();
    let o = lanewave(dir.path(), &["run-micro", "--out", "m"]);
    assert_eq!(o.status.code(), Some(0));
    let fleet = fs::read_to_string(dir.path().join("m/fleet.csv")).unwrap();
    assert_eq!(fleet.lines().count(), 1 + 2 * 161);
    let o = lanewave(dir.path(), &["compare", "--set", "scenario=arz1d-vs-ftl1d", "--out", "c"]);
    assert_eq!(o.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("c/report.txt")).unwrap();
    assert!(report.contains("l1_density"));
}

#[test]
fn trajectory_comparison_against_reference() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("t,id,x,y,u,v\n");
    for k in 0..=10 {
        let t = k as f64 * 0.01;
        text.push_str(&format!("{t},0,{},0.003,0.5,0\n", 0.1 + 0.5 * t));
        text.push_str(&format!("{t},1,{},0.003,0.5,0\n", 0.2 + 0.5 * t));
    }
    fs::write(dir.path().join("ref.csv"), text).unwrap();
    fs::write(dir.path().join("run.cfg"), "reference = ref.csv\nmicro_dt = 0.001\n").unwrap();
    let o = lanewave(dir.path(), &["compare", "--config", "run.cfg", "--out", "t"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let errors = fs::read_to_string(dir.path().join("t/trajectory_errors.csv")).unwrap();
    assert!(errors.starts_with("t,id,error\n"));
    assert!(errors.lines().count() > 1);
}

#[test]
fn config_defaults_and_schema() {
    let c = parse_config("").unwrap();
    assert_eq!(c.spec.scheme.cfl, 0.45);
    assert_eq!(c.spec.params.rho_floor, 1e-8);
    assert_eq!(c.formats, vec![Format::Csv]);
    assert_eq!(parse_config("cfl = 0.9").unwrap().spec.scheme.cfl, 0.9);
    for key in [
        "u_ref", "v_ref", "gamma1", "gamma2", "rho_floor", "rho_max", "nx", "ny", "ax", "bx", "ay", "by", "t_final",
        "car_length", "car_width", "micro_dt", "cfl",
    ] {
        assert!(numeric_keys().any(|k| k == key), "{key} not reachable");
    }
}
