use std::fs;
use std::process::{Command, Output};

fn aphe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_aphe")).args(args).output().unwrap()
}

#[test]
fn converge_space_prints_a_csv_table() {
    let out = aphe(&[
        "converge-space", "--scheme", "E_AP", "--eps", "1", "--h", "0.25,0.125", "--tau", "1e-4", "--tend", "2e-4",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "experiment,scheme,eps,h,tau,t_end,abs_l2,rel_l2,observed_order,status");
    assert_eq!(lines.len(), 3);
    assert!(lines[1..].iter().all(|l| l.starts_with("converge-space,E_AP,") && l.ends_with(",OK")));
}

#[test]
fn solve_writes_dump_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run/field.txt");
    let out = aphe(&[
        "solve", "--grid", "4x4", "--tau", "0.01", "--tend", "0.02", "--out", path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let dump = fs::read_to_string(&path).unwrap();
    assert!(dump.starts_with("Nx 5\nNy 5\nt "));
    assert_eq!(dump.lines().count(), 3 + 5);
    let diag = fs::read_to_string(dir.path().join("run/field_diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("abs_l2="));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "grid = 4x4\ntau = 0.5\nt_end = 0.02\n").unwrap();
    let out = aphe(&["solve", "--config", cfg.to_str().unwrap(), "--tau", "0.01"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("Nx 5\n"));
}

#[test]
fn invalid_input_exits_with_code_two() {
    for args in [
        &["solve", "--grid", "3x4"][..],
        &["solve", "--set", "nonsense=1"],
        &["solve", "--set", "novalue"],
        &["solve", "--tau", "0.03", "--tend", "0.1"],
    ] {
        let out = aphe(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: "));
    }
    assert_eq!(aphe(&["no-such-command"]).status.code(), Some(2));
}
