use std::fs;

use aphe::harness::{
    self, create_output, read_field_dump, write_cn_report, write_field_dump, write_table, Experiment,
    ExperimentSpec, Status, TABLE_HEADER,
};
use aphe::schemes::SchemeKind;

fn small(experiment: Experiment, text: &str) -> ExperimentSpec {
    let mut spec = ExperimentSpec::defaults(experiment);
    spec.apply_config(text).unwrap();
    spec
}

#[test]
fn spatial_sweep_tags_every_cell() {
    let spec = small(
        Experiment::ConvergeSpace,
        "scheme = P, E_AP\neps = 1, 1e-6\nh = 0.25, 0.125\ntau = 1e-4\nt_end = 2e-4",
    );
    let rows = harness::converge_space(&spec).unwrap();
    assert_eq!(rows.len(), 8);
    for r in &rows {
        assert_eq!(r.status, Status::Ok, "{}", r.csv());
        assert!(r.abs_l2.unwrap() > 0.0);
    }
    let fine = |scheme, eps| {
        rows.iter()
            .find(|r| r.h == 0.125 && r.scheme == scheme && r.eps == eps)
            .unwrap()
    };
    for eps in [1.0, 1e-6] {
        assert!(fine(SchemeKind::EAp, eps).observed_order.unwrap() > 2.5);
    }
    assert!(fine(SchemeKind::P, 1.0).observed_order.unwrap() > 2.5);
    assert!(fine(SchemeKind::P, 1e-6).abs_l2.unwrap() > 50.0 * fine(SchemeKind::EAp, 1e-6).abs_l2.unwrap());

    let mut csv = Vec::new();
    write_table(&rows, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TABLE_HEADER));
    assert_eq!(lines.count(), rows.len());
}

#[test]
fn temporal_sweep_reports_reference_errors() {
    let spec = small(
        Experiment::ConvergeTime,
        "scheme = E_AP\neps = 1\ngrid = 8x8\ntau = 0.02, 0.01\nt_end = 0.04\nreference_tau = 0.0025",
    );
    let rows = harness::converge_time(&spec).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.temporal_l2.is_some()));
    let order = rows[1].temporal_order.unwrap();
    assert!((0.7..1.3).contains(&order), "temporal order {order}");
}

#[test]
fn field_dump_round_trips_through_a_file() {
    let spec = small(Experiment::Solve, "grid = 6x4\ntau = 0.01\nt_end = 0.03");
    let report = harness::solve(&spec).unwrap();
    let state = &report.diagnostics.final_state;
    assert_eq!(report.diagnostics.records.len(), 4);
    assert!(report.error.unwrap().0 < 1e-1);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/field.txt");
    write_field_dump(&report.grid, state.t, &state.u, create_output(&path).unwrap()).unwrap();
    let (nx, ny, t, values) = read_field_dump(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!((nx, ny), (7, 5));
    assert_eq!(t, state.t);
    assert_eq!(values, state.u);
}

#[test]
fn crank_nicolson_report_marks_the_failing_step() {
    let spec = small(
        Experiment::CnFailure,
        "grid = 20x20\nscheme = CN_AP, E_AP\ntau = 0.1\nsteps = 4",
    );
    let outcomes = harness::cn_failure(&spec).unwrap();
    let cn = outcomes.iter().find(|o| o.scheme == SchemeKind::CnAp).unwrap();
    let e = outcomes.iter().find(|o| o.scheme == SchemeKind::EAp).unwrap();
    assert!(cn.is_negative_state());
    assert!(e.failure.is_none());
    assert_eq!(e.steps_completed(), 4);
    assert!(e.minima.iter().all(|m| m.2 > 0.0));

    let mut out = Vec::new();
    write_cn_report(&outcomes, &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert_eq!(text.matches("NEGATIVE_STATE").count(), 1);
}

#[test]
fn rejects_inadmissible_specs() {
    let mut spec = ExperimentSpec::defaults(Experiment::Solve);
    assert!(spec.set("grid", "5x4").is_ok());
    assert!(spec.validate().is_err());
    assert!(spec.set("bogus", "1").is_err());
    assert!(spec.set("eps", "abc").is_err());
    spec.set("grid", "4x4").unwrap();
    spec.set("max_nodes", "10").unwrap();
    assert!(spec.validate().is_err());
    assert!(ExperimentSpec::from_config("tau = 0.1", None).is_err());
    let parsed = ExperimentSpec::from_config("experiment = gaussian\n# comment\ntm = 2", None).unwrap();
    assert_eq!(parsed.experiment, Experiment::Gaussian);
    assert_eq!(parsed.tm, 2.0);
}
