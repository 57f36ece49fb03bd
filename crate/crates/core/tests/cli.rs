use std::process::{Command, Output};

use metallic_sigma::report::{identity_ids, OUTPUT_DIR_ENV};
use metallic_sigma::ResidualReport;

fn verify(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_verify"));
    cmd.env_remove(OUTPUT_DIR_ENV).args(args);
    cmd
}

fn run(args: &[&str]) -> Output {
    verify(args).output().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("--preset"));
}

#[test]
fn json_to_stdout_parses() {
    let out = run(&["--preset", "bronze", "--dims", "1,2", "--samples", "5"]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = ResidualReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert!(report.all_pass);
    assert_eq!(report.config.samples, 5);
    assert!(report.wall_time_seconds.is_none());
    assert_eq!(report.record("eq17").unwrap().residuals.len(), 5);
}

#[test]
fn csv_has_one_row_per_residual() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.csv");
    let out = run(&[
        "--p",
        "2",
        "--q",
        "3",
        "--samples",
        "4",
        "--format",
        "csv",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["identity", "point_index", "residual", "tolerance", "pass"]
    );
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let ids: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    // Named-structure literals do not apply to (2, 3).
    assert_eq!(ids.len(), identity_ids().len() - 1);
    assert!(rows.iter().all(|r| &r[4] == "true"));
    assert_eq!(rows.iter().filter(|r| &r[0] == "eq9").count(), 4);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = verify(&["--preset", "copper", "--samples", "2", "--timing"])
        .env(OUTPUT_DIR_ENV, dir.path())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    assert!(ResidualReport::from_json(&text)
        .unwrap()
        .wall_time_seconds
        .is_some());
}

#[test]
fn hyperplane_sphere_reports_degeneracy_without_failing() {
    let out = run(&[
        "--preset",
        "nickel",
        "--surface",
        "hyperplane-sphere",
        "--sub-radius",
        "0.5",
        "--offset",
        "-1.5",
        "--dims",
        "1,1",
        "--samples",
        "6",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report = ResidualReport::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    let eq26 = report.record("eq26").unwrap();
    assert!(eq26.pass);
    assert_eq!(eq26.degeneracy.as_ref().unwrap().flagged_points, 6);
    assert!(!report.record("eq41_45").unwrap().applicable);
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["--p", "1"][..],
        &["--preset", "golden", "--p", "2"],
        &["--preset", "golden", "--dims", "0,1"],
        &["--preset", "golden", "--lambda", "2"],
        &["--preset", "golden", "--epsilon", "+1,+1"],
        &["--preset", "golden", "--tolerance", "eq3"],
        &["--preset", "golden", "--tolerance", "nope=1e-3"],
        &[
            "--preset",
            "golden",
            "--surface",
            "hyperplane-sphere",
            "--dims",
            "1,0",
        ],
        &["--preset", "golden", "--surface", "torus"],
    ] {
        let out = run(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}
