//! End-to-end tests of the freejet binary: exit codes, file outputs,
//! reproducibility, and the config-error listing.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freejet"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Straight channel, uniform inflow, desk-scale grid and probe radii.
const STRAIGHT: &str = r#"
[geometry]
preset = "straight"
height = 1.0

[profile]
preset = "constant"
value = 1.0
height = 1.0

[grid]
h = 0.0625
l = 3.0

[diagnostics]
radii_cells = [2, 4, 8]
"#;

fn run_in(dir: &Path, config: &Path, args: &[&str]) -> Output {
    bin()
        .arg("--config")
        .arg(config)
        .args(args)
        .env("FREEJET_OUT_DIR", dir.join("out"))
        .output()
        .expect("binary runs")
}

fn report(dir: &Path) -> String {
    std::fs::read_to_string(dir.join("out/report.txt")).expect("report written")
}

fn report_value<'a>(report: &'a str, key: &str) -> Option<&'a str> {
    report
        .lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
}

#[test]
fn profiles_emits_identity_tables_on_uniform_inflow() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", STRAIGHT);
    let out = run_in(tmp.path(), &cfg, &["profiles"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // chi(s) = s when the fit speed defaults to the base speed (p_diff = 0).
    let table = std::fs::read_to_string(tmp.path().join("out/downstream.txt")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("s chi u1"));
    for line in lines {
        let v: Vec<f64> = line.split(' ').map(|t| t.parse().unwrap()).collect();
        assert!((v[1] - v[0]).abs() <= 1e-12, "chi({}) = {}", v[0], v[1]);
        assert!((v[2] - 1.0).abs() <= 1e-12, "u1 = {}", v[2]);
    }

    // h(lambda0) = H heads the thickness table.
    let table = std::fs::read_to_string(tmp.path().join("out/hlambda.txt")).unwrap();
    let first: Vec<f64> =
        table.lines().nth(1).unwrap().split(' ').map(|t| t.parse().unwrap()).collect();
    assert!((first[0] - 1.0).abs() <= 1e-12 && (first[1] - 1.0).abs() <= 1e-9);
    assert_eq!(report_value(&report(tmp.path()), "status"), Some("pass"));
}

#[test]
fn solve_at_the_base_speed_keeps_the_interface_at_the_lip_height() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", STRAIGHT);
    let out = run_in(tmp.path(), &cfg, &["--lambda", "1.0", "solve"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let curve = std::fs::read_to_string(tmp.path().join("out/curve.txt")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("x k grad"));
    let mut columns = 0;
    for line in lines {
        let v: Vec<&str> = line.split(' ').collect();
        let k: f64 = v[1].parse().unwrap();
        assert!((k - 1.0).abs() <= 0.125, "k({}) = {k}", v[0]);
        columns += 1;
    }
    assert!(columns > 40);

    let field = std::fs::read_to_string(tmp.path().join("out/field.txt")).unwrap();
    assert!(field.starts_with("x y psi wet\n"));
    let rep = report(tmp.path());
    assert_eq!(report_value(&rep, "status"), Some("pass"));
    assert_eq!(report_value(&rep, "check.box_bounds"), Some("pass"));
    assert_eq!(report_value(&rep, "check.velocity_floor"), Some("pass"));

    // Atomic writes never leave temp files under the output directory.
    let leftovers: Vec<_> = std::fs::read_dir(tmp.path().join("out"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.contains("tmp"))
        .collect();
    assert!(leftovers.is_empty(), "{leftovers:?}");
}

#[test]
fn fit_on_the_straight_nozzle_recovers_the_base_speed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", STRAIGHT);
    let out = run_in(tmp.path(), &cfg, &["fit"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    let lambda: f64 = report_value(&rep, "fit.lambda").unwrap().parse().unwrap();
    assert!((lambda - 1.0).abs() <= 1e-3, "fitted speed {lambda}");
    assert_eq!(report_value(&rep, "check.detachment"), Some("pass"));
    assert_eq!(report_value(&rep, "exit_code"), Some("0"));
}

#[test]
fn config_problems_are_all_listed_and_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "bad.toml",
        r#"
[geometry]
preset = "straight"
height = 1.0
typo_key = 2

[profile]
preset = "constant"
value = 1.0
height = 1.0

[grid]
h = 0.0625
l = 4.0
schedule = [[6.0, 0.0625], [4.0, 0.0625]]

[solver]
tol_field = -1e-8
"#,
    );
    let out = run_in(tmp.path(), &cfg, &["fit"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("geometry.typo_key"), "{err}");
    assert!(err.contains("grid.schedule"), "{err}");
    assert!(err.contains("solver.tol_field"), "{err}");
    // The report is still written, carrying the same errors.
    let rep = report(tmp.path());
    assert_eq!(report_value(&rep, "exit_code"), Some("2"));
    assert!(rep.contains("solver.tol_field"));
}

#[test]
fn sweep_budget_exhaustion_exits_three_with_a_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!("{STRAIGHT}\n[solver]\nmax_sweeps = 2\n[physics]\nlambda = 1.3\n"),
    );
    let out = run_in(tmp.path(), &cfg, &["solve"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("did not converge"), "{err}");
    let rep = report(tmp.path());
    assert_eq!(report_value(&rep, "exit_code"), Some("3"));
    assert_eq!(report_value(&rep, "status"), Some("fail"));
}

#[test]
fn solve_without_a_speed_is_a_config_error_and_the_flag_fixes_it() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", STRAIGHT);
    let out = run_in(tmp.path(), &cfg, &["solve"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("physics.lambda"));

    let out = run_in(tmp.path(), &cfg, &["--lambda", "1.0", "solve"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert_eq!(report_value(&rep, "override.lambda"), Some("1"));
}

#[test]
fn identical_configs_give_bit_identical_dumps_and_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "run.toml", STRAIGHT);
    let args = ["--lambda", "1.05", "solve"];
    let out = run_in(tmp.path(), &cfg, &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let field_a = std::fs::read(tmp.path().join("out/field.txt")).unwrap();
    let curve_a = std::fs::read(tmp.path().join("out/curve.txt")).unwrap();
    let report_a = report(tmp.path());

    let out = run_in(tmp.path(), &cfg, &args);
    assert!(out.status.success());
    assert_eq!(field_a, std::fs::read(tmp.path().join("out/field.txt")).unwrap());
    assert_eq!(curve_a, std::fs::read(tmp.path().join("out/curve.txt")).unwrap());
    let strip = |s: &str| -> Vec<String> {
        s.lines().filter(|l| !l.contains(".seconds = ")).map(str::to_owned).collect()
    };
    assert_eq!(strip(&report_a), strip(&report(tmp.path())));
}

#[test]
fn continuation_covers_the_schedule_and_reports_the_spread() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        &STRAIGHT.replace("l = 3.0", "l = 3.0\nschedule = [[3.0, 0.0625], [4.0, 0.0625]]"),
    );
    let out = run_in(tmp.path(), &cfg, &["continue"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    assert_eq!(report_value(&rep, "continue.entries"), Some("2"));
    let spread: f64 = report_value(&rep, "continue.spread").unwrap().parse().unwrap();
    assert!(spread <= 1e-3, "spread {spread}");
    assert_eq!(report_value(&rep, "check.continuation_stable"), Some("pass"));
    assert!(report_value(&rep, "fit.lambda").is_some());
}

#[test]
fn verify_suite_passes_with_uniqueness_enabled() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "run.toml",
        &format!("{STRAIGHT}\n[physics]\nlambda = 1.3\n\n[checks]\nuniqueness = true\n"),
    );
    let out = run_in(tmp.path(), &cfg, &["verify"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = report(tmp.path());
    for check in [
        "check.chi_identity",
        "check.kappa_inverse",
        "check.flux_conservation",
        "check.height_at_base_speed",
        "check.thickness_monotone",
        "check.box_bounds",
        "check.determinism",
        "check.uniqueness",
        "check.rerun_determinism",
    ] {
        assert_eq!(report_value(&rep, check), Some("pass"), "{check}\n{rep}");
    }
}
