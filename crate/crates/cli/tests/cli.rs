use std::path::Path;
use std::process::{Command, Output};

fn stochcbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochcbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn short_scenario(dir: &Path, name: &str, horizon: f64) -> String {
    let path = dir.join(format!("{name}.toml"));
    let out = stochcbf(&[
        "export-scenario",
        "--name",
        name,
        "--out",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&path).unwrap();
    let text = text.replacen("horizon = 30.0", &format!("horizon = {horizon:?}"), 1);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn export_scenario_to_stdout() {
    let out = stochcbf(&["export-scenario", "--name", "exp2n"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("name = \"exp2n\""));
    assert!(text.contains("c1 = 0.035"));
}

#[test]
fn unknown_builtin_is_a_configuration_error() {
    assert_eq!(code(&stochcbf(&["export-scenario", "--name", "exp9"])), 2);
    assert_eq!(code(&stochcbf(&["run", "--scenario", "exp9"])), 2);
}

#[test]
fn bad_flags_are_configuration_errors() {
    assert_eq!(
        code(&stochcbf(&["run", "--scenario", "exp2n", "--trials", "0"])),
        2
    );
    assert_eq!(
        code(&stochcbf(&[
            "run",
            "--scenario",
            "exp2n",
            "--psi-form",
            "half"
        ])),
        2
    );
    assert_eq!(code(&stochcbf(&["run"])), 2);
}

#[test]
fn malformed_scenario_file_is_a_configuration_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"x\"\nhorizon = -1\n").unwrap();
    let out = stochcbf(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn safe_run_writes_records_that_pass_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), "exp2n", 5.0);
    let out_dir = dir.path().join("out");
    let out = stochcbf(&[
        "run",
        "--scenario",
        &scenario,
        "--trials",
        "3",
        "--seed",
        "5",
        "--out",
        out_dir.to_str().unwrap(),
        "--assert-safe",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("safe                3"));

    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let seeds: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(seeds, ["5", "4", "7"]);

    let audit = stochcbf(&["audit", out_dir.to_str().unwrap()]);
    assert_eq!(code(&audit), 0);
    assert_eq!(
        stdout(&audit)
            .lines()
            .filter(|l| l.starts_with("ok"))
            .count(),
        3
    );
}

#[test]
fn assert_safe_fails_on_a_breach() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), "exp2d", 10.0);
    let out = stochcbf(&["run", "--scenario", &scenario, "--trials", "4"]);
    assert_eq!(code(&out), 0);
    let out = stochcbf(&[
        "run",
        "--scenario",
        &scenario,
        "--trials",
        "4",
        "--assert-safe",
    ]);
    assert_eq!(code(&out), 1);
}

#[test]
fn overrides_switch_the_controller() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), "exp2d", 5.0);
    let out = stochcbf(&[
        "run",
        "--scenario",
        &scenario,
        "--trials",
        "2",
        "--controller",
        "stochastic",
        "--psi-form",
        "projection",
        "--assert-safe",
    ]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}

#[test]
fn tampered_record_fails_the_audit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = short_scenario(dir.path(), "exp2n", 1.0);
    let out_dir = dir.path().join("out");
    let out = stochcbf(&[
        "run",
        "--scenario",
        &scenario,
        "--trials",
        "1",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let sidecar = out_dir.join("trial_0000_audit.csv");
    let text = std::fs::read_to_string(&sidecar).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(str::to_string).collect();
    fields[5] = "1e12".into();
    lines[3] = fields.join(",");
    std::fs::write(&sidecar, lines.join("\n") + "\n").unwrap();

    let record = out_dir.join("trial_0000.csv");
    assert_eq!(code(&stochcbf(&["audit", record.to_str().unwrap()])), 1);
}

#[test]
fn audit_of_a_missing_file_is_a_configuration_error() {
    assert_eq!(
        code(&stochcbf(&["audit", "/nonexistent/trial_0000.csv"])),
        2
    );
}

#[test]
fn estimate_c1_from_a_log() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    // alternating +-a increments around a constant drift
    let (dt, v, a) = (0.1, -0.2, 0.01);
    let mut text = String::from("t,x1,v\n");
    let mut x1 = 1.0;
    for j in 0..=1000 {
        text.push_str(&format!("{:?},{x1:?},{v:?}\n", j as f64 * dt));
        let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
        x1 += v * dt + sign * a;
    }
    std::fs::write(&path, text).unwrap();
    let out = stochcbf(&[
        "estimate-c1",
        "--input",
        path.to_str().unwrap(),
        "--dt",
        "0.1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let c1: f64 = stdout(&out).trim().parse().unwrap();
    // unbiased variance of 1000 alternating +-a values: a^2 * 1000 / 999
    let expected = (a * a * 1000.0 / 999.0 / dt).sqrt();
    assert!((c1 - expected).abs() < 1e-9, "{c1} vs {expected}");

    let inferred = stochcbf(&["estimate-c1", "--input", path.to_str().unwrap()]);
    assert_eq!(code(&inferred), 0);
}

#[test]
fn estimate_c1_needs_two_increments() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("log.csv");
    std::fs::write(&path, "t,x1,v\n0.0,1.0,0.0\n0.1,1.0,0.0\n").unwrap();
    let out = stochcbf(&[
        "estimate-c1",
        "--input",
        path.to_str().unwrap(),
        "--dt",
        "0.1",
    ]);
    assert_eq!(code(&out), 2);
}
