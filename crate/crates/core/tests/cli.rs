use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ocp_invariants::catalog;
use ocp_invariants::cli::{parse_file, EXIT_INPUT, EXIT_NOT_CONSERVED, EXIT_OK};
use ocp_invariants::expr::parse;
use ocp_invariants::extremal::{build_field, evaluate_along, integrate, IntegrationOptions};
use ocp_invariants::ocp::{build_hamiltonian, eliminate_controls};

const BIN: &str = env!("CARGO_BIN_EXE_ocp-invariants");

fn problem(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../problems")
        .join(format!("{name}.toml"))
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn quartic_text() -> String {
    std::fs::read_to_string(problem("quartic_oscillator")).unwrap()
}

#[test]
fn derive_prints_the_quartic_hamiltonian() {
    let out = run(&[
        "derive",
        problem("quartic_oscillator").to_str().unwrap(),
        "--report",
        "json",
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let printed = report["derivation"]["hamiltonian"].as_str().unwrap();
    let symbols = ocp_invariants::ocp::symbol_table(4, 2);
    let expected = parse(
        "psi0*(u1^2 + u2^2) + psi1*x3 + psi2*x4 - psi3*x1*(x1^2 + x2^2) + psi3*u1 \
         - psi4*x2*(x1^2 + x2^2) + psi4*u2",
        &symbols,
    )
    .unwrap();
    assert_eq!(parse(printed, &symbols).unwrap(), expected);
}

#[test]
fn derive_prints_the_scalar_control_law() {
    let out = run(&["derive", problem("scalar").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(
        stdout(&out).contains("u1 = -psi1/(2*psi0)"),
        "{}",
        stdout(&out)
    );
}

#[test]
fn dimension_mismatch_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = quartic_text().replace("    \"x3\",\n", "");
    let path = write_temp(&dir, "short.toml", &text);
    let out = run(&["derive", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let err = stderr(&out);
    assert!(err.contains("dimension mismatch"), "{err}");
    // `path:line:column:` prefix
    let line_col = err.split(".toml:").nth(1).unwrap();
    let mut parts = line_col.split(':');
    assert!(parts.next().unwrap().parse::<usize>().unwrap() > 1);
    assert!(parts.next().unwrap().parse::<usize>().unwrap() >= 1);
}

#[test]
fn derive_reports_failed_elimination() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problem("scalar"))
        .unwrap()
        .replace("lagrangian = \"u1^2\"", "lagrangian = \"u1^4\"");
    let path = write_temp(&dir, "quartic_cost.toml", &text);
    let out = run(&["derive", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(stdout(&out).contains("H = "));
    assert!(
        stderr(&out).contains("cannot be eliminated"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn check_certifies_the_quartic_momentum() {
    let out = run(&["check", problem("quartic_oscillator").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stdout(&out));
    let text = stdout(&out);
    assert!(text.contains("ConservedSymbolically"));
    assert!(
        text.contains("raw residual:     -psi3*u2 + psi4*u1"),
        "{text}"
    );
    assert!(!text.contains("NonzeroResidual"));
}

#[test]
fn check_rejects_a_non_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let text = quartic_text().replace(
        "hamiltonian = \"H\"",
        "hamiltonian = \"H\"\nbad = \"psi1*x1\"",
    );
    let path = write_temp(&dir, "bad.toml", &text);
    let out = run(&["check", path.to_str().unwrap(), "--report", "json"]);
    assert_eq!(out.status.code(), Some(EXIT_NOT_CONSERVED));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    let bad = report["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "bad")
        .unwrap();
    assert_eq!(bad["status"], "NonzeroResidual");
    // R(psi1*x1) = psi1*x3 - x1*∂H/∂x1 after elimination.
    let symbols = ocp_invariants::ocp::symbol_table(4, 2);
    let reduced = parse(bad["reduced_residual"].as_str().unwrap(), &symbols).unwrap();
    let expected = parse(
        "psi1*x3 + x1*(psi3*(3*x1^2 + x2^2) + 2*psi4*x1*x2)",
        &symbols,
    )
    .unwrap();
    assert_eq!(reduced, expected);
    assert!(!ocp_invariants::expr::is_zero(&reduced, 3).unwrap());
}

#[test]
fn check_without_candidates_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problem("scalar")).unwrap();
    let stripped: String = text
        .split("[simulate]")
        .next()
        .unwrap()
        .split("[candidates]")
        .next()
        .unwrap()
        .to_string();
    let path = write_temp(&dir, "none.toml", &stripped);
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(stderr(&out).contains("[candidates]"));
}

#[test]
fn unknown_keys_are_reported_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let text = quartic_text().replace("psi0 = -1.0", "psi0 = -1.0\nsteps = 10");
    let path = write_temp(&dir, "typo.toml", &text);
    let out = run(&["check", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    let line = text.lines().position(|l| l.starts_with("steps")).unwrap() + 1;
    assert!(
        stderr(&out).contains(&format!("typo.toml:{line}:1:")),
        "{}",
        stderr(&out)
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| {
            r.unwrap()
                .iter()
                .map(|v| v.parse::<f64>().unwrap())
                .collect()
        })
        .collect();
    (header, rows)
}

#[test]
fn simulate_scalar_writes_constant_hamiltonian() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("scalar.csv");
    let out = run(&[
        "simulate",
        problem("scalar").to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK), "{}", stderr(&out));
    let (header, rows) = read_csv(&csv_path);
    assert_eq!(
        header,
        ["t", "x1", "u1", "psi1", "H", "costate", "hamiltonian"]
    );
    assert_eq!(rows.len(), 5);
    for row in &rows {
        assert!((row[4] - 1.0).abs() < 1e-12);
        assert!((row[1] - row[0]).abs() < 1e-9);
        assert!((row[2] - 1.0).abs() < 1e-12);
    }
    let raw = std::fs::read_to_string(&csv_path).unwrap();
    let first_row = raw.lines().nth(1).unwrap();
    assert!(
        first_row.starts_with("0.0000000000000000e0,"),
        "{first_row}"
    );
}

#[test]
fn simulate_quartic_momentum_column_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("quartic.csv");
    let out = run(&[
        "simulate",
        problem("quartic_oscillator").to_str().unwrap(),
        "--csv",
        csv_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let (header, rows) = read_csv(&csv_path);
    let col = header.iter().position(|h| h == "angular_momentum").unwrap();
    let f0 = rows[0][col];
    for row in &rows {
        assert!((row[col] - f0).abs() / (1.0 + f0.abs()) <= 1e-7);
    }
    assert_eq!(rows.len(), 200);
}

#[test]
fn csv_round_trips_bit_exactly() {
    let pf = parse_file(&problem("quartic_oscillator"), &quartic_text()).unwrap();
    let p = &pf.problem;
    let elim = eliminate_controls(p, &build_hamiltonian(p)).unwrap();
    let field = build_field(p, &elim, -1.0).unwrap();
    let cfg = pf.simulate.as_ref().unwrap();
    let tr = integrate(
        &field,
        &cfg.x0,
        &cfg.psi_init,
        p.horizon(),
        &IntegrationOptions::default(),
    )
    .unwrap();
    let mut buf = Vec::new();
    ocp_invariants::cli::write_csv(&mut buf, &field, &tr, &pf.candidates).unwrap();

    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let h = evaluate_along(&tr, field.hamiltonian()).unwrap();
    for (k, record) in reader.records().enumerate() {
        let values: Vec<f64> = record.unwrap().iter().map(|v| v.parse().unwrap()).collect();
        let mut expected = vec![tr.times[k]];
        expected.extend(&tr.states[k]);
        expected.extend(&tr.controls[k]);
        expected.extend(&tr.costates[k]);
        expected.push(h[k].1);
        for (got, want) in values.iter().zip(&expected) {
            assert_eq!(got.to_bits(), want.to_bits());
        }
    }
}

#[test]
fn simulate_without_section_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = quartic_text();
    let stripped = text.split("[simulate]").next().unwrap();
    let path = write_temp(&dir, "nosim.toml", stripped);
    let out = run(&["simulate", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(stderr(&out).contains("[simulate]"));
}

#[test]
fn discover_lists_known_invariants() {
    let out = run(&["discover", problem("quartic_oscillator").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    let text = stdout(&out);
    assert!(text.contains("basis size: 16"));
    assert!(
        text.contains("psi1*x2 - psi2*x1 + psi3*x4 - psi4*x3"),
        "{text}"
    );

    let out = run(&[
        "discover",
        problem("cubic_spline_homogeneous").to_str().unwrap(),
    ]);
    assert!(
        stdout(&out).contains("candidate 1: psi1*x1 + psi2*x2"),
        "{}",
        stdout(&out)
    );

    let out = run(&[
        "discover",
        problem("cubic_spline_quadratic").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(EXIT_OK));
    assert!(!stdout(&out).contains("psi1*x1 + psi2*x2"));
}

#[test]
fn json_reports_are_reproducible() {
    let file = problem("quartic_oscillator");
    for cmd in ["check", "discover", "simulate", "derive"] {
        let args = [
            cmd,
            file.to_str().unwrap(),
            "--report",
            "json",
            "--seed",
            "42",
        ];
        let a = run(&args);
        let b = run(&args);
        assert_eq!(a.status.code(), Some(EXIT_OK), "{cmd}: {}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "{cmd}");
    }
}

#[test]
fn seed_flag_reaches_the_report() {
    let out = run(&[
        "discover",
        problem("cubic_spline_homogeneous").to_str().unwrap(),
        "--report",
        "json",
        "--seed",
        "77",
    ]);
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["seed"], 77);
    assert_eq!(report["discovery"]["basis"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_file_and_bad_usage() {
    let out = run(&["check", "/nonexistent/problem.toml"]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
    assert!(stderr(&out).contains("cannot read file"));
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(EXIT_INPUT));
}

#[test]
fn bundled_problem_files_match_the_catalog() {
    let pairs = [
        ("quartic_oscillator", catalog::quartic_oscillator()),
        ("scalar", catalog::scalar()),
        ("time_scaled", catalog::time_scaled()),
        ("bilinear_scalar", catalog::bilinear_scalar()),
        (
            "cubic_spline_homogeneous",
            catalog::cubic_spline_homogeneous([1, 2]),
        ),
        ("cubic_spline_quadratic", catalog::cubic_spline_quadratic()),
    ];
    for (file, p) in pairs {
        let text = std::fs::read_to_string(problem(file)).unwrap();
        let pf = parse_file(&problem(file), &text).unwrap();
        assert_eq!(pf.problem.lagrangian(), p.lagrangian(), "{file}");
        assert_eq!(pf.problem.dynamics(), p.dynamics(), "{file}");
        assert_eq!(pf.problem.horizon(), p.horizon(), "{file}");
    }
}
