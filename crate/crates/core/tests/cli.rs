use std::fs;
use std::path::Path;
use std::process::Command;

use mprlab::cli::{run, EXIT_OK, EXIT_STRUCTURAL, EXIT_USAGE};
use mprlab::sim::builtin_text;

/// Double integrator whose output has a zero at 2.
const NON_MINIMUM_PHASE: &str = "\
[dims]
n = 2
k = 2
[plant]
f1 = x2
f2 = u
h = 2*x1 - x2 - w1
[exo]
a1 = -w2
a2 = w1
[init]
x0 = 0, 0
w0 = 1, 0
";

fn invoke(args: &[&str], out: &Path) -> (i32, String) {
    let mut argv: Vec<String> = vec!["mprlab".into()];
    argv.extend(args.iter().map(|s| s.to_string()));
    argv.push("--out".into());
    argv.push(out.display().to_string());
    let mut stdout = Vec::new();
    let code = run(argv, &mut stdout);
    (code, String::from_utf8(stdout).unwrap())
}

fn value<'a>(kv: &'a str, key: &str) -> &'a str {
    kv.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(" = ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{kv}"))
}

#[test]
fn check_reports_structure() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["check", "linear"], dir.path());
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&out, "relative_degree"), "2");
    assert_eq!(value(&out, "all_ok"), "true");
    assert_eq!(
        fs::read_to_string(dir.path().join("linear_structure.txt")).unwrap(),
        out
    );
}

#[test]
fn structural_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("nmp.txt");
    fs::write(&file, NON_MINIMUM_PHASE).unwrap();
    let path = file.to_str().unwrap();
    let (code, out) = invoke(&["check", path], dir.path());
    assert_eq!(code, EXIT_STRUCTURAL);
    assert_eq!(value(&out, "linearly_minimum_phase"), "false");
    assert_eq!(invoke(&["synth", path, "--degree", "2"], dir.path()).0, EXIT_STRUCTURAL);
}

#[test]
fn usage_errors_exit_64() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(invoke(&["check", "no-such-scenario"], p).0, EXIT_USAGE);
    assert_eq!(invoke(&["frobnicate"], p).0, EXIT_USAGE);
    assert_eq!(invoke(&["mpr", "pendulum", "--umax", "-1"], p).0, EXIT_USAGE);
    assert_eq!(invoke(&["simulate", "pendulum", "--x0", "1,2,3"], p).0, EXIT_USAGE);
    assert_eq!(
        invoke(&["simulate", "pendulum", "--controller", "quintic"], p).0,
        EXIT_USAGE
    );
    let bad = p.join("bad.txt");
    fs::write(&bad, "[dims]\nn = two\n").unwrap();
    assert_eq!(invoke(&["check", bad.to_str().unwrap()], p).0, EXIT_USAGE);
}

#[test]
fn scenario_files_and_builtins_agree() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let file = a.path().join("pendulum.txt");
    fs::write(&file, builtin_text("pendulum").unwrap()).unwrap();
    let args = ["--controller", "cubic", "--w0", "0.3,0", "--steps", "40"];
    let from_file: Vec<&str> = ["simulate", file.to_str().unwrap()].into_iter().chain(args).collect();
    let from_builtin: Vec<&str> = ["simulate", "pendulum"].into_iter().chain(args).collect();
    let (c1, s1) = invoke(&from_file, a.path());
    let (c2, s2) = invoke(&from_builtin, b.path());
    assert_eq!((c1, c2), (EXIT_OK, EXIT_OK));
    assert_eq!(
        value(&s1, "steady_state_avg_error"),
        value(&s2, "steady_state_avg_error")
    );
    let csv = "pendulum_simulate_cubic.csv";
    let (t1, t2) = (
        fs::read(a.path().join(csv)).unwrap(),
        fs::read(b.path().join(csv)).unwrap(),
    );
    assert_eq!(t1, t2);
    assert_eq!(String::from_utf8(t1).unwrap().lines().count(), 42);
}

#[test]
fn simulate_records_divergence_as_data() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(
        &["simulate", "pendulum", "--controller", "linear", "--x0", "2,0"],
        dir.path(),
    );
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&out, "diverged"), "true");
    assert_eq!(value(&out, "steady_state_avg_error"), "none");
}

#[test]
fn constrained_mpr_respects_the_bound() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "mpr",
        "pendulum",
        "--horizon",
        "4",
        "--terminal-degree",
        "4",
        "--umax",
        "2",
        "--steps",
        "24",
    ];
    let (code, out) = invoke(&args, dir.path());
    assert_eq!(code, EXIT_OK);
    let umax: f64 = value(&out, "max_abs_u").parse().unwrap();
    assert!(umax <= 2.0, "{out}");
    let diag = fs::read_to_string(dir.path().join("pendulum_mpr_T4_d4_diagnostics.csv")).unwrap();
    assert!(diag.starts_with("step,iterations,grad_norm,objective,terminal_value,terminal_ok,restarted\n"));
    assert_eq!(diag.lines().count(), 25);
    let csv = fs::read_to_string(dir.path().join("pendulum_mpr_T4_d4.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let u: f64 = line.split(',').nth(5).unwrap().parse().unwrap();
        assert!(u.abs() <= 2.0);
    }
}

#[test]
fn synth_writes_the_law() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["synth", "pendulum", "--degree", "4", "--seed", "3"], dir.path());
    assert_eq!(code, EXIT_OK);
    assert_eq!(value(&out, "feedback_degree"), "3");
    assert_ne!(value(&out, "level"), "unset");
    let law = fs::read_to_string(dir.path().join("pendulum_law_d4.txt")).unwrap();
    assert!(law.contains("[piT]") && law.contains("[kappaT]"));
}

#[test]
fn demo_linear_prints_the_closed_form_solution() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out) = invoke(&["demo", "linear"], dir.path());
    assert_eq!(code, EXIT_OK);
    let row = |key: &str| -> Vec<f64> { value(&out, key).split(", ").map(|v| v.parse().unwrap()).collect() };
    let close = |got: Vec<f64>, want: &[f64]| got.iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-8);
    assert!(close(row("T[3]"), &[-0.2, -0.4]));
    assert!(close(row("L[1]"), &[-0.8, 0.4]));
    assert!(close(row("P[2]"), &[0.0, 1.0, 0.0]));
    assert!(close(row("K[1]"), &[0.0, 0.0, -1.0]));
    assert_eq!(value(&out, "diverged"), "false");
}

fn binary(args: &[&str], seed_env: Option<&str>) -> std::process::Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_mprlab"));
    cmd.args(args).env_remove("MPRLAB_SEED");
    if let Some(s) = seed_env {
        cmd.env("MPRLAB_SEED", s);
    }
    cmd.output().unwrap()
}

#[test]
fn seed_comes_from_flag_then_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let level = |o: std::process::Output| value(&String::from_utf8(o.stdout).unwrap(), "level").to_string();
    let base = ["synth", "pendulum", "--degree", "4", "--out", out];
    let default = level(binary(&base, None));
    assert_eq!(level(binary(&base, Some("0"))), default);
    let seeded: Vec<&str> = base.iter().copied().chain(["--seed", "0"]).collect();
    assert_eq!(level(binary(&seeded, Some("12345"))), default);
    let bad = binary(&base, Some("not-a-number"));
    assert_eq!(bad.status.code(), Some(EXIT_USAGE));
    assert!(String::from_utf8(bad.stderr).unwrap().contains("MPRLAB_SEED"));
}
