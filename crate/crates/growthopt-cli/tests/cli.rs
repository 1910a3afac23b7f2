//! End-to-end tests against the compiled binary: exit codes, file outputs,
//! determinism, and the printed surfaces the exit-code contract promises.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_growthopt"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary spawns")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("no signal")
}

const SINGLE_CELL_TOML: &str = r#"
seeds = [1]
max_iters = 60

[objective]
family = "interp_least_squares"
seed = 11
n = 10
d = 3
conditioning = 4.0

[init]
kind = "explicit"
coords = [1.0, -1.0, 0.5]

[grid]
methods = ["clip_sgd"]
eta_multipliers = [1.0]
clip_radii = [1.0]
batch_sizes = [8]
"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn run_twice_writes_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "q.toml", SINGLE_CELL_TOML);
    let out = tmp.path().join("out");
    let args = [
        "run",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ];
    let first = run_in(tmp.path(), &args);
    assert_eq!(code(&first), 0, "stderr: {}", stderr(&first));
    let trace_path = out.join("traces/cell000_seed1.csv");
    let trace_1 = std::fs::read(&trace_path).unwrap();
    let summary_1 = std::fs::read(out.join("summary.json")).unwrap();

    let second = run_in(tmp.path(), &args);
    assert_eq!(code(&second), 0);
    assert_eq!(trace_1, std::fs::read(&trace_path).unwrap());
    assert_eq!(summary_1, std::fs::read(out.join("summary.json")).unwrap());
    assert_eq!(stdout(&first), stdout(&second));
    assert!(stdout(&first).contains("diverged: no"));
}

#[test]
fn missing_config_and_unknown_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = run_in(
        tmp.path(),
        &["run", "--config", "does_not_exist.toml", "--seed", "1"],
    );
    assert_eq!(code(&missing), 2);
    assert!(stderr(&missing).contains("does_not_exist.toml"));

    let unknown = run_in(tmp.path(), &["sweep", "--config", "x.toml", "--turbo"]);
    assert_eq!(code(&unknown), 2);
    assert!(stderr(&unknown).contains("--turbo"));

    let config = write_config(tmp.path(), "q.toml", SINGLE_CELL_TOML);
    let bad_override = run_in(
        tmp.path(),
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "1",
            "--override",
            "momentum=0.9",
        ],
    );
    assert_eq!(code(&bad_override), 2);
    assert!(stderr(&bad_override).contains("known keys"));
}

#[test]
fn eta_mult_override_halves_the_header_eta() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "q.toml", SINGLE_CELL_TOML);
    let read_eta = |out: &Path| -> f64 {
        let text = std::fs::read_to_string(out.join("traces/cell000_seed1.csv")).unwrap();
        let line = text
            .lines()
            .find(|l| l.starts_with("# eta="))
            .expect("eta header present");
        line.trim_start_matches("# eta=").parse().unwrap()
    };
    let out_full = tmp.path().join("full");
    let full = run_in(
        tmp.path(),
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            out_full.to_str().unwrap(),
        ],
    );
    assert_eq!(code(&full), 0, "stderr: {}", stderr(&full));
    let out_half = tmp.path().join("half");
    let half = run_in(
        tmp.path(),
        &[
            "run",
            "--config",
            config.to_str().unwrap(),
            "--seed",
            "1",
            "--out",
            out_half.to_str().unwrap(),
            "--override",
            "eta_mult=0.5",
        ],
    );
    assert_eq!(code(&half), 0, "stderr: {}", stderr(&half));
    assert_eq!(read_eta(&out_half), 0.5 * read_eta(&out_full));
}

#[test]
fn verify_bundled_suite_passes() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(tmp.path(), &["verify"]);
    assert_eq!(
        code(&output),
        0,
        "stdout: {}\nstderr: {}",
        stdout(&output),
        stderr(&output)
    );
    let text = stdout(&output);
    assert!(text.contains("0 failed"), "unexpected: {text}");
}

#[test]
fn verify_flags_an_inadmissible_step_with_a_witness() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "hot.toml",
        r#"
seeds = [1, 2]
max_iters = 80
checks = ["monotone_distance"]

[objective]
family = "interp_least_squares"
seed = 11
n = 10
d = 3
conditioning = 4.0

[init]
kind = "explicit"
coords = [1.0, -1.0, 0.5]

[grid]
methods = ["clip_sgd"]
eta_multipliers = [100.0]
clip_radii = [1.0]
batch_sizes = [8]
"#,
    );
    let output = run_in(
        tmp.path(),
        &["verify", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&output), 1, "stdout: {}", stdout(&output));
    let text = stdout(&output);
    assert!(text.contains("witness"), "no witness printed: {text}");
    assert!(text.contains("fail"), "no failure line: {text}");
}

#[test]
fn verify_with_an_empty_check_list_reports_zero_checks() {
    let tmp = tempfile::tempdir().unwrap();
    let output = run_in(tmp.path(), &["verify", "--checks", ""]);
    assert_eq!(code(&output), 0);
    assert!(stdout(&output).contains("0 checks"));
}

#[test]
fn estimate_rho_is_one_on_a_single_component_objective() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "toy.toml",
        r#"
seeds = [1]
max_iters = 1

[objective]
family = "interp_least_squares"
seed = 3
n = 1
d = 1
conditioning = 1.0

[init]
kind = "explicit"
coords = [2.0]

[grid]
methods = ["sgd"]
eta_multipliers = [1.0]
batch_sizes = [1]
"#,
    );
    let output = run_in(
        tmp.path(),
        &["estimate-rho", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&output), 0, "stderr: {}", stderr(&output));
    let text = stdout(&output);
    let rho: f64 = text
        .lines()
        .find(|l| l.starts_with("rho_hat = "))
        .and_then(|l| l.split_whitespace().nth(2))
        .expect("rho_hat line")
        .parse()
        .unwrap();
    assert!((rho - 1.0).abs() <= 1e-12, "rho_hat = {rho}");
    // One component means zero noise: every floor collapses to 1.
    for label in [
        "clip_nonconvex",
        "clip_convex",
        "clip_h",
        "nsgd_nonconvex",
        "nsgd_convex",
        "nsgd_h",
    ] {
        let line = text
            .lines()
            .find(|l| l.trim_start().starts_with(label))
            .unwrap_or_else(|| panic!("no {label} line in: {text}"));
        assert!(line.trim_end().ends_with(" 1"), "floor not 1: {line}");
    }
}

#[test]
fn estimate_rho_heavy_tail_needs_p_and_flags_degenerate_points() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "pareto.toml",
        r#"
seeds = [1]
max_iters = 1

[objective]
family = "pareto_quadratic"
alpha = 1.5
dim = 2

[init]
kind = "explicit"
coords = [1.0, 1.0]

[grid]
methods = ["nsgd"]
eta_multipliers = [1.0]
lambdas = [0.1]
batch_sizes = [4]
"#,
    );
    // Without --p the exact finite-sum ratio is unavailable: usage error.
    let bare = run_in(
        tmp.path(),
        &["estimate-rho", "--config", config.to_str().unwrap()],
    );
    assert_eq!(code(&bare), 2);
    assert!(stderr(&bare).contains("--p"));

    let heavy = run_in(
        tmp.path(),
        &[
            "estimate-rho",
            "--config",
            config.to_str().unwrap(),
            "--p",
            "1.2",
        ],
    );
    assert_eq!(code(&heavy), 0, "stderr: {}", stderr(&heavy));
    let text = stdout(&heavy);
    assert!(text.contains("rho_p_hat(p=1.2)"), "missing moment: {text}");
    assert!(text.contains("heavy(p=1.2)"), "missing floor: {text}");

    // The origin is the quadratic's optimum: degenerate gradient, exit 1.
    let degenerate = run_in(
        tmp.path(),
        &[
            "estimate-rho",
            "--config",
            config.to_str().unwrap(),
            "--p",
            "1.2",
            "--at",
            "0,0",
        ],
    );
    assert_eq!(code(&degenerate), 1);
    assert!(stderr(&degenerate).contains("degenerate"));
}

#[test]
fn sweep_writes_under_the_env_dir_and_report_reads_it_back() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "grid.toml",
        r#"
seeds = [1, 2]
max_iters = 50

[objective]
family = "interp_least_squares"
seed = 11
n = 10
d = 3
conditioning = 4.0

[init]
kind = "explicit"
coords = [1.0, -1.0, 0.5]

[grid]
methods = ["clip_sgd", "nsgd"]
eta_multipliers = [0.5, 1.0]
clip_radii = [1.0]
lambdas = [0.05]
batch_sizes = [8]
"#,
    );
    let out = tmp.path().join("from-env");
    let sweep = bin()
        .current_dir(tmp.path())
        .env("GROWTHOPT_OUT", &out)
        .args(["sweep", "--config", config.to_str().unwrap()])
        .output()
        .expect("binary spawns");
    assert_eq!(code(&sweep), 0, "stderr: {}", stderr(&sweep));
    assert!(out.join("summary.json").is_file());
    // 2 methods x 2 multipliers x 1 knob x 1 batch = 4 cells.
    let cell_lines = stdout(&sweep)
        .lines()
        .filter(|l| l.starts_with("cell "))
        .count();
    assert_eq!(cell_lines, 4);

    let report = run_in(tmp.path(), &["report", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&report), 0, "stderr: {}", stderr(&report));
    let text = stdout(&report);
    assert!(text.contains("4 cells"), "unexpected: {text}");
    assert!(
        text.contains("cell000_seed1.csv"),
        "no per-trace line: {text}"
    );

    // --exact widens every float to 17 significant digits.
    let exact = run_in(
        tmp.path(),
        &["report", "--out", out.to_str().unwrap(), "--exact"],
    );
    assert_eq!(code(&exact), 0);
    assert!(stdout(&exact).contains("e0") || stdout(&exact).contains("e-"));
}

#[test]
fn run_rejects_multi_cell_grids() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "grid.toml",
        &SINGLE_CELL_TOML.replace("eta_multipliers = [1.0]", "eta_multipliers = [0.5, 1.0]"),
    );
    let output = run_in(
        tmp.path(),
        &["run", "--config", config.to_str().unwrap(), "--seed", "1"],
    );
    assert_eq!(code(&output), 2);
    assert!(stderr(&output).contains("single-cell"));
}
