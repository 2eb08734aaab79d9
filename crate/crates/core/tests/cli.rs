use std::path::Path;
use std::process::{Command, Output};

const CONFIG: &str = r#"
seed = 3

[machine]
beta = 1.0
generator = "random"
d_s = 2
d_b = 2
coupling = 0.8

[protocol]
kind = "optimal"
n = 4
final_thermalise = true

[optimizer]
random_starts = 2
max_iterations = 3000
gradient_tolerance = 1e-9

[battery]
levels = 96
window = 32

[[experiments]]
id = "bound"

[[experiments]]
id = "protocol"

[[experiments]]
id = "optimal-sweep"
sweep = { parameter = "n", values = [2, 4, 8] }

[[experiments]]
id = "unitary-check"
sweep = { parameter = "N", values = [8, 16] }

[[experiments]]
id = "coherence-sweep"
sweep = { parameter = "t", values = [0.0, 1.5, 40.0] }

[[experiments]]
id = "second-law"

[verify]
criteria = [2, 4]
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_thermomachine"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn list_experiments_names_every_experiment() {
    let out = run(&["list-experiments"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for id in ["bound", "protocol", "optimal-sweep", "weak-coupling-sweep", "unitary-check", "coherence-sweep", "physical-vs-abstract", "second-law"] {
        assert!(text.contains(id), "{id} missing");
    }
}

#[test]
fn repeated_runs_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let cfg_s = cfg.to_str().unwrap();
    assert!(run(&["run", cfg_s, "--out", a.to_str().unwrap(), "--workers", "1"]).status.success());
    assert!(run(&["run", cfg_s, "--out", b.to_str().unwrap(), "--workers", "2"]).status.success());
    let (a, b) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let rows = thermomachine::harness::read_rows(a.as_slice()).unwrap();
    assert!(rows.iter().any(|r| r.experiment == "coherence-sweep" && r.observable == "k_modulus"));
}

#[test]
fn seed_flag_changes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let a = run(&["run", cfg.to_str().unwrap(), "--out", "-"]);
    let b = run(&["run", cfg.to_str().unwrap(), "--out", "-", "--seed", "4"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "u.toml", &CONFIG.replace("\"second-law\"", "\"third-law\""));
    let out = run(&["run", unknown.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("third-law"));

    let bad_matrix = CONFIG.replace(
        "generator = \"random\"\nd_s = 2\nd_b = 2\ncoupling = 0.8",
        "generator = \"explicit\"\nh_s = [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 0.0], [-1.0, 0.0]]]\nh_b = [[[1.0, 0.0]]]\nv = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]",
    );
    let bad = write(dir.path(), "b.toml", &bad_matrix);
    let out = run(&["run", bad.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("machine.h_s") && err.contains("(0, 1)"), "{err}");

    assert_eq!(run(&["run", "/no/such/file.toml"]).status.code(), Some(2));
}

#[test]
fn verify_passes_and_reports_each_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", CONFIG);
    let out = run(&["verify", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(0));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("PASS criterion  2") && err.contains("PASS criterion  4"), "{err}");
}

#[test]
fn corrupted_bound_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let text = CONFIG.replace("criteria = [2, 4]", "criteria = [1]\ninject_bound_offset = 0.1");
    let cfg = write(dir.path(), "c.toml", &text);
    let out = run(&["verify", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL criterion  1"));
}

#[test]
fn empty_selection_is_a_vacuous_pass() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &CONFIG.replace("criteria = [2, 4]", "criteria = []"));
    let out = run(&["verify", cfg.to_str().unwrap(), "--out", "-"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}
