//! Runs the twelve acceptance criteria against `configs/default.toml` and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use thermomachine::harness::load_config;
use thermomachine::harness::verify::{run_criterion, CRITERIA};

fn main() -> ExitCode {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let mut cfg = load_config(&path).expect("default config parses");
    cfg.verify.criteria = CRITERIA.iter().map(|(k, _)| *k).collect();
    cfg.verify.inject_bound_offset = 0.0;

    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        let start = Instant::now();
        match run_criterion(&cfg, id) {
            Ok(r) => {
                println!("{} [{:.1}s]", r.line(), start.elapsed().as_secs_f64());
                if !r.passed {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("FAIL criterion {id:>2} ({name}): error {e}");
                failed.push(id);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria passed{}",
        CRITERIA.len() - failed.len(),
        CRITERIA.len(),
        if failed.is_empty() { String::new() } else { format!("; failed {failed:?}") }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
