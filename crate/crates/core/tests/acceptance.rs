//! Runs every acceptance criterion and prints one verdict line per criterion,
//! followed by its individual checks.
//!
//! Pass criterion numbers to run a subset: `cargo test --test acceptance -- 2 5`.
//! `PQASLAB_SEED` overrides the seed.

use std::process::ExitCode;

use pqaslab_core::harness::acceptance::{ACCEPTANCE_SEED, CRITERIA};

fn main() -> ExitCode {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seed = std::env::var("PQASLAB_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(ACCEPTANCE_SEED);
    let mut failed = Vec::new();
    for (i, criterion) in CRITERIA.iter().enumerate() {
        let id = i + 1;
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        match criterion(seed) {
            Ok(report) => {
                println!("{}", report.render());
                if !report.passed() {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("criterion {id:02} FAIL: error {e}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
