//! Acceptance criteria at full fidelity, one line per criterion.
//!
//! `cargo test --test acceptance -- 5 12` runs a subset.

use std::process::ExitCode;

use tunneltime::experiments::{self, Fidelity, CATALOG};

fn main() -> ExitCode {
    let wanted: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for &(id, name, _, _) in CATALOG.iter().filter(|c| wanted.is_empty() || wanted.contains(&c.0)) {
        match experiments::run(id, Fidelity::Full, 1) {
            Ok(outcome) => {
                println!("{}", outcome.summary());
                for c in &outcome.checks {
                    println!("       {} {}", if c.passed { "ok  " } else { "FAIL" }, c.what);
                }
                if !outcome.passed {
                    failed += 1;
                }
            }
            Err(e) => {
                println!("[FAIL] {id:>2} {name} error: {e}");
                failed += 1;
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
