//! Runs every acceptance criterion at its pinned tolerance, one line each.

use std::process::ExitCode;

use nonlocal_bvp::verify::{run, CRITERIA};

fn main() -> ExitCode {
    let filter: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = Vec::new();
    for (id, _) in CRITERIA {
        if !filter.is_empty() && !filter.contains(&id) {
            continue;
        }
        let report = run(id).expect("known criterion");
        println!("{report}");
        if !report.passed {
            failed.push(id);
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
