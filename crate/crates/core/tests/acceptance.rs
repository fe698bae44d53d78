//! Acceptance criteria 1 to 10 at their stated tolerances, one line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use gpcollapse::verify::{run, Status, VerifyOptions};

fn main() -> ExitCode {
    let start = Instant::now();
    let report = match run(&VerifyOptions::default()) {
        Ok(r) => r,
        Err(e) => {
            println!("acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    for c in &report.checks {
        println!("{}", c.line());
    }
    let failed = report.checks.iter().filter(|c| c.status == Status::Fail).count();
    println!(
        "acceptance: {} passed, {failed} failed, {} skipped in {:.1?}",
        report.checks.iter().filter(|c| c.status == Status::Pass).count(),
        report.checks.iter().filter(|c| c.status == Status::Skipped).count(),
        start.elapsed()
    );
    if failed == 0 && report.checks.len() == 10 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
