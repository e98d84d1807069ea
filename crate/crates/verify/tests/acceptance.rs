//! Acceptance criteria 1 to 14, one PASS/FAIL line each.
//!
//! Runs on a single worker so that criterion 14 compares the baseline with
//! an eight-worker run. Exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use remlab::suite::verify;

fn main() -> ExitCode {
    let clock = Instant::now();
    let verdicts = match verify(1, |v| println!("{}", v.line())) {
        Ok(v) => v,
        Err(e) => {
            println!("acceptance suite aborted: {e}");
            return ExitCode::FAILURE;
        }
    };
    let failed: Vec<u8> = verdicts.iter().filter(|v| !v.passed).map(|v| v.id).collect();
    println!(
        "{} of {} criteria passed in {:.0}s",
        verdicts.len() - failed.len(),
        verdicts.len(),
        clock.elapsed().as_secs_f64()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
