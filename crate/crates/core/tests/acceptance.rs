//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use switchback::harness::acceptance::{run_criterion, AcceptanceConfig, CRITERIA};
use switchback::EstimatorSuite;

fn main() -> ExitCode {
    let config = AcceptanceConfig::default();
    let suite = EstimatorSuite::default();
    let mut failed = 0;
    println!("\nrunning {CRITERIA} acceptance criteria");
    for id in 1..=CRITERIA {
        let start = Instant::now();
        let outcome = run_criterion(id, &config, &suite);
        println!("{outcome} ({:.1}s)", start.elapsed().as_secs_f64());
        failed += usize::from(!outcome.passed);
    }
    println!("\nacceptance result: {} passed; {failed} failed\n", CRITERIA - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
