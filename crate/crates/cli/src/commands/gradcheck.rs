//! `gradcheck`: run the finite-difference gradient suite and report one
//! line per check; any failure exits with the numeric-failure status.

use sungold::gradcheck::run_all;

use crate::common::{numeric, CliResult};
use crate::GradcheckArgs;

/// Draw count per check, matching the acceptance bar for the suite.
const DRAWS: usize = 20;

pub fn run(args: GradcheckArgs) -> CliResult<()> {
    let summaries = run_all(args.seed, DRAWS)?;
    let mut failed = 0usize;
    for s in &summaries {
        println!("{s}");
        if !s.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        return Err(numeric(format!("{failed} gradient check(s) failed")));
    }
    println!("all gradient checks passed");
    Ok(())
}
