// Runs every scripted scenario and prints its checks and headline numbers.
// The same reports come out of `chainpki sim <scenario>`.
//
// ```sh
// cargo run -p chainpki --example use_case_scenarios
// ```

use std::error::Error;

use chainpki::simnet::{run, verdicts_by_sender, Scenario, SimConfig};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for scenario in Scenario::ALL {
        let report = run(&SimConfig::new(scenario))?;
        println!("== {scenario} ({} ticks)", report.ticks_run);
        for check in &report.checks {
            println!(
                "  [{}] {}: {}",
                if check.passed { "PASS" } else { "FAIL" },
                check.name,
                check.detail
            );
        }
        if scenario != Scenario::Convergence {
            for (sender, verdicts) in verdicts_by_sender(&report) {
                println!("  {sender}: {verdicts:?}");
            }
        }
        for note in &report.notes {
            println!("  note: {note}");
        }
        if !report.passed {
            return Err(format!("{scenario} failed").into());
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
