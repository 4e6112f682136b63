//! Runs the default synthetic benchmark and prints the metrics table.

use openset_bank::experiment::{run_experiment, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::default();
    let start = std::time::Instant::now();
    let report = run_experiment(&config)?;
    print!("{}", report.to_csv());
    println!();
    println!("baseline accuracy:   {:?}", report.baseline_accuracy);
    println!("assignment accuracy: {:?}", report.final_assignment_accuracy());
    println!(
        "selection precision: {:?} (chance {:?})",
        report.selection.precision,
        report.selection.chance_rate()
    );
    println!("elapsed: {:.2?}", start.elapsed());
    Ok(())
}
