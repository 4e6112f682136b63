//! Saves a bank to JSON and reloads it bit for bit.

use openset_bank::experiment::{run_experiment, ExperimentConfig};
use openset_bank::MemoryBank;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig {
        iterations: 20,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&config)?;
    let bank = report.final_bank.expect("bank after a non-empty run");
    let bytes = bank.snapshot();
    let path = std::env::temp_dir().join("openset_bank_example.json");
    std::fs::write(&path, &bytes)?;
    let loaded = MemoryBank::load_snapshot(&std::fs::read(&path)?)?;
    println!("wrote {} bytes to {}", bytes.len(), path.display());
    println!("identical after reload: {}", loaded == bank);
    println!("snapshot re-serializes identically: {}", loaded.snapshot() == bytes);
    Ok(())
}
